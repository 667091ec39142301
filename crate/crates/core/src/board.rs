//! Simulated m-machine blackboard: every inter-machine message passes
//! through `post_vector`, gets quantized per the channel spec, and has its
//! exact bit cost charged to a ledger. Shared randomness comes from a
//! seeded public coin visible to all machines.
//!
//! The board is single-threaded and round-synchronous: messages posted in
//! round t become readable in rounds after t. Only the previous round's
//! messages are retained (protocols here never need older ones, and long
//! runs would otherwise accumulate gigabytes).

use crate::error::{Error, Result};
use crate::spectral::SymMatrix;
use crate::util::ceil_log2_u128;
use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

// ───────────────────────── quantization ─────────────────────────

/// Channel spec: full-precision scalars at 64 bits each, or a fixed-point
/// grid of step `tau` with a 16-bit per-message range header.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Quantization {
    Exact,
    FixedPoint { tau: f64 },
}

/// Default grid step: the largest power of two at or below
/// 1/(m·d·n·2^{4p}). Power-of-two steps make the rounding exact in binary
/// floating point.
pub fn default_tau(m: usize, d: usize, n: usize, p: usize) -> f64 {
    let prod = (m as u128) * (d as u128) * (n as u128);
    assert!(prod >= 1, "m, d, n must be positive");
    let e = ceil_log2_u128(prod) as i32;
    2f64.powi(-(4 * p as i32) - e)
}

/// Smallest power of two that is >= x (x itself when x is a power of two).
pub(crate) fn next_pow2(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut r = 2f64.powi(x.log2().ceil() as i32);
    while r < x {
        r *= 2.0;
    }
    while r / 2.0 >= x {
        r /= 2.0;
    }
    r
}

/// Smallest integer b with 2^b >= count (bits needed to address `count`
/// grid levels), computed with a float guess and exact adjustment.
pub(crate) fn bits_for_levels(count: f64) -> u64 {
    assert!(count >= 1.0 && count.is_finite());
    let mut b = count.log2().ceil().max(0.0) as i64;
    while b > 0 && 2f64.powi((b - 1) as i32) >= count {
        b -= 1;
    }
    while 2f64.powi(b as i32) < count {
        b += 1;
    }
    b as u64
}

// ───────────────────────── bit ledger ─────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct LedgerRow {
    pub round: u64,
    pub writer: usize,
    pub bits: u64,
}

/// Exact accounting of every bit written to the board.
#[derive(Debug, Clone)]
pub struct BitLedger {
    total_bits: u64,
    rows: Option<Vec<LedgerRow>>,
}

impl BitLedger {
    fn new(record_rows: bool) -> Self {
        BitLedger { total_bits: 0, rows: record_rows.then(Vec::new) }
    }

    fn charge(&mut self, round: u64, writer: usize, bits: u64) {
        self.total_bits += bits;
        if let Some(rows) = &mut self.rows {
            rows.push(LedgerRow { round, writer, bits });
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn rows(&self) -> Option<&[LedgerRow]> {
        self.rows.as_deref()
    }

    /// CSV export with a running total: round,writer,bits,cumulative_bits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let rows = self
            .rows
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("ledger row recording is disabled".into()))?;
        writeln!(w, "round,writer,bits,cumulative_bits")?;
        let mut cum = 0u64;
        for r in rows {
            cum += r.bits;
            writeln!(w, "{},{},{},{}", r.round, r.writer, r.bits, cum)?;
        }
        Ok(())
    }
}

// ───────────────────────── public coin ─────────────────────────

/// Shared random stream every machine observes identically: a
/// counter-based stream cipher keyed by the seed, with Gaussians produced
/// by inverting the normal CDF (a standard rational approximation with
/// relative error below 1.2e-9), so the stream is reproducible from the
/// seed alone in any implementation of the same recipe.
#[derive(Debug, Clone)]
pub struct CoinStream {
    rng: ChaCha8Rng,
}

impl CoinStream {
    pub fn new(seed: u64) -> Self {
        CoinStream { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in the open interval (0,1): (k + 0.5)·2⁻⁵³ for a 53-bit k.
    pub fn uniform01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53)
    }

    pub fn gaussian(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform01())
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }
}

/// Inverse of the standard normal CDF on (0,1) by piecewise rational
/// approximation (central region plus two tail regions).
pub fn inverse_normal_cdf(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "probit input must be strictly inside (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;

    if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    }
}

// ───────────────────────── the blackboard ─────────────────────────

#[derive(Debug, Clone)]
pub struct Message {
    pub writer: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub round: u64,
    pub writer: usize,
    pub len: usize,
    pub range: f64,
    pub tau: f64,
}

#[derive(Debug)]
pub struct Blackboard {
    quant: Quantization,
    round: u64,
    ledger: BitLedger,
    /// Messages posted in the previous round, readable now.
    visible: Vec<Message>,
    /// Messages posted in the current round, readable after the next
    /// advance.
    pending: Vec<Message>,
    coin: Option<CoinStream>,
    trace: Option<Vec<TraceRow>>,
}

impl Blackboard {
    pub fn new(quant: Quantization) -> Result<Self> {
        Self::with_recording(quant, true, false)
    }

    pub fn with_recording(quant: Quantization, record_rows: bool, trace: bool) -> Result<Self> {
        if let Quantization::FixedPoint { tau } = quant {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::InvalidStep(tau));
            }
        }
        Ok(Blackboard {
            quant,
            round: 0,
            ledger: BitLedger::new(record_rows),
            visible: Vec::new(),
            pending: Vec::new(),
            coin: None,
            trace: trace.then(Vec::new),
        })
    }

    pub fn quantization(&self) -> Quantization {
        self.quant
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn ledger(&self) -> &BitLedger {
        &self.ledger
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    /// Closes the current round: its messages become visible, the round
    /// counter advances.
    pub fn advance_round(&mut self) {
        self.visible = std::mem::take(&mut self.pending);
        self.round += 1;
    }

    /// Latest message posted by `writer` in the previous round, if any.
    pub fn visible_from(&self, writer: usize) -> Option<&[f64]> {
        self.visible
            .iter()
            .rev()
            .find(|msg| msg.writer == writer)
            .map(|msg| msg.data.as_slice())
    }

    /// All messages from the previous round, in posting order.
    pub fn visible(&self) -> &[Message] {
        &self.visible
    }

    /// Seeds the shared random stream. Allowed once per run.
    pub fn public_coin(&mut self, seed: u64) -> Result<()> {
        if self.coin.is_some() {
            return Err(Error::CoinAlreadySeeded);
        }
        self.coin = Some(CoinStream::new(seed));
        Ok(())
    }

    pub fn coin(&mut self) -> Result<&mut CoinStream> {
        self.coin.as_mut().ok_or(Error::CoinNotSeeded)
    }

    /// Posts a vector to the board and returns the transmitted (possibly
    /// quantized) copy.
    ///
    /// Fixed-point mode rounds each entry to the nearest multiple of tau
    /// (ties to even) and charges ⌈log2(2R/tau + 1)⌉ bits per entry plus a
    /// 16-bit range header. R defaults to max|v_i| rounded up to the next
    /// power of two; protocols instead pass an analytically derived
    /// `declared_range` so their totals are a function of configuration
    /// alone. Exact mode transmits verbatim at 64 bits per entry.
    pub fn post_vector(
        &mut self,
        writer: usize,
        v: &[f64],
        declared_range: Option<f64>,
    ) -> Result<Vec<f64>> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinitePost);
        }
        let (data, bits, range_used, tau_used) = match self.quant {
            Quantization::Exact => (v.to_vec(), 64 * v.len() as u64, f64::INFINITY, 0.0),
            Quantization::FixedPoint { tau } => {
                let max_abs = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
                let range = match declared_range {
                    Some(r) => {
                        if !(r.is_finite() && r > 0.0) {
                            return Err(Error::InvalidConfig(format!(
                                "declared range must be positive and finite, got {r}"
                            )));
                        }
                        if max_abs > r {
                            return Err(Error::RangeExceeded { value: max_abs, range: r });
                        }
                        r
                    }
                    None => next_pow2(max_abs),
                };
                let bits_per_entry = if range == 0.0 {
                    0
                } else {
                    bits_for_levels(2.0 * range / tau + 1.0)
                };
                let data: Vec<f64> =
                    v.iter().map(|&x| (x / tau).round_ties_even() * tau).collect();
                (data, bits_per_entry * v.len() as u64 + 16, range, tau)
            }
        };
        self.record_post(writer, data, bits, range_used, tau_used)
    }

    /// Posts values already contracted to lie in [−1, 1], rounded onto a
    /// uniform grid of the given step, charging exactly `bits_per_entry`
    /// bits per entry plus the 16-bit header. Used by the deterministic
    /// factor-shipping protocol whose bit width is fixed analytically.
    pub fn post_grid_vector(
        &mut self,
        writer: usize,
        v: &[f64],
        step: f64,
        bits_per_entry: u64,
    ) -> Result<Vec<f64>> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidStep(step));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinitePost);
        }
        for &x in v {
            if x.abs() > 1.0 + step {
                return Err(Error::RangeExceeded { value: x.abs(), range: 1.0 });
            }
        }
        let data: Vec<f64> = v.iter().map(|&x| (x / step).round_ties_even() * step).collect();
        let bits = bits_per_entry * v.len() as u64 + 16;
        self.record_post(writer, data, bits, 1.0, step)
    }

    /// Posts a small integer answer in {0..=max_value}, charged at the
    /// protocol-agreed width ⌈log2(max_value+1)⌉ with no header.
    pub fn post_count(&mut self, writer: usize, value: usize, max_value: usize) -> Result<usize> {
        if value > max_value {
            return Err(Error::InvalidConfig(format!(
                "count {value} exceeds its declared maximum {max_value}"
            )));
        }
        let bits = ceil_log2_u128(max_value as u128 + 1) as u64;
        self.record_post(writer, vec![value as f64], bits, max_value as f64, 0.0)?;
        Ok(value)
    }

    fn record_post(
        &mut self,
        writer: usize,
        data: Vec<f64>,
        bits: u64,
        range: f64,
        tau: f64,
    ) -> Result<Vec<f64>> {
        self.ledger.charge(self.round, writer, bits);
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRow { round: self.round, writer, len: data.len(), range, tau });
        }
        self.pending.push(Message { writer, data: data.clone() });
        Ok(data)
    }
}

// ───────────────────────── machines and shards ─────────────────────────

/// One simulated machine: its 1-based index and its private PSD shard.
#[derive(Debug, Clone)]
struct Machine {
    index: usize,
    shard: SymMatrix,
}

/// The machine ensemble holding A = Σ_i A_i. Each shard is validated PSD
/// (within 1e−9) on construction. Cross-machine shard reads go through
/// `shard(requester, owner)`, which refuses requester ≠ owner.
#[derive(Debug, Clone)]
pub struct Cluster {
    machines: Vec<Machine>,
    n: usize,
}

impl Cluster {
    pub fn new(shards: Vec<SymMatrix>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidConfig("need at least one machine".into()));
        }
        let n = shards[0].n();
        for (i, s) in shards.iter().enumerate() {
            if s.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.n() });
            }
            // Cholesky of A + tol·I succeeds only if σ_min(A) > −tol.
            let mut dm = DMatrix::from_row_slice(n, n, s.entries());
            for k in 0..n {
                dm[(k, k)] += 1e-9;
            }
            if nalgebra::Cholesky::new(dm).is_none() {
                return Err(Error::InvalidSpectrum(format!(
                    "shard of machine {} is not PSD within 1e-9",
                    i + 1
                )));
            }
        }
        let machines = shards
            .into_iter()
            .enumerate()
            .map(|(i, shard)| Machine { index: i + 1, shard })
            .collect();
        Ok(Cluster { machines, n })
    }

    pub fn m(&self) -> usize {
        self.machines.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Access-controlled shard read: machines may only read their own.
    pub fn shard(&self, requester: usize, owner: usize) -> Result<&SymMatrix> {
        if owner == 0 || owner > self.machines.len() {
            return Err(Error::NoSuchMachine(owner));
        }
        if requester != owner {
            return Err(Error::ShardAccessDenied { requester, owner });
        }
        Ok(&self.machines[owner - 1].shard)
    }

    /// Machine `index` applies its own shard to a vector (the local
    /// compute step of a protocol round).
    pub fn local_matvec(&self, index: usize, v: &[f64]) -> Result<Vec<f64>> {
        if index == 0 || index > self.machines.len() {
            return Err(Error::NoSuchMachine(index));
        }
        debug_assert_eq!(self.machines[index - 1].index, index);
        self.machines[index - 1].shard.matvec(v)
    }

    /// Applies A = Σ_i A_i to a vector, combining local products in
    /// ascending machine order (simulation-level helper, zero bits).
    pub fn sum_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.n];
        for mach in &self.machines {
            let w = mach.shard.matvec(v)?;
            for k in 0..self.n {
                acc[k] += w[k];
            }
        }
        Ok(acc)
    }

    /// Power-iteration certificate that ‖Σ_i A_i‖₂ ≤ 1 + 1e−6 (50
    /// iterations, tolerance 1e−6, zero bits charged). Returns the
    /// estimate on success.
    pub fn validate_norm(&self) -> Result<f64> {
        let est = crate::spectral::operator_norm_estimate(
            |v| self.sum_matvec(v).expect("dimensions fixed"),
            self.n,
            50,
            1e-6,
        );
        let bound = 1.0 + 1e-6;
        if est > bound {
            return Err(Error::OperatorNormTooLarge { estimate: est, bound });
        }
        Ok(est)
    }
}

// ───────────────────────── tests ─────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(tau: f64) -> Blackboard {
        Blackboard::new(Quantization::FixedPoint { tau }).unwrap()
    }

    #[test]
    fn grid_values_pass_through_with_three_bits() {
        let mut b = fixed(0.5);
        let out = b.post_vector(1, &[0.0, 0.5], Some(1.0)).unwrap();
        assert_eq!(out, vec![0.0, 0.5]);
        // ⌈log2(2·1/0.5 + 1)⌉ = ⌈log2 5⌉ = 3 bits per entry, plus header.
        assert_eq!(b.ledger().total_bits(), 2 * 3 + 16);
    }

    #[test]
    fn exact_mode_charges_64_per_entry_without_header() {
        let mut b = Blackboard::new(Quantization::Exact).unwrap();
        let v = vec![1.0, -2.5, 3.25, 0.0, 9.9];
        let out = b.post_vector(2, &v, None).unwrap();
        assert_eq!(out, v);
        assert_eq!(b.ledger().total_bits(), 64 * 5);
    }

    #[test]
    fn rounding_error_is_at_most_half_a_step() {
        let tau = 1e-6;
        let mut b = fixed(tau);
        let mut s = 77u64;
        let v: Vec<f64> = (0..500)
            .map(|_| ((splitmix64(&mut s) >> 11) as f64) * 2f64.powi(-52) - 1.0)
            .collect();
        let out = b.post_vector(1, &v, Some(1.0)).unwrap();
        for (x, y) in v.iter().zip(&out) {
            assert!((x - y).abs() <= tau / 2.0 + 1e-18);
            // Transmitted scalars are integer multiples of tau.
            let k = (y / tau).round();
            assert!((y - k * tau).abs() < 1e-18);
        }
    }

    #[test]
    fn rounding_ties_go_to_even() {
        let mut b = fixed(0.5);
        let out = b.post_vector(1, &[0.25, 0.75, -0.25], Some(1.0)).unwrap();
        assert_eq!(out, vec![0.0, 1.0, -0.0]);
    }

    #[test]
    fn self_describing_range_rounds_up_to_power_of_two() {
        let mut b = fixed(0.5);
        b.post_vector(1, &[0.6], None).unwrap(); // R = 1 → ⌈log2 5⌉ = 3
        assert_eq!(b.ledger().total_bits(), 3 + 16);
        let mut b2 = fixed(0.5);
        b2.post_vector(1, &[1.5], None).unwrap(); // R = 2 → ⌈log2 9⌉ = 4
        assert_eq!(b2.ledger().total_bits(), 4 + 16);
    }

    #[test]
    fn non_finite_posts_abort() {
        let mut b = fixed(0.5);
        assert!(matches!(b.post_vector(1, &[f64::NAN], Some(1.0)), Err(Error::NonFinitePost)));
        let mut e = Blackboard::new(Quantization::Exact).unwrap();
        assert!(matches!(
            e.post_vector(1, &[f64::INFINITY], None),
            Err(Error::NonFinitePost)
        ));
    }

    #[test]
    fn exceeding_declared_range_is_an_error() {
        let mut b = fixed(0.01);
        let err = b.post_vector(1, &[3.0], Some(2.0)).unwrap_err();
        assert!(matches!(err, Error::RangeExceeded { .. }));
    }

    #[test]
    fn visibility_starts_on_the_next_round() {
        let mut b = Blackboard::new(Quantization::Exact).unwrap();
        b.advance_round();
        b.post_vector(1, &[42.0], None).unwrap();
        // Not yet readable: posted this round.
        assert!(b.visible_from(1).is_none());
        b.advance_round();
        assert_eq!(b.visible_from(1).unwrap(), &[42.0]);
        assert!(b.visible_from(2).is_none());
        // Retention ends one round later.
        b.advance_round();
        assert!(b.visible_from(1).is_none());
    }

    #[test]
    fn ledger_csv_has_running_total() {
        let mut b = fixed(0.5);
        b.advance_round();
        b.post_vector(1, &[0.5, 0.5], Some(1.0)).unwrap();
        b.advance_round();
        b.post_vector(2, &[0.0], Some(1.0)).unwrap();
        let mut out = Vec::new();
        b.ledger().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "round,writer,bits,cumulative_bits\n1,1,22,22\n2,2,19,41\n"
        );
    }

    #[test]
    fn default_tau_matches_prescription() {
        // 1/(2·4·200·2^36) rounded down to a power of two: 2048 = 2^11
        // covers 1600, so the exponent is −(36 + 11).
        assert_eq!(default_tau(2, 4, 200, 9), 2f64.powi(-47));
        assert_eq!(default_tau(1, 1, 1, 0), 1.0);
        assert_eq!(default_tau(2, 1, 1, 0), 0.5);
    }

    #[test]
    fn coin_streams_are_keyed_and_deterministic() {
        let mut a = CoinStream::new(7);
        let mut b = CoinStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = CoinStream::new(1);
        let mut d = CoinStream::new(2);
        let same = (0..64).filter(|_| c.next_u64() == d.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn reseeding_the_public_coin_is_a_misuse_error() {
        let mut b = Blackboard::new(Quantization::Exact).unwrap();
        assert!(matches!(b.coin(), Err(Error::CoinNotSeeded)));
        b.public_coin(5).unwrap();
        assert!(matches!(b.public_coin(6), Err(Error::CoinAlreadySeeded)));
        assert!(b.coin().is_ok());
    }

    #[test]
    fn gaussian_moments_over_a_million_draws() {
        let mut coin = CoinStream::new(42);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let g = coin.gaussian();
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() <= 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() <= 1e-2, "variance {var}");
    }

    #[test]
    fn probit_matches_known_quantiles() {
        assert!(inverse_normal_cdf(0.5).abs() <= 1e-9);
        assert!((inverse_normal_cdf(0.975) - 1.959963985).abs() <= 1e-6);
        assert!((inverse_normal_cdf(0.025) + 1.959963985).abs() <= 1e-6);
        assert!((inverse_normal_cdf(0.9986501019683699) - 3.0).abs() <= 1e-6);
        for u in [0.001, 0.2, 0.7, 0.999] {
            assert!((inverse_normal_cdf(u) + inverse_normal_cdf(1.0 - u)).abs() <= 1e-8);
        }
    }

    #[test]
    fn cluster_rejects_indefinite_shards() {
        let good = SymMatrix::from_diagonal(&[0.5, 0.2]).unwrap();
        let bad = SymMatrix::from_diagonal(&[0.5, -0.1]).unwrap();
        assert!(Cluster::new(vec![good.clone()]).is_ok());
        assert!(matches!(
            Cluster::new(vec![good, bad]),
            Err(Error::InvalidSpectrum(_))
        ));
    }

    #[test]
    fn cross_machine_shard_reads_are_denied() {
        let a = SymMatrix::from_diagonal(&[0.5, 0.2]).unwrap();
        let b = SymMatrix::from_diagonal(&[0.1, 0.3]).unwrap();
        let cluster = Cluster::new(vec![a, b]).unwrap();
        assert!(cluster.shard(1, 1).is_ok());
        assert!(cluster.shard(2, 2).is_ok());
        let err = cluster.shard(2, 1).unwrap_err();
        assert!(matches!(err, Error::ShardAccessDenied { requester: 2, owner: 1 }));
        assert!(matches!(cluster.shard(1, 3), Err(Error::NoSuchMachine(3))));
    }

    #[test]
    fn norm_validation_accepts_contractive_sums_only() {
        let a = SymMatrix::from_diagonal(&[0.45, 0.3]).unwrap();
        let cluster = Cluster::new(vec![a.clone(), a.clone()]).unwrap();
        let est = cluster.validate_norm().unwrap();
        assert!((est - 0.9).abs() <= 1e-5);
        let big = SymMatrix::from_diagonal(&[0.8, 0.1]).unwrap();
        let c2 = Cluster::new(vec![big.clone(), big]).unwrap();
        assert!(matches!(c2.validate_norm(), Err(Error::OperatorNormTooLarge { .. })));
    }

    #[test]
    fn grid_post_charges_fixed_width_and_rejects_outliers() {
        let mut b = fixed(0.5); // board tau irrelevant for grid posts
        let step = 2.0 / 2f64.powi(8);
        let out = b.post_grid_vector(3, &[0.999, -1.0, 0.125], step, 8).unwrap();
        assert_eq!(b.ledger().total_bits(), 3 * 8 + 16);
        for (x, y) in [0.999f64, -1.0, 0.125].iter().zip(&out) {
            assert!((x - y).abs() <= step / 2.0 + 1e-18);
        }
        assert!(matches!(
            b.post_grid_vector(3, &[1.5], step, 8),
            Err(Error::RangeExceeded { .. })
        ));
    }

    use crate::util::splitmix64;
}
