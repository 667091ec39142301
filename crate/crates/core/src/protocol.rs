//! The two rank-estimation protocols.
//!
//! Randomized: machine 1 draws shared Gaussian probes from the public
//! coin, the cluster applies a polynomial filter of the shard sum to each
//! probe through blackboard broadcasts, and the averaged squared norm
//! estimates the number of eigenvalues above the threshold. Deterministic:
//! every machine but the first ships a quantized low-rank factor of its
//! shard and machine 1 counts eigenvalues of the reassembled sum.
//!
//! All traffic flows through [`Blackboard`], so `bits_used` in the reports
//! is the exact communication cost; the `predicted_*_bits` functions give
//! the same totals in closed form.

use crate::board::{bits_for_levels, next_pow2, Blackboard, Cluster, Quantization};
use crate::error::{Error, Result};
use crate::filter::{
    build_composite, fit_highpass_baseline, ChebyshevExpansion, FilterSummary, RankFilter,
    Thresholds,
};
use crate::spectral::{generalized_rank, psd_sqrt_factor, SymMatrix};
use crate::util::{ceil_log2_u128, dot};
use serde::{Deserialize, Serialize};

// ───────────────────────── distributed Chebyshev matvec ─────────────────────────

/// Applies q(A)·v for A = Σ_i A_i through the board, one Clenshaw step per
/// broadcast round.
///
/// Round structure, repeated d+1 times: machine 1 broadcasts the current
/// recurrence vector (starting from b_{d+1} = 0), then every machine posts
/// the product of its shard with the broadcast it sees. With S = 2A − I,
/// machine 1 folds the posted products into
/// b_j = (4·Σ_i A_i b_{j+1} − 2·b_{j+1}) − b_{j+2} + a_j·v
/// and finishes with ½(b_0 − b_2). Every value entering the recurrence is
/// the transmitted (quantized) copy, so all machines stay consistent.
pub fn distributed_cheb_matvec(
    cluster: &Cluster,
    board: &mut Blackboard,
    q: &ChebyshevExpansion,
    v: &[f64],
    declared_range: Option<f64>,
) -> Result<Vec<f64>> {
    let n = cluster.n();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let a = &q.coeffs;
    board.advance_round();
    let mut top = board.post_vector(1, &vec![0.0; n], declared_range)?; // b_{j+1}
    let mut prev = vec![0.0; n]; // b_{j+2}
    for j in (0..=q.degree).rev() {
        board.advance_round();
        let seen = board
            .visible_from(1)
            .expect("coordinator broadcast is visible one round after posting")
            .to_vec();
        for i in 1..=cluster.m() {
            let product = cluster.local_matvec(i, &seen)?;
            board.post_vector(i, &product, declared_range)?;
        }
        board.advance_round();
        let mut sum = vec![0.0; n];
        for i in 1..=cluster.m() {
            let w = board
                .visible_from(i)
                .expect("every machine posted its product last round");
            for k in 0..n {
                sum[k] += w[k];
            }
        }
        let mut b = vec![0.0; n];
        for k in 0..n {
            b[k] = ((4.0 * sum[k] - 2.0 * top[k]) - prev[k]) + a[j] * v[k];
        }
        if j == 0 {
            for k in 0..n {
                b[k] = 0.5 * (b[k] - prev[k]);
            }
            return Ok(b);
        }
        let posted = board.post_vector(1, &b, declared_range)?;
        prev = top;
        top = posted;
    }
    unreachable!("the j = 0 step returns")
}

// ───────────────────────── randomized protocol ─────────────────────────

/// Which polynomial filter the randomized protocol applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FilterChoice {
    /// Sharpened ramp q2∘q1 of composition order p.
    Composite { p: usize },
    /// Plain Chebyshev fit of the high-pass indicator at the given degree.
    Baseline { degree: usize },
}

/// How the composite outer polynomial is applied to the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalScheme {
    /// Horner on q2's monomial coefficients: 2p+1 inner matvecs, the
    /// accumulator multiplied by q1(A) between coefficient adds.
    Horner,
    /// Explicit powers of q1(A) applied to the probe, combined at the end.
    Powers,
}

fn default_scheme() -> EvalScheme {
    EvalScheme::Horner
}
fn default_q1_target() -> f64 {
    0.1
}
fn default_q1_max_degree() -> usize {
    200
}
fn default_t_reps() -> usize {
    32
}

/// Full description of one randomized run. Serializable so runs can be
/// launched from a config file and echoed in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomizedConfig {
    pub c1: f64,
    pub c2: f64,
    pub filter: FilterChoice,
    /// Number of Gaussian probes averaged.
    #[serde(default = "default_t_reps")]
    pub t_reps: usize,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: EvalScheme,
    /// Sup-error target for the inner ramp fit.
    #[serde(default = "default_q1_target")]
    pub q1_target_err: f64,
    #[serde(default = "default_q1_max_degree")]
    pub q1_max_degree: usize,
    /// Pin the inner degree instead of searching for the minimal one.
    #[serde(default)]
    pub forced_q1_degree: Option<usize>,
    /// Override the analytic per-post range bound.
    #[serde(default)]
    pub declared_range: Option<f64>,
}

impl RandomizedConfig {
    pub fn new(c1: f64, c2: f64, filter: FilterChoice, t_reps: usize, seed: u64) -> Self {
        RandomizedConfig {
            c1,
            c2,
            filter,
            t_reps,
            seed,
            scheme: default_scheme(),
            q1_target_err: default_q1_target(),
            q1_max_degree: default_q1_max_degree(),
            forced_q1_degree: None,
            declared_range: None,
        }
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Thresholds::new(self.c1, self.c2)
    }
}

/// Outcome of one randomized run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    /// The estimate as posted to the board (quantized in fixed-point mode).
    pub rhat: f64,
    /// rhat rounded to the nearest admissible rank in 0..=n.
    pub rhat_rounded: usize,
    #[serde(rename = "T")]
    pub t_reps: usize,
    /// Per-probe squared norms ‖f(A)g_t‖²; rhat is their mean.
    pub y_sq_norms: Vec<f64>,
    /// Exact ledger total charged by this run.
    pub bits_used: u64,
    pub seed: u64,
    /// Broadcast rounds consumed: T · passes · (d+1).
    pub rounds: usize,
    /// Range bound every post declared.
    pub declared_range: f64,
    pub filter: FilterSummary,
}

/// The analytic range bound declared for every vector posted during a
/// randomized run, making bit totals a function of configuration alone.
///
/// The Clenshaw intermediates satisfy ‖b_j‖∞ ≤ (d+1)·Σ|a|·‖input‖∞, the
/// outer Horner accumulator is bounded by the mass of q2's coefficients
/// with a 1.1 per-pass slack for the inner fit overshoot, and 2√n + 32
/// covers the Gaussian probe norms. Rounded up to a power of two.
pub fn analytic_declared_range(filter: &RankFilter, n: usize) -> f64 {
    let (d, passes, inner_mass, outer_mass) = match filter {
        RankFilter::Composite(f) => (
            f.q1.degree,
            2 * f.p + 1,
            f.q1.coefficient_mass(),
            f.q2_coeffs.iter().map(|c| c.abs()).sum::<f64>(),
        ),
        RankFilter::Baseline(q) => (q.degree, 1, q.coefficient_mass(), 1.0),
    };
    let probe = 2.0 * (n as f64).sqrt() + 32.0;
    next_pow2((d + 1) as f64 * inner_mass * 1.1f64.powi(passes as i32) * outer_mass * probe)
}

fn build_rank_filter(cfg: &RandomizedConfig, th: &Thresholds) -> Result<RankFilter> {
    match cfg.filter {
        FilterChoice::Composite { p } => Ok(RankFilter::Composite(build_composite(
            th,
            p,
            cfg.q1_target_err,
            cfg.q1_max_degree,
            cfg.forced_q1_degree,
        )?)),
        FilterChoice::Baseline { degree } => {
            Ok(RankFilter::Baseline(fit_highpass_baseline(th, degree)?))
        }
    }
}

/// Runs the randomized protocol on a fresh board: seeds the public coin,
/// applies the filter to T shared Gaussian probes through the cluster, and
/// posts the averaged squared norm as the answer.
pub fn randomized_rank_estimate(
    cluster: &Cluster,
    board: &mut Blackboard,
    cfg: &RandomizedConfig,
) -> Result<EstimateReport> {
    if cfg.t_reps == 0 {
        return Err(Error::InvalidConfig("need at least one probe".into()));
    }
    let th = cfg.thresholds()?;
    cluster.validate_norm()?;
    board.public_coin(cfg.seed)?;
    let filter = build_rank_filter(cfg, &th)?;
    let range = cfg.declared_range.unwrap_or_else(|| analytic_declared_range(&filter, cluster.n()));
    let bits_before = board.ledger().total_bits();
    let n = cluster.n();

    let mut y_sq_norms = Vec::with_capacity(cfg.t_reps);
    for _t in 0..cfg.t_reps {
        let g = board.coin()?.gaussian_vec(n);
        let y = match &filter {
            RankFilter::Baseline(q) => distributed_cheb_matvec(cluster, board, q, &g, Some(range))?,
            RankFilter::Composite(f) => {
                let c = &f.q2_coeffs;
                match cfg.scheme {
                    EvalScheme::Horner => {
                        // y = q2(M)g for M = q1(A), folding one coefficient
                        // per application of M.
                        let top = c[c.len() - 1];
                        let mut acc: Vec<f64> = g.iter().map(|&x| top * x).collect();
                        for k in (0..c.len() - 1).rev() {
                            acc = distributed_cheb_matvec(cluster, board, &f.q1, &acc, Some(range))?;
                            for (ak, &gk) in acc.iter_mut().zip(&g) {
                                *ak += c[k] * gk;
                            }
                        }
                        acc
                    }
                    EvalScheme::Powers => {
                        let mut w = g.clone();
                        let mut y: Vec<f64> = g.iter().map(|&x| c[0] * x).collect();
                        for ck in &c[1..] {
                            w = distributed_cheb_matvec(cluster, board, &f.q1, &w, Some(range))?;
                            for (yk, &wk) in y.iter_mut().zip(&w) {
                                *yk += ck * wk;
                            }
                        }
                        y
                    }
                }
            }
        };
        y_sq_norms.push(dot(&y, &y));
    }
    let mean = y_sq_norms.iter().sum::<f64>() / cfg.t_reps as f64;

    board.advance_round();
    let posted = board.post_vector(1, &[mean], Some(range))?;
    let rhat = posted[0];
    let bits_used = board.ledger().total_bits() - bits_before;
    let (d, passes) = match &filter {
        RankFilter::Composite(f) => (f.q1.degree, 2 * f.p + 1),
        RankFilter::Baseline(q) => (q.degree, 1),
    };
    Ok(EstimateReport {
        rhat,
        rhat_rounded: (rhat.round().max(0.0) as usize).min(n),
        t_reps: cfg.t_reps,
        y_sq_norms,
        bits_used,
        seed: cfg.seed,
        rounds: cfg.t_reps * passes * (d + 1),
        declared_range: range,
        filter: filter.summary(&th),
    })
}

/// Exact bit total of a randomized run in closed form:
/// T·passes·(d+1)·(m+1) posts of n entries plus the one-scalar answer,
/// each entry at ⌈log2(2R/τ + 1)⌉ bits under fixed-point quantization
/// (plus a 16-bit header per post) or 64 bits exact.
pub fn predicted_randomized_bits(
    quant: Quantization,
    n: usize,
    m: usize,
    d: usize,
    passes: usize,
    t_reps: usize,
    declared_range: f64,
) -> u64 {
    let (bpe, header) = match quant {
        Quantization::Exact => (64u64, 0u64),
        Quantization::FixedPoint { tau } => {
            (bits_for_levels(2.0 * declared_range / tau + 1.0), 16u64)
        }
    };
    let posts = (t_reps * passes * (d + 1) * (m + 1)) as u64;
    posts * (n as u64 * bpe + header) + (bpe + header)
}

// ───────────────────────── deterministic protocol ─────────────────────────

/// Outcome of one deterministic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetReport {
    /// Eigenvalue count of the reassembled matrix at the midpoint cut.
    pub rhat: usize,
    pub bits_used: u64,
    /// Grid width each factor entry was shipped at.
    pub bits_per_entry: u64,
    /// The cut (c1+c2)/2 applied to the reassembled matrix.
    pub threshold_used: f64,
}

/// Grid width for factor entries: ⌈log2(12·m·r·n/(c1−c2))⌉, sized so the
/// reassembly error stays below half the threshold gap.
pub fn deterministic_bits_per_entry(n: usize, m: usize, r: usize, th: &Thresholds) -> u64 {
    bits_for_levels(12.0 * (m * r * n) as f64 / (th.c1() - th.c2()))
}

/// Runs the deterministic protocol: machines 2..m post quantized n×2r
/// square-root factors of their shards, machine 1 reassembles the sum and
/// posts the eigenvalue count above the midpoint.
///
/// Every shard must have rank at most 2r; the factor is zero-padded to
/// exactly 2r columns so the traffic is the same for every machine.
pub fn deterministic_rank_estimate(
    cluster: &Cluster,
    board: &mut Blackboard,
    th: &Thresholds,
    r: usize,
) -> Result<DetReport> {
    if r == 0 {
        return Err(Error::InvalidConfig("rank parameter r must be positive".into()));
    }
    let (n, m) = (cluster.n(), cluster.m());
    cluster.validate_norm()?;
    let bits_before = board.ledger().total_bits();
    let bpe = deterministic_bits_per_entry(n, m, r, th);
    let step = 2f64.powi(1 - bpe as i32);

    board.advance_round();
    for i in 2..=m {
        let factor = psd_sqrt_factor(cluster.shard(i, i)?, 2 * r, 1e-9)?;
        let mut flat = Vec::with_capacity(n * 2 * r);
        for col in &factor {
            flat.extend_from_slice(col);
        }
        flat.resize(n * 2 * r, 0.0);
        board.post_grid_vector(i, &flat, step, bpe)?;
    }
    board.advance_round();

    let mut total = cluster.shard(1, 1)?.clone();
    for i in 2..=m {
        let flat = board
            .visible_from(i)
            .expect("every remote machine posted its factor last round");
        let cols: Vec<Vec<f64>> = flat.chunks_exact(n).map(|c| c.to_vec()).collect();
        total = total.add(&SymMatrix::from_outer_products(n, &cols)?)?;
    }
    let rhat = generalized_rank(&total, th.midpoint())?;
    board.post_count(1, rhat, n)?;

    Ok(DetReport {
        rhat,
        bits_used: board.ledger().total_bits() - bits_before,
        bits_per_entry: bpe,
        threshold_used: th.midpoint(),
    })
}

/// Exact bit total of a deterministic run in closed form: m−1 factor posts
/// of n·2r entries with a 16-bit header each, plus the ⌈log2(n+1)⌉-bit
/// answer.
pub fn predicted_deterministic_bits(n: usize, m: usize, r: usize, th: &Thresholds) -> u64 {
    let bpe = deterministic_bits_per_entry(n, m, r, th);
    (m as u64 - 1) * ((n * 2 * r) as u64 * bpe + 16) + ceil_log2_u128(n as u128 + 1) as u64
}

// ───────────────────────── tests ─────────────────────────
