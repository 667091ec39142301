//! Polynomial filters for rank counting.
//!
//! The ramp surrogate `hspec` is approximated by a low-degree Chebyshev
//! expansion `q1`, then sharpened by composing with a smooth monotone
//! step `q2` of degree 2p+1, giving the composite filter `q2(q1(x))`.
//! A plain Chebyshev expansion of the discontinuous high-pass indicator
//! serves as the comparison baseline.
//!
//! Everything here works on [0,1]; the affine map s = 2x−1 onto the
//! Chebyshev domain is internal and never exposed.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

// ───────────────────────── thresholds and the ramp ─────────────────────────

/// The pair of thresholds 0 ≤ c2 < c1 ≤ 1 defining the ramp.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    c1: f64,
    c2: f64,
}

impl Thresholds {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidThresholds("thresholds must be finite".into()));
        }
        if !(0.0 <= c2 && c2 < c1 && c1 <= 1.0) {
            return Err(Error::InvalidThresholds(format!(
                "need 0 <= c2 < c1 <= 1, got c1={c1}, c2={c2}"
            )));
        }
        Ok(Thresholds { c1, c2 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Midpoint (c1+c2)/2, the cut used by the deterministic protocol and
    /// the high-pass baseline.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.c1 + self.c2)
    }
}

/// Piecewise-linear ramp: 1 above c1, 0 below c2, linear in between.
pub fn hspec(x: f64, th: &Thresholds) -> f64 {
    if x > th.c1 {
        1.0
    } else if x < th.c2 {
        0.0
    } else {
        (x - th.c2) / (th.c1 - th.c2)
    }
}

// ───────────────────────── measurement grids ─────────────────────────

/// The fixed 10,001-point uniform grid on [0,1] plus the two breakpoints.
pub fn standard_grid(th: &Thresholds) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=10_000).map(|i| i as f64 / 10_000.0).collect();
    g.push(th.c1);
    g.push(th.c2);
    g
}

/// Sup of |f − hspec| over the standard grid.
pub fn sup_error_full(f: impl Fn(f64) -> f64, th: &Thresholds) -> f64 {
    standard_grid(th)
        .into_iter()
        .map(|x| (f(x) - hspec(x, th)).abs())
        .fold(0.0, f64::max)
}

/// Sup of |f − hspec| over the standard grid restricted to [0,c2] ∪ [c1,1].
pub fn sup_error_outside(f: impl Fn(f64) -> f64, th: &Thresholds) -> f64 {
    standard_grid(th)
        .into_iter()
        .filter(|&x| x <= th.c2 || x >= th.c1)
        .map(|x| (f(x) - hspec(x, th)).abs())
        .fold(0.0, f64::max)
}

// ───────────────────────── Chebyshev expansions ─────────────────────────

/// A truncated Chebyshev series on [0,1]: with s = 2x−1,
/// q(x) = a₀/2 + Σ_{j=1}^{d} a_j T_j(s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebyshevExpansion {
    pub degree: usize,
    /// a₀..a_d; the halving of a₀ happens at evaluation time.
    pub coeffs: Vec<f64>,
    /// Sup distance to the fitted target over the standard grid.
    pub achieved_sup_error: f64,
}

impl ChebyshevExpansion {
    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let s = 2.0 * x - 1.0;
        let a = &self.coeffs;
        let mut b1 = 0.0f64;
        let mut b2 = 0.0f64;
        for j in (1..=self.degree).rev() {
            let b = 2.0 * s * b1 - b2 + a[j];
            b2 = b1;
            b1 = b;
        }
        s * b1 - b2 + 0.5 * a[0]
    }

    /// |a₀|/2 + Σ_{j≥1} |a_j|; bounds the value anywhere on [0,1] and the
    /// growth of the quantization error through the matrix recurrence.
    pub fn coefficient_mass(&self) -> f64 {
        0.5 * self.coeffs[0].abs() + self.coeffs[1..].iter().map(|a| a.abs()).sum::<f64>()
    }
}

/// Chebyshev–Gauss quadrature fit of `f` at degree d, using 4·(d+1) nodes:
/// a_i = (2/K) Σ_k f(x_k) cos(i·θ_k) with θ_k = π(k+½)/K, x_k = (cos θ_k+1)/2.
fn fit_at_degree(f: impl Fn(f64) -> f64, d: usize) -> Vec<f64> {
    let k_nodes = 4 * (d + 1);
    let samples: Vec<(f64, f64)> = (0..k_nodes)
        .map(|k| {
            let theta = std::f64::consts::PI * (k as f64 + 0.5) / k_nodes as f64;
            let x = 0.5 * (theta.cos() + 1.0);
            (theta, f(x))
        })
        .collect();
    (0..=d)
        .map(|i| {
            let mut s = 0.0;
            for &(theta, fx) in &samples {
                s += fx * (i as f64 * theta).cos();
            }
            2.0 * s / k_nodes as f64
        })
        .collect()
}

/// Minimal-degree Chebyshev fit of the ramp: tries d = 1, 2, … and returns
/// the first expansion whose grid sup error is at most `target_err`.
pub fn fit_q1(th: &Thresholds, target_err: f64, max_degree: usize) -> Result<ChebyshevExpansion> {
    if !(target_err > 0.0 && target_err < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "target error must lie in (0, 0.5), got {target_err}"
        )));
    }
    if max_degree < 1 {
        return Err(Error::InvalidConfig("max_degree must be at least 1".into()));
    }
    for d in 1..=max_degree {
        let coeffs = fit_at_degree(|x| hspec(x, th), d);
        let q = ChebyshevExpansion { degree: d, coeffs, achieved_sup_error: 0.0 };
        let err = sup_error_full(|x| q.eval(x), th);
        if err <= target_err {
            return Ok(ChebyshevExpansion { achieved_sup_error: err, ..q });
        }
    }
    Err(Error::DegreeExhausted { max_degree, target: target_err })
}

/// Chebyshev expansion of the high-pass indicator 1(x ≥ (c1+c2)/2) at the
/// requested degree, via the closed-form coefficients of a step function:
/// with θ* = arccos(2t*−1), a₀ = 2θ*/π and a_j = 2·sin(jθ*)/(jπ).
///
/// No error target applies; the recorded sup error is measured against the
/// indicator on the standard grid and may be large.
pub fn fit_highpass_baseline(th: &Thresholds, degree: usize) -> Result<ChebyshevExpansion> {
    if degree < 1 {
        return Err(Error::InvalidConfig("baseline degree must be at least 1".into()));
    }
    let t_star = th.midpoint();
    let theta_star = (2.0 * t_star - 1.0).acos();
    let mut coeffs = Vec::with_capacity(degree + 1);
    coeffs.push(2.0 * theta_star / std::f64::consts::PI);
    for j in 1..=degree {
        coeffs.push(2.0 * (j as f64 * theta_star).sin() / (j as f64 * std::f64::consts::PI));
    }
    let q = ChebyshevExpansion { degree, coeffs, achieved_sup_error: 0.0 };
    let indicator = |x: f64| if x >= t_star { 1.0 } else { 0.0 };
    let err = standard_grid(th)
        .into_iter()
        .map(|x| (q.eval(x) - indicator(x)).abs())
        .fold(0.0, f64::max);
    Ok(ChebyshevExpansion { achieved_sup_error: err, ..q })
}

// ───────────────────────── the smooth step q2 ─────────────────────────

/// Monomial coefficients of q2 as exact integers:
/// q2(x) = (1/B(p+1,p+1)) ∫₀ˣ tᵖ(1−t)ᵖ dt, so the coefficient of
/// x^{p+k+1} is binom(p,k)·(−1)ᵏ/(p+k+1) · (2p+1)!/(p!)², an integer.
pub fn q2_coefficients_exact(p: usize) -> Result<Vec<i128>> {
    if p > 30 {
        return Err(Error::OrderOutOfRange { p });
    }
    // (2p+1)!/(p!)² = (2p+1)·binom(2p,p), computed exactly.
    let scale: i128 = (2 * p as i128 + 1) * binom_i128(2 * p, p);
    let mut coeffs = vec![0i128; 2 * p + 2];
    for k in 0..=p {
        let num = binom_i128(p, k) * scale;
        let den = (p + k + 1) as i128;
        debug_assert_eq!(num % den, 0, "q2 coefficients are integers");
        let sign = if k % 2 == 0 { 1 } else { -1 };
        coeffs[p + k + 1] = sign * (num / den);
    }
    Ok(coeffs)
}

/// Same coefficients converted to reals (conversion may round once the
/// integers exceed 2⁵³, which is acceptable for evaluation).
pub fn q2_coefficients(p: usize) -> Result<Vec<f64>> {
    Ok(q2_coefficients_exact(p)?.into_iter().map(|c| c as f64).collect())
}

fn binom_i128(n: usize, k: usize) -> i128 {
    let k = k.min(n - k.min(n));
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// Horner evaluation of a monomial-coefficient polynomial (c[k] is the
/// coefficient of x^k).
pub fn eval_monomial(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Evaluates q2 through its binomial-tail form
/// q2(z) = Σ_{j=p+1}^{2p+1} C(2p+1,j) z^j (1−z)^{2p+1−j},
/// the regularized incomplete-beta identity for the same polynomial.
///
/// On [0,1] every term is nonnegative, so this form cannot overshoot the
/// certified range the way Horner on the monomial coefficients can (their
/// mass grows like 2^{3p} and the cancellation noise at p ≥ 7 exceeds the
/// 1e−12 range certificate).
pub fn eval_q2(p: usize, z: f64) -> f64 {
    let deg = 2 * p + 1;
    let w = 1.0 - z;
    let mut s = 0.0;
    for j in (p + 1)..=deg {
        let c = binom_i128(deg, j) as f64;
        s += c * z.powi(j as i32) * w.powi((deg - j) as i32);
    }
    s
}

// ───────────────────────── composite filter ─────────────────────────

/// The composite filter q2(q1(x)): a ramp fit sharpened by the smooth step.
///
/// The stored q1 is range-normalized: after fitting, if its grid range
/// exits [0,1] it is remapped affinely onto [0,1]. Without this the raw
/// overshoot (the fit is only sup-accurate to 0.1) lands outside the domain
/// where q2 is a [0,1] → [0,1] step, and for even p the composite provably
/// exceeds 1 there. `achieved_sup_error` of the stored q1 is re-measured
/// after normalization.
#[derive(Debug, Clone)]
pub struct CompositeFilter {
    th: Thresholds,
    pub p: usize,
    pub q1: ChebyshevExpansion,
    /// Monomial coefficients of q2 (length 2p+2), kept for serialization
    /// and for the matrix-side Horner scheme.
    pub q2_coeffs: Vec<f64>,
}

impl CompositeFilter {
    pub fn thresholds(&self) -> &Thresholds {
        &self.th
    }

    pub fn total_degree(&self) -> usize {
        self.q1.degree * (2 * self.p + 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_q2(self.p, self.q1.eval(x))
    }
}

/// Builds the composite filter: fit q1 (minimal degree unless one is
/// forced), range-normalize it, attach the q2 coefficients.
pub fn build_composite(
    th: &Thresholds,
    p: usize,
    target_err: f64,
    max_degree: usize,
    forced_q1_degree: Option<usize>,
) -> Result<CompositeFilter> {
    if p > 30 {
        return Err(Error::OrderOutOfRange { p });
    }
    let raw = match forced_q1_degree {
        None => fit_q1(th, target_err, max_degree)?,
        Some(d) => {
            if d < 1 {
                return Err(Error::InvalidConfig("q1 degree must be at least 1".into()));
            }
            let coeffs = fit_at_degree(|x| hspec(x, th), d);
            let q = ChebyshevExpansion { degree: d, coeffs, achieved_sup_error: 0.0 };
            let err = sup_error_full(|x| q.eval(x), th);
            ChebyshevExpansion { achieved_sup_error: err, ..q }
        }
    };
    let q1 = normalize_range(raw, th);
    Ok(CompositeFilter { th: *th, p, q1, q2_coeffs: q2_coefficients(p)? })
}

/// Affinely remaps an expansion so its standard-grid range lies in [0,1].
/// A no-op when the range is already inside.
fn normalize_range(q: ChebyshevExpansion, th: &Thresholds) -> ChebyshevExpansion {
    let grid = standard_grid(th);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in &grid {
        let v = q.eval(x);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo >= 0.0 && hi <= 1.0 {
        return q;
    }
    let alpha = 1.0 / (hi - lo);
    let beta = -lo * alpha;
    let mut coeffs = q.coeffs;
    for a in coeffs.iter_mut() {
        *a *= alpha;
    }
    // The evaluation convention halves a₀, so the constant shift enters
    // doubled.
    coeffs[0] += 2.0 * beta;
    let out = ChebyshevExpansion { degree: q.degree, coeffs, achieved_sup_error: 0.0 };
    let err = sup_error_full(|x| out.eval(x), th);
    ChebyshevExpansion { achieved_sup_error: err, ..out }
}

/// Scalar evaluation of the composite filter.
pub fn eval_filter(f: &CompositeFilter, x: f64) -> f64 {
    f.eval(x)
}

// ───────────────────────── filter selection ─────────────────────────

/// The filter a protocol run applies to the matrix.
#[derive(Debug, Clone)]
pub enum RankFilter {
    Composite(CompositeFilter),
    /// High-pass Chebyshev baseline (the p = 0 composite with a forced
    /// indicator target rather than the ramp).
    Baseline(ChebyshevExpansion),
}

/// Compact description of a filter, embedded in protocol reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSummary {
    pub kind: String,
    pub c1: f64,
    pub c2: f64,
    pub p: Option<usize>,
    pub q1_degree: usize,
    pub total_degree: usize,
    pub achieved_sup_error: f64,
}

impl RankFilter {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RankFilter::Composite(f) => f.eval(x),
            RankFilter::Baseline(q) => q.eval(x),
        }
    }

    pub fn total_degree(&self) -> usize {
        match self {
            RankFilter::Composite(f) => f.total_degree(),
            RankFilter::Baseline(q) => q.degree,
        }
    }

    pub fn summary(&self, th: &Thresholds) -> FilterSummary {
        match self {
            RankFilter::Composite(f) => FilterSummary {
                kind: "composite".into(),
                c1: th.c1(),
                c2: th.c2(),
                p: Some(f.p),
                q1_degree: f.q1.degree,
                total_degree: f.total_degree(),
                achieved_sup_error: f.q1.achieved_sup_error,
            },
            RankFilter::Baseline(q) => FilterSummary {
                kind: "baseline".into(),
                c1: th.c1(),
                c2: th.c2(),
                p: None,
                q1_degree: q.degree,
                total_degree: q.degree,
                achieved_sup_error: q.achieved_sup_error,
            },
        }
    }
}

// ───────────────────────── serialization ─────────────────────────

/// On-disk form of a composite filter.
#[derive(Debug, Serialize, Deserialize)]
struct FilterDocument {
    c1: f64,
    c2: f64,
    p: usize,
    q1_degree: usize,
    q1_coeffs: Vec<f64>,
    q2_coeffs: Vec<f64>,
    achieved_sup_error: f64,
}

pub fn write_filter_json(path: &Path, f: &CompositeFilter) -> Result<()> {
    let doc = FilterDocument {
        c1: f.th.c1(),
        c2: f.th.c2(),
        p: f.p,
        q1_degree: f.q1.degree,
        q1_coeffs: f.q1.coeffs.clone(),
        q2_coeffs: f.q2_coeffs.clone(),
        achieved_sup_error: f.q1.achieved_sup_error,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_filter_json(path: &Path) -> Result<CompositeFilter> {
    let doc: FilterDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let th = Thresholds::new(doc.c1, doc.c2)?;
    if doc.q1_coeffs.len() != doc.q1_degree + 1 {
        return Err(Error::InvalidConfig(format!(
            "q1 coefficient count {} does not match degree {}",
            doc.q1_coeffs.len(),
            doc.q1_degree
        )));
    }
    if doc.q2_coeffs.len() != 2 * doc.p + 2 {
        return Err(Error::InvalidConfig(format!(
            "q2 coefficient count {} does not match p = {}",
            doc.q2_coeffs.len(),
            doc.p
        )));
    }
    Ok(CompositeFilter {
        th,
        p: doc.p,
        q1: ChebyshevExpansion {
            degree: doc.q1_degree,
            coeffs: doc.q1_coeffs,
            achieved_sup_error: doc.achieved_sup_error,
        },
        q2_coeffs: doc.q2_coeffs,
    })
}

// ───────────────────────── tests ─────────────────────────
