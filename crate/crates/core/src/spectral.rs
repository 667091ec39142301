//! Dense symmetric matrices, eigendecomposition, generalized rank, and
//! positive-semidefinite square-root factorization.

use crate::error::{Error, Result};
use crate::util::{dot, norm2, splitmix64};
use nalgebra::DMatrix;

// ───────────────────────── symmetric matrices ─────────────────────────

/// A dense real symmetric matrix, stored row-major.
///
/// Symmetry is a construction invariant: `new` rejects inputs whose (i,j)
/// and (j,i) entries differ in any bit, and every operation provided here
/// preserves exact symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, enforcing exact symmetry.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let upper = entries[i * n + j];
                let lower = entries[j * n + i];
                if upper != lower && !(upper.is_nan() && lower.is_nan()) {
                    return Err(Error::NotSymmetric { i, j, upper, lower });
                }
            }
        }
        Ok(SymMatrix { n, data: entries })
    }

    /// The zero matrix of size n.
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(SymMatrix { n, data: vec![0.0; n * n] })
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut m = SymMatrix::zeros(n)?;
        for i in 0..n {
            m.data[i * n + i] = diag[i];
        }
        Ok(m)
    }

    /// Fills the upper triangle (including the diagonal) from `f` and
    /// mirrors it, so the result is exactly symmetric by construction.
    pub fn from_fn_symmetric(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = SymMatrix::zeros(n)?;
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        Ok(m)
    }

    /// Sum of rank-one terms `c cᵀ` over the given columns, each of length n.
    pub fn from_outer_products(n: usize, columns: &[Vec<f64>]) -> Result<Self> {
        for c in columns {
            if c.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.len() });
            }
        }
        SymMatrix::from_fn_symmetric(n, |i, j| {
            let mut s = 0.0;
            for c in columns {
                s += c[i] * c[j];
            }
            s
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Matrix-vector product `Av`, accumulated in ascending column order.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * v[j];
            }
            out[i] = s;
        }
        Ok(out)
    }

    /// Entrywise sum; both operands must have the same size.
    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(SymMatrix { n: self.n, data })
    }

    /// Entrywise scaling.
    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// Largest entry magnitude.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Frobenius distance to another matrix of the same size.
    pub fn frobenius_distance(&self, other: &SymMatrix) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        let mut s = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = a - b;
            s += d * d;
        }
        Ok(s.sqrt())
    }
}

// ───────────────────────── eigendecomposition ─────────────────────────

/// Full eigendecomposition of a symmetric matrix, eigenvalues in
/// descending order. Eigenvector k occupies `vectors[k*n..(k+1)*n]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    n: usize,
    eigenvalues: Vec<f64>,
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The k-th eigenvector (paired with the k-th eigenvalue).
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Builds `V g(Λ) Vᵀ` for a scalar function applied to the eigenvalues.
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        let cols: Vec<Vec<f64>> = (0..self.n)
            .map(|k| {
                let gk = g(self.eigenvalues[k]);
                self.vector(k).iter().map(|&x| x * gk).collect()
            })
            .collect();
        // Σ g(σ_k) v_k v_kᵀ, grouping the scalar with one factor each.
        SymMatrix::from_fn_symmetric(self.n, |i, j| {
            let mut s = 0.0;
            for k in 0..self.n {
                s += cols[k][i] * self.vectors[k * self.n + j];
            }
            s
        })
    }
}

/// Eigendecomposition of a symmetric matrix. Fails with a solver error if
/// the iteration cap is reached before convergence.
pub fn eigh(a: &SymMatrix) -> Result<EigenDecomposition> {
    let n = a.n;
    let max_iter = 60 * n + 600;
    let dm = DMatrix::from_row_slice(n, n, &a.data);
    let se = nalgebra::SymmetricEigen::try_new(dm, f64::EPSILON, max_iter)
        .ok_or(Error::SolverFailure { iterations: max_iter })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (k, &src) in order.iter().enumerate() {
        eigenvalues.push(se.eigenvalues[src]);
        for i in 0..n {
            vectors[k * n + i] = se.eigenvectors[(i, src)];
        }
    }
    Ok(EigenDecomposition { n, eigenvalues, vectors })
}

// ───────────────────────── generalized rank ─────────────────────────

/// Number of eigenvalues strictly greater than the threshold `c`.
///
/// At `c = 0` exactly, a tolerance of 1e-10 is applied so that zero
/// eigenvalues perturbed by roundoff are not counted.
pub fn generalized_rank(a: &SymMatrix, c: f64) -> Result<usize> {
    if !c.is_finite() {
        return Err(Error::InvalidThresholds(format!("threshold must be finite, got {c}")));
    }
    let threshold = if c == 0.0 { 1e-10 } else { c };
    let eig = eigh(a)?;
    Ok(eig.eigenvalues().iter().filter(|&&s| s > threshold).count())
}

// ───────────────────────── PSD square root ─────────────────────────

/// Factors a PSD matrix as `A ≈ B Bᵀ` with at most `rank_cap` columns.
///
/// Column i is `v_i √σ_i` for each eigenvalue `σ_i > tol`. Fails if any
/// eigenvalue is below `-tol` (not PSD) or if more than `rank_cap`
/// eigenvalues exceed `tol`.
pub fn psd_sqrt_factor(a: &SymMatrix, rank_cap: usize, tol: f64) -> Result<Vec<Vec<f64>>> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be finite and nonnegative, got {tol}")));
    }
    let eig = eigh(a)?;
    let sigma_min = *eig.eigenvalues().last().expect("n >= 1");
    if sigma_min < -tol {
        return Err(Error::NotPsd { sigma_min, tol });
    }
    let found = eig.eigenvalues().iter().filter(|&&s| s > tol).count();
    if found > rank_cap {
        return Err(Error::RankCapExceeded { found, cap: rank_cap });
    }
    let mut columns = Vec::with_capacity(found);
    for k in 0..found {
        let root = eig.eigenvalues()[k].sqrt();
        columns.push(eig.vector(k).iter().map(|&x| x * root).collect());
    }
    Ok(columns)
}

// ───────────────────────── operator norm estimate ─────────────────────────

/// Power-iteration estimate of the operator norm of a symmetric operator
/// given only as a matvec closure. The start vector is derived from a
/// fixed seed so the estimate is deterministic.
pub fn operator_norm_estimate(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    iters: usize,
    tol: f64,
) -> f64 {
    let mut state = 0x6A09_E667_F3BC_C908u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| ((splitmix64(&mut state) >> 11) as f64) * 2f64.powi(-52) - 1.0)
        .collect();
    let nv = norm2(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = 0.0f64;
    for _ in 0..iters {
        let w = apply(&v);
        let rayleigh = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.iter().map(|&x| x / nw).collect();
        if (rayleigh - lambda).abs() <= tol * rayleigh.abs().max(1.0) {
            return rayleigh.abs();
        }
        lambda = rayleigh;
    }
    lambda.abs()
}

// ───────────────────────── tests ─────────────────────────
