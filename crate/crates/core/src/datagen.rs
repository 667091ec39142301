//! Instance generators: spiked-covariance sample shards, planted-spectrum
//! shards with known generalized ranks, and orthogonal-ensemble pairs.
//! Every generator is a pure function of its configuration and seed.

use crate::board::CoinStream;
use crate::error::{Error, Result};
use crate::matio;
use crate::spectral::{operator_norm_estimate, SymMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

// ───────────────────────── Haar sampling ─────────────────────────

/// `k` orthonormal columns of length n distributed as the first k columns
/// of a Haar-random orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal signs folded into Q.
fn haar_columns(n: usize, k: usize, coin: &mut CoinStream) -> Vec<Vec<f64>> {
    assert!(k <= n);
    let g = DMatrix::from_fn(n, k, |_, _| coin.gaussian());
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    (0..k)
        .map(|j| {
            let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            (0..n).map(|i| sign * q[(i, j)]).collect()
        })
        .collect()
}

// ───────────────────────── spiked covariance ─────────────────────────

/// Post-generation handling of the operator-norm precondition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    /// Leave sample covariances as drawn.
    None,
    /// If the estimated ‖Σ_i A_i‖₂ exceeds 1, rescale every shard by the
    /// same factor so the spectral structure is preserved.
    Clip,
}

/// Configuration of the spiked-covariance experiment: each sample is
/// x = a + ε with a ~ N(0, λ·UUᵀ) for an n×r orthonormal U and
/// ε ~ N(0, σ²I); machine i holds the covariance of its own N_i samples
/// normalized by the total sample count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikedCovConfig {
    pub n: usize,
    pub m: usize,
    pub samples_per_machine: usize,
    pub r: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub normalize: Normalize,
}

impl SpikedCovConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.samples_per_machine == 0 {
            return Err(Error::InvalidConfig("n, m, N_i must be positive".into()));
        }
        if self.r == 0 || self.r > self.n {
            return Err(Error::InvalidConfig(format!(
                "planted rank r = {} must lie in 1..=n = {}",
                self.r, self.n
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig("sigma2 must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Draws the shards of the spiked-covariance instance. Returns the shard
/// list and the planted rank r (the ground truth the estimators target).
pub fn spiked_covariance_shards(cfg: &SpikedCovConfig) -> Result<(Vec<SymMatrix>, usize)> {
    cfg.validate()?;
    let (n, m, r) = (cfg.n, cfg.m, cfg.r);
    let mut coin = CoinStream::new(cfg.seed);
    let u = haar_columns(n, r, &mut coin);
    let sqrt_lambda = cfg.lambda.sqrt();
    let sqrt_sigma = cfg.sigma2.sqrt();
    let total_samples = (m * cfg.samples_per_machine) as f64;

    let mut shards = Vec::with_capacity(m);
    let mut x = vec![0.0f64; n];
    for _machine in 0..m {
        // Accumulate the upper triangle of Σ_s x xᵀ.
        let mut acc = vec![0.0f64; n * n];
        for _s in 0..cfg.samples_per_machine {
            let z: Vec<f64> = (0..r).map(|_| coin.gaussian()).collect();
            for xi in x.iter_mut() {
                *xi = sqrt_sigma * coin.gaussian();
            }
            for (j, uj) in u.iter().enumerate() {
                let w = sqrt_lambda * z[j];
                for i in 0..n {
                    x[i] += w * uj[i];
                }
            }
            for i in 0..n {
                let xi = x[i];
                let row = &mut acc[i * n..(i + 1) * n];
                for j in i..n {
                    row[j] += xi * x[j];
                }
            }
        }
        let shard = SymMatrix::from_fn_symmetric(n, |i, j| acc[i * n + j] / total_samples)?;
        shards.push(shard);
    }

    if cfg.normalize == Normalize::Clip {
        let est = operator_norm_estimate(
            |v| {
                let mut sum = vec![0.0; n];
                for s in &shards {
                    let w = s.matvec(v).expect("dimensions fixed");
                    for k in 0..n {
                        sum[k] += w[k];
                    }
                }
                sum
            },
            n,
            100,
            1e-9,
        );
        if est > 1.0 {
            let scale = 1.0 / est;
            for s in shards.iter_mut() {
                *s = s.scale(scale);
            }
        }
    }
    Ok((shards, r))
}

// ───────────────────────── planted spectra ─────────────────────────

/// How a planted matrix A = VΛVᵀ is split across machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShardSplit {
    /// A_i = A/m for every machine.
    Even,
    /// Each eigencomponent σ_j v_j v_jᵀ is divided by random convex
    /// weights, keeping every shard PSD and the sum equal to A up to
    /// floating-point addition.
    RandomConvex,
}

/// Shards of A = VΛVᵀ for Haar-random V and the given eigenvalues
/// (shorter lists are padded with zeros up to n).
pub fn planted_spectrum_shards(
    n: usize,
    m: usize,
    eigenvalues: &[f64],
    seed: u64,
    split: ShardSplit,
) -> Result<Vec<SymMatrix>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("n and m must be positive".into()));
    }
    if eigenvalues.len() > n {
        return Err(Error::InvalidSpectrum(format!(
            "{} eigenvalues for size {n}",
            eigenvalues.len()
        )));
    }
    for &s in eigenvalues {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {s} outside [0,1]")));
        }
    }
    let mut coin = CoinStream::new(seed);
    // Only eigencomponents with σ > 0 contribute; Haar columns for the
    // nonzero part give A the same distribution as a full Haar conjugation.
    let active: Vec<f64> = eigenvalues.iter().copied().filter(|&s| s > 0.0).collect();
    let v = haar_columns(n, active.len(), &mut coin);

    match split {
        ShardSplit::Even => {
            let cols: Vec<Vec<f64>> = active
                .iter()
                .zip(&v)
                .map(|(&s, col)| col.iter().map(|&x| x * s.sqrt()).collect())
                .collect();
            let a = SymMatrix::from_outer_products(n, &cols)?;
            let shard = a.scale(1.0 / m as f64);
            Ok(vec![shard; m])
        }
        ShardSplit::RandomConvex => {
            // weights[i][j]: machine i's convex share of eigencomponent j.
            let mut weights = vec![vec![0.0f64; active.len()]; m];
            for j in 0..active.len() {
                let raw: Vec<f64> = (0..m).map(|_| coin.uniform01()).collect();
                let sum: f64 = raw.iter().sum();
                for i in 0..m {
                    weights[i][j] = raw[i] / sum;
                }
            }
            let mut shards = Vec::with_capacity(m);
            for w in &weights {
                let cols: Vec<Vec<f64>> = active
                    .iter()
                    .zip(&v)
                    .zip(w)
                    .map(|((&s, col), &wi)| {
                        let scale = (wi * s).sqrt();
                        col.iter().map(|&x| x * scale).collect()
                    })
                    .collect();
                shards.push(SymMatrix::from_outer_products(n, &cols)?);
            }
            Ok(shards)
        }
    }
}

// ───────────────────────── orthogonal ensemble ─────────────────────────

/// Two independent r×n matrices with orthonormal rows, each the first r
/// rows of a Haar-random n×n orthogonal matrix. Requires r ≤ n/4.
pub fn orthogonal_ensemble_pair(
    n: usize,
    r: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if r == 0 || 4 * r > n {
        return Err(Error::InvalidConfig(format!("need 1 <= r <= n/4, got r={r}, n={n}")));
    }
    let mut coin = CoinStream::new(seed);
    let draw = |coin: &mut CoinStream| -> Vec<Vec<f64>> {
        let cols = haar_columns(n, n, coin);
        // cols[j][i] is entry (i,j) of Q; row k of Q is cols[·][k].
        (0..r).map(|k| (0..n).map(|j| cols[j][k]).collect()).collect()
    };
    let q1 = draw(&mut coin);
    let q2 = draw(&mut coin);
    Ok((q1, q2))
}

/// Gram sum QᵀQ + PᵀP of two row-orthonormal matrices (n×n, PSD).
pub fn gram_sum(q1: &[Vec<f64>], q2: &[Vec<f64>], n: usize) -> Result<SymMatrix> {
    SymMatrix::from_fn_symmetric(n, |i, j| {
        let mut s = 0.0;
        for row in q1.iter().chain(q2.iter()) {
            s += row[i] * row[j];
        }
        s
    })
}

// ───────────────────────── shard-set files ─────────────────────────

/// On-disk description of a generated shard set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardSetManifest {
    pub n: usize,
    pub m: usize,
    pub kind: String,
    pub seed: u64,
    /// Shard file names, machine order, relative to the manifest.
    pub files: Vec<String>,
    /// Generator configuration echo.
    pub config: serde_json::Value,
}

/// Writes one binary matrix file per shard plus a manifest JSON; returns
/// the manifest path.
pub fn write_shard_set(
    dir: &Path,
    shards: &[SymMatrix],
    kind: &str,
    seed: u64,
    config: serde_json::Value,
) -> Result<PathBuf> {
    if shards.is_empty() {
        return Err(Error::InvalidConfig("no shards to write".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(shards.len());
    for (i, s) in shards.iter().enumerate() {
        let name = format!("shard_{:03}.grnk", i + 1);
        matio::write_matrix_binary(&dir.join(&name), s)?;
        files.push(name);
    }
    let manifest = ShardSetManifest {
        n: shards[0].n(),
        m: shards.len(),
        kind: kind.to_string(),
        seed,
        files,
        config,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads a shard set back from its manifest.
pub fn read_shard_set(manifest_path: &Path) -> Result<(ShardSetManifest, Vec<SymMatrix>)> {
    let manifest: ShardSetManifest =
        serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut shards = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let s = matio::read_matrix(&dir.join(f))?;
        if s.n() != manifest.n {
            return Err(Error::DimensionMismatch { expected: manifest.n, got: s.n() });
        }
        shards.push(s);
    }
    Ok((manifest, shards))
}

// ───────────────────────── tests ─────────────────────────
