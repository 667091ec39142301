//! Repeated-trial harnesses: the spiked-covariance MSE sweep, the
//! filter-error curves, and the orthogonal-ensemble singular-value check.
//! Every harness derives all of its randomness from one master seed.

use crate::board::{Blackboard, Cluster, Quantization};
use crate::datagen::{
    gram_sum, orthogonal_ensemble_pair, read_shard_set, spiked_covariance_shards, SpikedCovConfig,
};
use crate::error::{Error, Result};
use crate::filter::{build_composite, sup_error_outside, Thresholds};
use crate::protocol::{randomized_rank_estimate, EvalScheme, FilterChoice, RandomizedConfig};
use crate::spectral::eigh;
use crate::util::splitmix64;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

// ───────────────────────── seed derivation ─────────────────────────

/// Three chained splitmix64 rounds folding (a, b, c) into one sub-seed,
/// giving independent streams without a seed table.
pub fn hash64(a: u64, b: u64, c: u64) -> u64 {
    let mut state = a;
    let h = splitmix64(&mut state);
    state = h ^ b;
    let h = splitmix64(&mut state);
    state = h ^ c;
    splitmix64(&mut state)
}

/// Sweep-independent sub-seed reserved for instance generation.
const INSTANCE_STREAM: u64 = 0xFFFF_FFFF;

// ───────────────────────── MSE sweep ─────────────────────────

/// Where the experiment's matrix comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// Generate a spiked-covariance instance; its seed field is replaced
    /// by a value derived from the experiment's master seed.
    Spiked(SpikedCovConfig),
    /// Load shards written by a previous `gen` run.
    ShardFiles { manifest: PathBuf },
}

fn default_scheme() -> EvalScheme {
    EvalScheme::Horner
}

/// One full sweep: every filter crossed with every probe budget, each
/// point repeated `trials` times on the same instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub c1: f64,
    pub c2: f64,
    pub instance: InstanceSpec,
    pub filters: Vec<FilterChoice>,
    pub t_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub quantization: Quantization,
    /// Rank the squared error is measured against; defaults to the planted
    /// rank for generated instances.
    #[serde(default)]
    pub target_rank: Option<usize>,
    #[serde(default = "default_scheme")]
    pub scheme: EvalScheme,
}

/// Aggregate result for one sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub filter: FilterChoice,
    pub t_reps: usize,
    pub trials: usize,
    pub mse: f64,
    pub mean_rhat: f64,
    pub mean_bits: f64,
}

/// Files written plus the per-point aggregates, in sweep order.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows_path: PathBuf,
    pub summary_path: PathBuf,
    pub summaries: Vec<SweepSummary>,
    pub target_rank: usize,
}

fn filter_columns(f: &FilterChoice) -> (&'static str, String) {
    match f {
        FilterChoice::Composite { p } => ("composite", p.to_string()),
        FilterChoice::Baseline { .. } => ("baseline", String::new()),
    }
}

/// Runs the sweep: the instance is generated (or loaded) once, then every
/// (filter, T) point is estimated `trials` times with sub-seeds
/// hash64(master, sweep_index, trial). Writes `rows.csv` with one line per
/// trial, sorted by (sweep point, trial), and `summary.csv` with one line
/// per sweep point.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if cfg.filters.is_empty() || cfg.t_values.is_empty() {
        return Err(Error::InvalidConfig("need at least one sweep point".into()));
    }
    Thresholds::new(cfg.c1, cfg.c2)?;

    let (shards, target) = match &cfg.instance {
        InstanceSpec::Spiked(spiked) => {
            let mut spiked = spiked.clone();
            spiked.seed = hash64(cfg.master_seed, INSTANCE_STREAM, 0);
            let (shards, r) = spiked_covariance_shards(&spiked)?;
            (shards, cfg.target_rank.unwrap_or(r))
        }
        InstanceSpec::ShardFiles { manifest } => {
            let (_, shards) = read_shard_set(manifest)?;
            let target = cfg.target_rank.ok_or_else(|| {
                Error::InvalidConfig("file-based instances need an explicit target rank".into())
            })?;
            (shards, target)
        }
    };
    let cluster = Cluster::new(shards)?;

    std::fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join("rows.csv");
    let summary_path = out_dir.join("summary.csv");
    let mut rows = String::from("filter,p,T,trial,rhat,mse_running,bits\n");
    let mut summaries = Vec::new();

    for (fi, filter) in cfg.filters.iter().enumerate() {
        for (ti, &t_reps) in cfg.t_values.iter().enumerate() {
            let sweep_index = (fi * cfg.t_values.len() + ti) as u64;
            let (label, p_col) = filter_columns(filter);
            let mut sq_sum = 0.0;
            let mut rhat_sum = 0.0;
            let mut bits_sum = 0.0;
            for trial in 0..cfg.trials {
                let seed = hash64(cfg.master_seed, sweep_index, trial as u64);
                let mut run_cfg =
                    RandomizedConfig::new(cfg.c1, cfg.c2, *filter, t_reps, seed);
                run_cfg.scheme = cfg.scheme;
                let mut board = Blackboard::with_recording(cfg.quantization, false, false)?;
                let report = randomized_rank_estimate(&cluster, &mut board, &run_cfg)?;
                let err = report.rhat - target as f64;
                sq_sum += err * err;
                rhat_sum += report.rhat;
                bits_sum += report.bits_used as f64;
                let mse_running = sq_sum / (trial + 1) as f64;
                rows.push_str(&format!(
                    "{label},{p_col},{t_reps},{trial},{},{mse_running},{}\n",
                    report.rhat, report.bits_used
                ));
            }
            summaries.push(SweepSummary {
                filter: *filter,
                t_reps,
                trials: cfg.trials,
                mse: sq_sum / cfg.trials as f64,
                mean_rhat: rhat_sum / cfg.trials as f64,
                mean_bits: bits_sum / cfg.trials as f64,
            });
        }
    }

    std::fs::write(&rows_path, rows)?;
    let mut summary = String::from("filter,p,T,trials,mse,mean_rhat,mean_bits\n");
    for s in &summaries {
        let (label, p_col) = filter_columns(&s.filter);
        summary.push_str(&format!(
            "{label},{p_col},{},{},{},{},{}\n",
            s.t_reps, s.trials, s.mse, s.mean_rhat, s.mean_bits
        ));
    }
    std::fs::write(&summary_path, summary)?;

    Ok(ExperimentOutcome { rows_path, summary_path, summaries, target_rank: target })
}

// ───────────────────────── filter error curves ─────────────────────────

/// One point of the composite-vs-plain error comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyErrorRow {
    pub p: usize,
    pub total_degree: usize,
    /// Sup error of q2∘q1 outside the transition band.
    pub composite_error: f64,
    /// Sup error of the plain indicator expansion at the same total
    /// degree, on the same region.
    pub chebyshev_error: f64,
}

/// Error curves for p = 0..=p_max: each composite filter against the plain
/// Chebyshev indicator expansion of matching total degree, both measured
/// as sup distance to the ramp on [0,c2] ∪ [c1,1].
pub fn verify_poly(th: &Thresholds, p_max: usize, q1_max_degree: usize) -> Result<Vec<PolyErrorRow>> {
    let mut rows = Vec::with_capacity(p_max + 1);
    for p in 0..=p_max {
        let f = build_composite(th, p, 0.1, q1_max_degree, None)?;
        let total_degree = f.total_degree();
        let composite_error = sup_error_outside(|x| f.eval(x), th);
        let baseline = crate::filter::fit_highpass_baseline(th, total_degree)?;
        let chebyshev_error = sup_error_outside(|x| baseline.eval(x), th);
        rows.push(PolyErrorRow { p, total_degree, composite_error, chebyshev_error });
    }
    Ok(rows)
}

/// Writes the error curves in the three-column plot format.
pub fn write_verify_poly_csv(rows: &[PolyErrorRow], path: &Path) -> Result<()> {
    let mut out = String::from("total_degree,composite_error,chebyshev_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.total_degree, r.composite_error, r.chebyshev_error
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ───────────────────────── orthogonal-ensemble check ─────────────────────────

/// Outcome of the repeated middle-singular-value check on sums of two
/// random projectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleCheckReport {
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    /// Trials with σ_{⌈6r/5⌉}(Q1ᵀQ1 + Q2ᵀQ2) > 1/10.
    pub successes: usize,
    /// The checked singular-value index (1-based).
    pub index: usize,
    /// Smallest checked singular value seen across trials.
    pub min_sigma: f64,
}

/// Draws `trials` independent projector pairs and counts how often the
/// ⌈6r/5⌉-th singular value of Q1ᵀQ1 + Q2ᵀQ2 clears 1/10.
pub fn ensemble_middle_sigma_check(
    n: usize,
    r: usize,
    trials: usize,
    master_seed: u64,
) -> Result<EnsembleCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let index = (6 * r + 4) / 5;
    let mut successes = 0;
    let mut min_sigma = f64::INFINITY;
    for k in 0..trials {
        let seed = hash64(master_seed, 3, k as u64);
        let (q1, q2) = orthogonal_ensemble_pair(n, r, seed)?;
        let g = gram_sum(&q1, &q2, n)?;
        let sigma = eigh(&g)?.eigenvalues()[index - 1];
        if sigma > 0.1 {
            successes += 1;
        }
        min_sigma = min_sigma.min(sigma);
    }
    Ok(EnsembleCheckReport { n, r, trials, successes, index, min_sigma })
}

/// Writes the aggregate check as a JSON record.
pub fn write_ensemble_report(report: &EnsembleCheckReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(report)?)?;
    Ok(())
}

// ───────────────────────── tests ─────────────────────────
