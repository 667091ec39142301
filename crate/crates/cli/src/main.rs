//! `grank`: generalized-rank estimation for a PSD matrix held as
//! per-machine shard sums, with exact communication-bit accounting.
//!
//! Every subcommand prints one JSON document to stdout; `--out` writes the
//! same document (or CSV, for sweep outputs) to disk. Failures print a
//! JSON error record to stderr and exit nonzero. A `--config` JSON file
//! mirrors the flags; explicit flags override file entries.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use grank_core::board::{default_tau, Blackboard, Cluster, Quantization};
use grank_core::datagen::{
    planted_spectrum_shards, read_shard_set, spiked_covariance_shards, write_shard_set, Normalize,
    ShardSplit, SpikedCovConfig,
};
use grank_core::experiment::{
    ensemble_middle_sigma_check, run_experiment, verify_poly, write_verify_poly_csv,
    ExperimentConfig, InstanceSpec,
};
use grank_core::filter::{build_composite, Thresholds};
use grank_core::protocol::{
    deterministic_rank_estimate, randomized_rank_estimate, EvalScheme, FilterChoice,
    RandomizedConfig,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};

// ───────────────────────── command surface ─────────────────────────

#[derive(Parser)]
#[command(
    name = "grank",
    about = "Estimate how many eigenvalues of a distributed PSD matrix exceed a threshold",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a shard set (spiked-covariance samples or a planted spectrum)
    Gen(GenArgs),
    /// One randomized run with the sharpened composite filter
    Estimate(EstimateArgs),
    /// Deterministic run: ship quantized low-rank factors, count eigenvalues
    Det(DetArgs),
    /// One randomized run with the plain Chebyshev indicator filter
    Baseline(BaselineArgs),
    /// Repeated-trial MSE sweep over filters and probe budgets
    Experiment(ExperimentArgs),
    /// Error curves of the composite filter vs the plain expansion
    VerifyPoly(VerifyPolyArgs),
    /// Middle singular value of a sum of two random projectors, repeated
    #[command(name = "lemma3-check")]
    EnsembleCheck(EnsembleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum QuantizeMode {
    Exact,
    Fixed,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SchemeArg {
    Horner,
    Powers,
}

impl From<SchemeArg> for EvalScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Horner => EvalScheme::Horner,
            SchemeArg::Powers => EvalScheme::Powers,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum GenKind {
    Spiked,
    Planted,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SplitArg {
    Even,
    RandomConvex,
}

#[derive(Debug, Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NormalizeArg {
    Clip,
    None,
}

// ───────────────────────── config file ─────────────────────────

/// JSON mirror of the flag set. Any field may be omitted; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    n: Option<usize>,
    m: Option<usize>,
    r: Option<usize>,
    c1: Option<f64>,
    c2: Option<f64>,
    p: Option<usize>,
    #[serde(rename = "T")]
    t: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    quantize: Option<QuantizeMode>,
    tau: Option<f64>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    degree: Option<usize>,
    scheme: Option<SchemeArg>,
    samples: Option<usize>,
    lambda: Option<f64>,
    sigma2: Option<f64>,
    kind: Option<GenKind>,
    eigenvalues: Option<Vec<f64>>,
    split: Option<SplitArg>,
    normalize: Option<NormalizeArg>,
    p_values: Option<Vec<usize>>,
    t_values: Option<Vec<usize>>,
    baseline_degree: Option<usize>,
    target_rank: Option<usize>,
    p_max: Option<usize>,
    max_degree: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

/// Default composition order: ⌈log2(2n)⌉.
fn default_p(n: usize) -> usize {
    let x = 2 * n;
    let bits = (usize::BITS - x.leading_zeros()) as usize;
    if x.is_power_of_two() {
        bits - 1
    } else {
        bits
    }
}

fn emit(doc: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    if let Some(path) = out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(())
}

// ───────────────────────── gen ─────────────────────────

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// spiked (sample covariances) or planted (known spectrum)
    #[arg(long, value_enum)]
    kind: Option<GenKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Planted rank of the spiked instance
    #[arg(long)]
    r: Option<usize>,
    /// Samples drawn per machine (spiked)
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_enum)]
    normalize: Option<NormalizeArg>,
    /// Comma-separated spectrum for planted instances
    #[arg(long, value_delimiter = ',')]
    eigenvalues: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving shard files and the manifest
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let kind = pick(&args.kind, &fc.kind).unwrap_or(GenKind::Spiked);
    let m = pick(&args.m, &fc.m).unwrap_or(2);
    let seed = pick(&args.seed, &fc.seed).unwrap_or(0);
    let dir = pick(&args.out, &fc.out).unwrap_or_else(|| PathBuf::from("shards"));

    let (shards, kind_name, extra) = match kind {
        GenKind::Spiked => {
            let n = pick(&args.n, &fc.n).ok_or_else(|| anyhow!("spiked generation needs --n"))?;
            let r = pick(&args.r, &fc.r).ok_or_else(|| anyhow!("spiked generation needs --r"))?;
            let cfg = SpikedCovConfig {
                n,
                m,
                samples_per_machine: pick(&args.samples, &fc.samples).unwrap_or(n),
                r,
                lambda: pick(&args.lambda, &fc.lambda).unwrap_or(0.4),
                sigma2: pick(&args.sigma2, &fc.sigma2).unwrap_or(0.1),
                seed,
                normalize: match pick(&args.normalize, &fc.normalize).unwrap_or(NormalizeArg::Clip)
                {
                    NormalizeArg::Clip => Normalize::Clip,
                    NormalizeArg::None => Normalize::None,
                },
            };
            let (shards, r) = spiked_covariance_shards(&cfg)?;
            (shards, "spiked", serde_json::json!({ "planted_rank": r, "config": cfg }))
        }
        GenKind::Planted => {
            let ev = pick(&args.eigenvalues, &fc.eigenvalues)
                .ok_or_else(|| anyhow!("planted generation needs --eigenvalues"))?;
            let n = pick(&args.n, &fc.n).unwrap_or(ev.len());
            let split = match pick(&args.split, &fc.split).unwrap_or(SplitArg::Even) {
                SplitArg::Even => ShardSplit::Even,
                SplitArg::RandomConvex => ShardSplit::RandomConvex,
            };
            let shards = planted_spectrum_shards(n, m, &ev, seed, split)?;
            (shards, "planted", serde_json::json!({ "eigenvalues": ev, "split": split }))
        }
    };
    let manifest = write_shard_set(&dir, &shards, kind_name, seed, extra)?;
    emit(
        &serde_json::json!({
            "manifest": manifest,
            "n": shards[0].n(),
            "m": shards.len(),
            "kind": kind_name,
        }),
        None,
    )
}

// ───────────────────────── estimate / baseline ─────────────────────────

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest of the shard set to load
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Composition order of the sharpening step (default ⌈log2 2n⌉)
    #[arg(long)]
    p: Option<usize>,
    /// Gaussian probes averaged
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    quantize: Option<QuantizeMode>,
    /// Fixed-point grid step (default per the m·d·n·2^{4p} prescription)
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct RandomizedRun {
    manifest: PathBuf,
    c1: f64,
    c2: f64,
    filter: FilterChoice,
    t_reps: usize,
    seed: u64,
    scheme: EvalScheme,
    quantize: QuantizeMode,
    tau: Option<f64>,
    out: Option<PathBuf>,
}

fn run_randomized_command(run: RandomizedRun, protocol_label: &str) -> Result<()> {
    let (manifest, shards) = read_shard_set(&run.manifest)?;
    let cluster = Cluster::new(shards)?;
    let (n, m) = (cluster.n(), cluster.m());
    let th = Thresholds::new(run.c1, run.c2)?;
    // The default grid step needs the inner fit degree before the run.
    let (d, p_for_tau) = match run.filter {
        FilterChoice::Composite { p } => (build_composite(&th, p, 0.1, 200, None)?.q1.degree, p),
        FilterChoice::Baseline { degree } => (degree, 0),
    };
    let quant = match run.quantize {
        QuantizeMode::Exact => Quantization::Exact,
        QuantizeMode::Fixed => Quantization::FixedPoint {
            tau: run.tau.unwrap_or_else(|| default_tau(m, d, n, p_for_tau)),
        },
    };
    let mut board = Blackboard::new(quant)?;
    let mut cfg = RandomizedConfig::new(run.c1, run.c2, run.filter, run.t_reps, run.seed);
    cfg.scheme = run.scheme;
    let report = randomized_rank_estimate(&cluster, &mut board, &cfg)?;
    emit(
        &serde_json::json!({
            "protocol": protocol_label,
            "n": n,
            "m": m,
            "c1": run.c1,
            "c2": run.c2,
            "quantization": quant,
            "shards": manifest.files,
            "report": report,
        }),
        run.out.as_deref(),
    )
}

fn run_estimate(args: &EstimateArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let manifest = pick(&args.manifest, &fc.manifest)
        .ok_or_else(|| anyhow!("estimate needs --manifest or a config entry"))?;
    let n = read_shard_set(&manifest)?.0.n;
    run_randomized_command(
        RandomizedRun {
            manifest,
            c1: pick(&args.c1, &fc.c1).unwrap_or(0.5),
            c2: pick(&args.c2, &fc.c2).unwrap_or(0.1),
            filter: FilterChoice::Composite {
                p: pick(&args.p, &fc.p).unwrap_or_else(|| default_p(n)),
            },
            t_reps: pick(&args.t, &fc.t).unwrap_or(32),
            seed: pick(&args.seed, &fc.seed).unwrap_or(0),
            scheme: pick(&args.scheme, &fc.scheme).unwrap_or(SchemeArg::Horner).into(),
            quantize: pick(&args.quantize, &fc.quantize).unwrap_or(QuantizeMode::Exact),
            tau: pick(&args.tau, &fc.tau),
            out: pick(&args.out, &fc.out),
        },
        "randomized",
    )
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Degree of the indicator expansion
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    quantize: Option<QuantizeMode>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_baseline(args: &BaselineArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let manifest = pick(&args.manifest, &fc.manifest)
        .ok_or_else(|| anyhow!("baseline needs --manifest or a config entry"))?;
    run_randomized_command(
        RandomizedRun {
            manifest,
            c1: pick(&args.c1, &fc.c1).unwrap_or(0.5),
            c2: pick(&args.c2, &fc.c2).unwrap_or(0.1),
            filter: FilterChoice::Baseline {
                degree: pick(&args.degree, &fc.degree).unwrap_or(12),
            },
            t_reps: pick(&args.t, &fc.t).unwrap_or(32),
            seed: pick(&args.seed, &fc.seed).unwrap_or(0),
            scheme: pick(&args.scheme, &fc.scheme).unwrap_or(SchemeArg::Horner).into(),
            quantize: pick(&args.quantize, &fc.quantize).unwrap_or(QuantizeMode::Exact),
            tau: pick(&args.tau, &fc.tau),
            out: pick(&args.out, &fc.out),
        },
        "baseline",
    )
}

// ───────────────────────── det ─────────────────────────

#[derive(Args)]
struct DetArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Rank bound: every shard must have rank at most 2r
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_det(args: &DetArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let manifest_path = pick(&args.manifest, &fc.manifest)
        .ok_or_else(|| anyhow!("det needs --manifest or a config entry"))?;
    let r = pick(&args.r, &fc.r).ok_or_else(|| anyhow!("det needs --r"))?;
    let c1 = pick(&args.c1, &fc.c1).unwrap_or(0.5);
    let c2 = pick(&args.c2, &fc.c2).unwrap_or(0.1);
    let (manifest, shards) = read_shard_set(&manifest_path)?;
    let cluster = Cluster::new(shards)?;
    let th = Thresholds::new(c1, c2)?;
    // The factor channel fixes its own grid width; board mode is unused.
    let mut board = Blackboard::new(Quantization::Exact)?;
    let report = deterministic_rank_estimate(&cluster, &mut board, &th, r)?;
    emit(
        &serde_json::json!({
            "protocol": "deterministic",
            "n": cluster.n(),
            "m": cluster.m(),
            "c1": c1,
            "c2": c2,
            "r": r,
            "shards": manifest.files,
            "report": report,
        }),
        pick(&args.out, &fc.out).as_deref(),
    )
}

// ───────────────────────── experiment ─────────────────────────

#[derive(Args)]
struct ExperimentArgs {
    /// Full sweep description (JSON of the experiment config schema)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Composite orders swept, e.g. 0,1,5
    #[arg(long = "p-values", value_delimiter = ',')]
    p_values: Option<Vec<usize>>,
    /// Probe budgets swept
    #[arg(long = "T-values", value_delimiter = ',')]
    t_values: Option<Vec<usize>>,
    /// Indicator-expansion degree appended to the sweep (0 = skip)
    #[arg(long)]
    baseline_degree: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    quantize: Option<QuantizeMode>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_experiment_command(args: &ExperimentArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => {
            let n = args.n.ok_or_else(|| anyhow!("experiment needs --config or --n"))?;
            let r = args.r.ok_or_else(|| anyhow!("experiment needs --config or --r"))?;
            let mut filters: Vec<FilterChoice> = args
                .p_values
                .clone()
                .unwrap_or_else(|| vec![0, 1])
                .into_iter()
                .map(|p| FilterChoice::Composite { p })
                .collect();
            let baseline = args.baseline_degree.unwrap_or(12);
            if baseline > 0 {
                filters.push(FilterChoice::Baseline { degree: baseline });
            }
            ExperimentConfig {
                c1: args.c1.unwrap_or(0.5),
                c2: args.c2.unwrap_or(0.1),
                instance: InstanceSpec::Spiked(SpikedCovConfig {
                    n,
                    m: args.m.unwrap_or(2),
                    samples_per_machine: args.samples.unwrap_or(n),
                    r,
                    lambda: args.lambda.unwrap_or(0.4),
                    sigma2: args.sigma2.unwrap_or(0.1),
                    seed: 0, // replaced by the master-seed derivation
                    normalize: Normalize::Clip,
                }),
                filters,
                t_values: args.t_values.clone().unwrap_or_else(|| vec![30]),
                trials: args.trials.unwrap_or(10),
                master_seed: args.seed.unwrap_or(0),
                quantization: Quantization::Exact,
                target_rank: None,
                scheme: EvalScheme::Horner,
            }
        }
    };
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(tv) = &args.t_values {
        cfg.t_values = tv.clone();
    }
    if let Some(mode) = args.quantize {
        cfg.quantization = match mode {
            QuantizeMode::Exact => Quantization::Exact,
            QuantizeMode::Fixed => Quantization::FixedPoint {
                tau: args.tau.ok_or_else(|| anyhow!("--quantize fixed needs --tau here"))?,
            },
        };
    }
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("experiment_out"));
    let outcome = run_experiment(&cfg, &out_dir)?;
    emit(
        &serde_json::json!({
            "rows": outcome.rows_path,
            "summary": outcome.summary_path,
            "target_rank": outcome.target_rank,
            "summaries": outcome.summaries,
        }),
        None,
    )
}

// ───────────────────────── verify-poly ─────────────────────────

#[derive(Args)]
struct VerifyPolyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Largest composition order on the curve
    #[arg(long = "p-max")]
    p_max: Option<usize>,
    /// Cap for the inner fit degree search
    #[arg(long = "max-degree")]
    max_degree: Option<usize>,
    /// CSV destination
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_verify_poly(args: &VerifyPolyArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let c1 = pick(&args.c1, &fc.c1).unwrap_or(0.5);
    let c2 = pick(&args.c2, &fc.c2).unwrap_or(0.1);
    let p_max = pick(&args.p_max, &fc.p_max).unwrap_or(8);
    let max_degree = pick(&args.max_degree, &fc.max_degree).unwrap_or(200);
    let th = Thresholds::new(c1, c2)?;
    let rows = verify_poly(&th, p_max, max_degree)?;
    let out = pick(&args.out, &fc.out).unwrap_or_else(|| PathBuf::from("poly_errors.csv"));
    write_verify_poly_csv(&rows, &out)?;
    emit(&serde_json::json!({ "out": out, "rows": rows }), None)
}

// ───────────────────────── ensemble check ─────────────────────────

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Projector rank (requires r ≤ n/4)
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_ensemble_check(args: &EnsembleArgs) -> Result<()> {
    let fc = load_config(args.config.as_deref())?;
    let report = ensemble_middle_sigma_check(
        pick(&args.n, &fc.n).unwrap_or(100),
        pick(&args.r, &fc.r).unwrap_or(25),
        pick(&args.trials, &fc.trials).unwrap_or(100),
        pick(&args.seed, &fc.seed).unwrap_or(0),
    )?;
    emit(&serde_json::to_value(&report)?, pick(&args.out, &fc.out).as_deref())
}

// ───────────────────────── entry point ─────────────────────────

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::Gen(a) => run_gen(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Det(a) => run_det(a),
        Command::Baseline(a) => run_baseline(a),
        Command::Experiment(a) => run_experiment_command(a),
        Command::VerifyPoly(a) => run_verify_poly(a),
        Command::EnsembleCheck(a) => run_ensemble_check(a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}
