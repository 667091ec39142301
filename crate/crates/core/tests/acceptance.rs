//! Acceptance gate: every shipped guarantee checked end to end, one
//! printed pass/fail line per criterion (run with --nocapture to see all
//! of them). Each check carries a wall-clock budget; the checks serialize
//! on a mutex so the budgets mean the same thing regardless of the test
//! harness thread count.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use grank_core::board::{default_tau, Blackboard, CoinStream, Cluster, Quantization};
use grank_core::datagen::{planted_spectrum_shards, ShardSplit, SpikedCovConfig};
use grank_core::experiment::{
    ensemble_middle_sigma_check, run_experiment, ExperimentConfig, InstanceSpec,
};
use grank_core::filter::{
    build_composite, eval_q2, hspec, q2_coefficients_exact, standard_grid, sup_error_outside,
    ChebyshevExpansion, Thresholds,
};
use grank_core::protocol::{
    deterministic_rank_estimate, distributed_cheb_matvec, predicted_deterministic_bits,
    predicted_randomized_bits, randomized_rank_estimate, EvalScheme, FilterChoice,
    RandomizedConfig,
};
use grank_core::spectral::eigh;
use grank_core::datagen::Normalize;

static SERIAL: Mutex<()> = Mutex::new(());

fn gate(id: usize, name: &str, budget_secs: u64, body: impl FnOnce() -> Result<(), String>) {
    let _lock = SERIAL.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let start = Instant::now();
    let verdict = body();
    let elapsed = start.elapsed();
    match &verdict {
        Ok(()) => println!("criterion {id:02} ({name}): pass [{elapsed:.2?}]"),
        Err(why) => println!("criterion {id:02} ({name}): FAIL [{elapsed:.2?}] {why}"),
    }
    if let Err(why) = verdict {
        panic!("criterion {id:02} ({name}) failed: {why}");
    }
    let budget = Duration::from_secs(budget_secs);
    assert!(
        elapsed <= budget,
        "criterion {id:02} ({name}) took {elapsed:?}, budget {budget:?}"
    );
}

fn th_main() -> Thresholds {
    Thresholds::new(0.5, 0.1).unwrap()
}

/// The n = 200 instance used by the containment and robustness checks:
/// 20 eigenvalues at 0.6, the remaining 180 spread over (0, 0.05].
fn spectrum_200() -> Vec<f64> {
    let mut ev = vec![0.6; 20];
    ev.extend((1..=180).map(|k| 0.05 * k as f64 / 180.0));
    ev
}

// ───────────────────────── 1: composite filter error ─────────────────────────

#[test]
fn criterion_01_composite_filter_error_certificate() {
    gate(1, "composite filter error certificate", 5, || {
        let th = th_main();
        for p in 1..=12usize {
            let f = build_composite(&th, p, 0.1, 200, None).map_err(|e| e.to_string())?;
            let bound = 2f64.powi(-(p as i32));
            let err = sup_error_outside(|x| f.eval(x), &th);
            if err > bound {
                return Err(format!("p={p}: sup error {err:.3e} exceeds 2^-p = {bound:.3e}"));
            }
            for x in standard_grid(&th) {
                let y = f.eval(x);
                if !(-1e-12..=1.0 + 1e-12).contains(&y) {
                    return Err(format!("p={p}: f({x}) = {y} leaves [-1e-12, 1+1e-12]"));
                }
            }
        }
        Ok(())
    });
}

// ───────────────────────── 2: smooth step properties ─────────────────────────

#[test]
fn criterion_02_smooth_step_properties() {
    gate(2, "smooth step properties", 5, || {
        for p in 0..=12usize {
            if eval_q2(p, 0.0) != 0.0 {
                return Err(format!("p={p}: q2(0) = {} is not exactly 0", eval_q2(p, 0.0)));
            }
            if eval_q2(p, 1.0) != 1.0 {
                return Err(format!("p={p}: q2(1) = {} is not exactly 1", eval_q2(p, 1.0)));
            }
            for i in 0..1000 {
                let z = i as f64 / 999.0;
                let s = eval_q2(p, z) + eval_q2(p, 1.0 - z);
                if (s - 1.0).abs() > 1e-9 {
                    return Err(format!("p={p}: symmetry defect {} at z={z}", (s - 1.0).abs()));
                }
            }
            let tail = 2f64.powi(-(p as i32));
            for i in 0..=200 {
                let z = -0.1 + 0.2 * i as f64 / 200.0;
                if eval_q2(p, z) > tail {
                    return Err(format!("p={p}: q2({z}) = {} above 2^-p", eval_q2(p, z)));
                }
                let z_hi = 0.9 + 0.2 * i as f64 / 200.0;
                if eval_q2(p, z_hi) < 1.0 - tail {
                    return Err(format!("p={p}: q2({z_hi}) = {} below 1-2^-p", eval_q2(p, z_hi)));
                }
            }
            let coeffs = q2_coefficients_exact(p).map_err(|e| e.to_string())?;
            let mass: i128 = coeffs.iter().map(|c| c.abs()).sum();
            if mass > 1i128 << (3 * p) {
                return Err(format!("p={p}: coefficient mass {mass} exceeds 2^(3p)"));
            }
        }
        Ok(())
    });
}

// ───────────────────────── 3: distributed evaluation oracle ─────────────────────────

#[test]
fn criterion_03_distributed_matvec_matches_spectral_oracle() {
    gate(3, "distributed matvec vs spectral oracle", 30, || {
        let mut coin = CoinStream::new(314);
        for case in 0..50usize {
            let n = 4 + (coin.next_u64() % 61) as usize; // 4..=64
            let m = 1 + (coin.next_u64() % 4) as usize;
            let degree = (coin.next_u64() % 11) as usize;
            let spectrum: Vec<f64> = (0..n).map(|_| coin.uniform01()).collect();
            let shards =
                planted_spectrum_shards(n, m, &spectrum, coin.next_u64(), ShardSplit::RandomConvex)
                    .map_err(|e| e.to_string())?;
            let total = shards
                .iter()
                .skip(1)
                .try_fold(shards[0].clone(), |acc, s| acc.add(s))
                .map_err(|e| e.to_string())?;
            let cluster = Cluster::new(shards).map_err(|e| e.to_string())?;
            let coeffs: Vec<f64> = (0..=degree).map(|_| 2.0 * coin.uniform01() - 1.0).collect();
            let q = ChebyshevExpansion { degree, coeffs, achieved_sup_error: 0.0 };
            let v = coin.gaussian_vec(n);

            let mut board = Blackboard::new(Quantization::Exact).map_err(|e| e.to_string())?;
            let y = distributed_cheb_matvec(&cluster, &mut board, &q, &v, None)
                .map_err(|e| e.to_string())?;

            let oracle = eigh(&total)
                .and_then(|d| d.apply(|x| q.eval(x)))
                .and_then(|f| f.matvec(&v))
                .map_err(|e| e.to_string())?;
            let scale = oracle.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
            let dist = y
                .iter()
                .zip(&oracle)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 1e-8 * scale {
                return Err(format!(
                    "case {case} (n={n}, m={m}, degree={degree}): distance {dist:.3e} vs scale {scale:.3e}"
                ));
            }
        }
        Ok(())
    });
}

// ───────────────────────── 4: sandwich and sketch identities ─────────────────────────

#[test]
fn criterion_04_sandwich_and_sketch_identities() {
    gate(4, "rank sandwich and Gaussian sketch identity", 120, || {
        let mut coin = CoinStream::new(2718);
        for case in 0..100usize {
            let n = 5 + (coin.next_u64() % 36) as usize;
            let c2 = 0.05 + 0.45 * coin.uniform01();
            let c1 = (c2 + 0.1 + 0.35 * coin.uniform01()).min(0.999);
            let th = Thresholds::new(c1, c2).map_err(|e| e.to_string())?;
            let spectrum: Vec<f64> = (0..n).map(|_| coin.uniform01()).collect();
            let r1 = spectrum.iter().filter(|&&s| s > c1).count();
            let r2 = spectrum.iter().filter(|&&s| s > c2).count();
            let mass: f64 = spectrum.iter().map(|&s| hspec(s, &th).powi(2)).sum();
            if !(r1 as f64 <= mass && mass <= r2 as f64) {
                return Err(format!(
                    "case {case}: sandwich {r1} <= {mass} <= {r2} violated at ({c1:.3}, {c2:.3})"
                ));
            }
        }

        // Sketch identity on a fixed 12x12 instance: the empirical mean of
        // ||f(A)g||^2 over 1e5 Gaussian probes against the spectral sum.
        let spectrum = [0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0];
        let shards = planted_spectrum_shards(12, 1, &spectrum, 99, ShardSplit::Even)
            .map_err(|e| e.to_string())?;
        let a = shards[0].clone();
        let th = th_main();
        let f = build_composite(&th, 2, 0.1, 200, None).map_err(|e| e.to_string())?;
        let decomp = eigh(&a).map_err(|e| e.to_string())?;
        let f_of_a = decomp.apply(|x| f.eval(x)).map_err(|e| e.to_string())?;
        let target: f64 = decomp.eigenvalues().iter().map(|&s| f.eval(s).powi(2)).sum();

        let mut acc = 0.0;
        let sketches = 100_000usize;
        let mut probe_coin = CoinStream::new(55_005);
        for _ in 0..sketches {
            let g = probe_coin.gaussian_vec(12);
            let w = f_of_a.matvec(&g).map_err(|e| e.to_string())?;
            acc += w.iter().map(|x| x * x).sum::<f64>();
        }
        let mean = acc / sketches as f64;
        let rel = (mean - target).abs() / target;
        if rel > 0.01 {
            return Err(format!(
                "sketch mean {mean:.6} vs spectral sum {target:.6}: relative gap {rel:.4}"
            ));
        }
        Ok(())
    });
}

// ───────────────────────── 5: estimate containment ─────────────────────────

#[test]
fn criterion_05_randomized_estimate_containment() {
    gate(5, "randomized estimate containment", 300, || {
        let shards = planted_spectrum_shards(200, 2, &spectrum_200(), 17, ShardSplit::RandomConvex)
            .map_err(|e| e.to_string())?;
        let cluster = Cluster::new(shards).map_err(|e| e.to_string())?;
        let delta = 1.0 / 20f64.sqrt();
        let lo = (1.0 - delta) * 20.0 - 1.0;
        let hi = (1.0 + delta) * 21.0;
        let mut inside = 0usize;
        for seed in 0..100u64 {
            let mut board = Blackboard::new(Quantization::Exact).map_err(|e| e.to_string())?;
            let cfg =
                RandomizedConfig::new(0.5, 0.1, FilterChoice::Composite { p: 9 }, 64, seed);
            let report =
                randomized_rank_estimate(&cluster, &mut board, &cfg).map_err(|e| e.to_string())?;
            if (lo..=hi).contains(&report.rhat) {
                inside += 1;
            }
        }
        if inside < 95 {
            return Err(format!(
                "only {inside}/100 seeds landed in [{lo:.3}, {hi:.3}], need at least 95"
            ));
        }
        Ok(())
    });
}

// ───────────────────────── 6: deterministic guarantee ─────────────────────────

#[test]
fn criterion_06_deterministic_sandwich_and_exact_bits() {
    gate(6, "deterministic protocol sandwich and bit ledger", 120, || {
        let th = th_main();
        for k in 0..50u64 {
            let n = 16 + (k as usize % 5) * 8;
            let m = 2 + k as usize % 3;
            let spikes = 1 + k as usize % 4;
            let smalls = k as usize % 3;
            let mut spectrum: Vec<f64> =
                (0..spikes).map(|j| 0.55 + 0.4 * (j as f64 + 1.0) / spikes as f64).collect();
            spectrum.extend((0..smalls).map(|j| 0.08 * (j as f64 + 1.0) / smalls.max(1) as f64));
            let r = (spikes + smalls).div_ceil(2) + 1;
            let shards = planted_spectrum_shards(n, m, &spectrum, 1000 + k, ShardSplit::RandomConvex)
                .map_err(|e| e.to_string())?;
            let cluster = Cluster::new(shards).map_err(|e| e.to_string())?;
            let mut board = Blackboard::new(Quantization::Exact).map_err(|e| e.to_string())?;
            let report = deterministic_rank_estimate(&cluster, &mut board, &th, r)
                .map_err(|e| e.to_string())?;
            // All eigenvalues sit outside [c2, c1], so both ranks coincide.
            if report.rhat != spikes {
                return Err(format!(
                    "instance {k} (n={n}, m={m}): rhat {} but planted count above both cuts is {spikes}",
                    report.rhat
                ));
            }
            let predicted = predicted_deterministic_bits(n, m, r, &th);
            if report.bits_used != predicted {
                return Err(format!(
                    "instance {k}: ledger {} bits, closed form {predicted}",
                    report.bits_used
                ));
            }
        }
        Ok(())
    });
}

// ───────────────────────── 7: spiked covariance error ordering ─────────────────────────

#[test]
fn criterion_07_spiked_covariance_mse_reproduction() {
    gate(7, "spiked covariance MSE reproduction", 1800, || {
        let cfg = ExperimentConfig {
            c1: 0.5,
            c2: 0.1,
            instance: InstanceSpec::Spiked(SpikedCovConfig {
                n: 1000,
                m: 2,
                samples_per_machine: 1000,
                r: 100,
                lambda: 0.4,
                sigma2: 0.1,
                seed: 0,
                normalize: Normalize::Clip,
            }),
            filters: vec![
                FilterChoice::Composite { p: 1 },
                FilterChoice::Composite { p: 0 },
                FilterChoice::Baseline { degree: 12 },
            ],
            t_values: vec![30],
            trials: 100,
            master_seed: 42,
            quantization: Quantization::Exact,
            target_rank: None,
            scheme: EvalScheme::Horner,
        };
        let dir = std::env::temp_dir().join("grank_acceptance_mse");
        let outcome = run_experiment(&cfg, &dir).map_err(|e| e.to_string())?;
        let mse_p1 = outcome.summaries[0].mse;
        let mse_p0 = outcome.summaries[1].mse;
        let mse_base = outcome.summaries[2].mse;
        if mse_p1 > 25.0 {
            return Err(format!("MSE(p=1) = {mse_p1:.3} exceeds 25"));
        }
        if !(mse_p1 < mse_p0 && mse_p1 < mse_base) {
            return Err(format!(
                "ordering violated: MSE(p=1)={mse_p1:.3}, MSE(p=0)={mse_p0:.3}, MSE(baseline)={mse_base:.3}"
            ));
        }
        Ok(())
    });
}

// ───────────────────────── 8: projector ensemble margin ─────────────────────────

#[test]
fn criterion_08_projector_sum_middle_singular_value() {
    gate(8, "projector sum middle singular value", 60, || {
        let report = ensemble_middle_sigma_check(100, 25, 100, 2024).map_err(|e| e.to_string())?;
        if report.successes != 100 {
            return Err(format!(
                "sigma_{} cleared 1/10 in only {}/100 trials (min seen {:.4})",
                report.index, report.successes, report.min_sigma
            ));
        }
        if report.min_sigma <= 0.1 {
            return Err(format!("minimum sigma {:.4} not above 1/10", report.min_sigma));
        }
        Ok(())
    });
}

// ───────────────────────── 9: communication scaling ─────────────────────────

#[test]
fn criterion_09_communication_scales_near_linearly() {
    gate(9, "communication scaling in n", 120, || {
        let mut bits = Vec::new();
        for &n in &[64usize, 128, 256] {
            let shards = planted_spectrum_shards(n, 2, &[0.9, 0.7, 0.3], 5, ShardSplit::Even)
                .map_err(|e| e.to_string())?;
            let cluster = Cluster::new(shards).map_err(|e| e.to_string())?;
            // ceil(log2(2n)); every 2n here is a power of two.
            let p = (2 * n).trailing_zeros() as usize;
            let tau = 2f64.powi(-60);
            let mut board = Blackboard::new(Quantization::FixedPoint { tau })
                .map_err(|e| e.to_string())?;
            let mut cfg =
                RandomizedConfig::new(0.5, 0.1, FilterChoice::Composite { p }, 4, 11);
            cfg.declared_range = Some(2f64.powi(45));
            let report =
                randomized_rank_estimate(&cluster, &mut board, &cfg).map_err(|e| e.to_string())?;
            let predicted = predicted_randomized_bits(
                Quantization::FixedPoint { tau },
                n,
                2,
                report.filter.q1_degree,
                2 * p + 1,
                4,
                2f64.powi(45),
            );
            if report.bits_used != predicted {
                return Err(format!(
                    "n={n}: ledger {} bits, closed form {predicted}",
                    report.bits_used
                ));
            }
            bits.push(report.bits_used as f64);
        }
        let ratio = bits[2] / bits[0];
        let cap = 4.0 * (512f64.log2() / 128f64.log2()) * 1.1;
        if ratio > cap {
            return Err(format!(
                "bits(256)/bits(64) = {ratio:.4} exceeds the n*log(n) envelope {cap:.4}"
            ));
        }
        Ok(())
    });
}

// ───────────────────────── 10: quantization robustness ─────────────────────────

#[test]
fn criterion_10_default_grid_step_preserves_estimate() {
    gate(10, "default grid step preserves the estimate", 180, || {
        let shards = planted_spectrum_shards(200, 2, &spectrum_200(), 17, ShardSplit::RandomConvex)
            .map_err(|e| e.to_string())?;
        let cluster = Cluster::new(shards).map_err(|e| e.to_string())?;
        let th = th_main();
        let p = 9usize;
        let d = build_composite(&th, p, 0.1, 200, None).map_err(|e| e.to_string())?.q1.degree;
        let tau = default_tau(cluster.m(), d, cluster.n(), p);
        for seed in 0..20u64 {
            let cfg = RandomizedConfig::new(0.5, 0.1, FilterChoice::Composite { p }, 64, seed);
            let mut exact_board =
                Blackboard::new(Quantization::Exact).map_err(|e| e.to_string())?;
            let exact = randomized_rank_estimate(&cluster, &mut exact_board, &cfg)
                .map_err(|e| e.to_string())?;
            let mut quant_board = Blackboard::new(Quantization::FixedPoint { tau })
                .map_err(|e| e.to_string())?;
            let quantized = randomized_rank_estimate(&cluster, &mut quant_board, &cfg)
                .map_err(|e| e.to_string())?;
            let gap = (quantized.rhat - exact.rhat).abs();
            if gap > 0.1 {
                return Err(format!(
                    "seed {seed}: |rhat_quantized - rhat_exact| = {gap:.4} exceeds 0.1"
                ));
            }
        }
        Ok(())
    });
}
