//! Acceptance suite. Every criterion runs at its full tolerance and prints
//! one PASS or FAIL line; the process exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resgcn_core::harness::{
    audit_cv, generate, monte_carlo_cv, run_trial, write_trials_csv, CvOptions, CvReport, Dataset, RunConfig,
    SyntheticSpec,
};
use resgcn_core::mesh::{build_hierarchy, HierarchyOptions};
use resgcn_core::nn::gradcheck::gradient_suite;
use resgcn_core::nn::{bce_loss, Pyramid};
use resgcn_core::testing::random_icosphere;

type Outcome = Result<String, String>;

fn spectral_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=64);
        let (f_in, f_out, order) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..7));
        worst = worst.max(common::conv_oracle_error(&mut rng, n, f_in, f_out, order));
    }
    let elapsed = start.elapsed();
    let detail = format!("200 graphs, max relative error {worst:.2e} (tol 1e-8), {elapsed:.2?} (limit 60 s)");
    if worst <= 1e-8 && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let reports = gradient_suite(7).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let lines: Vec<String> = reports
        .iter()
        .map(|r| format!("{} {:.1e}/{:.0e}", r.name, r.max_rel_error, r.tol))
        .collect();
    let detail = format!("{} ({elapsed:.2?}, limit 5 min)", lines.join(", "));
    if reports.iter().all(|r| r.passed()) && elapsed < Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hierarchies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut weight, mut mean, mut levels) = (0.0f64, 0.0f64, 0);
    for i in 0..20 {
        let mesh = random_icosphere(&mut rng, if i % 4 == 3 { 3 } else { 2 });
        let opts = HierarchyOptions {
            sigma: rng.random_range(0.5..4.0),
            stop_distance: 1e-12,
            max_depth: rng.random_range(2..=6),
        };
        let h = build_hierarchy(&mesh, &opts).map_err(|e| format!("mesh {i}: {e}"))?;
        let audit = common::audit_hierarchy(&mesh, &h).map_err(|e| format!("mesh {i}: {e}"))?;
        weight = weight.max(audit.weight_error);
        mean = mean.max(audit.mean_error);
        levels += audit.levels;
    }
    let detail = format!("20 meshes, {levels} levels, weight error {weight:.1e} (tol 1e-12), mean error {mean:.1e} (tol 1e-9)");
    if weight <= 1e-12 && mean <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradcam() -> Outcome {
    for seed in 0..50 {
        common::gradcam_invariants(seed)?;
    }
    Ok("50 random layers and networks, exact comparisons".into())
}

fn protocol(ds: &Dataset) -> Outcome {
    let cfg = RunConfig::default();
    let spec = &cfg.split;
    if (spec.test_fraction, spec.val_fraction, spec.n_trials) != (0.2, 0.2, 25) {
        return Err(format!("default split is {spec:?}"));
    }
    let audit = audit_cv(&ds.manifest.records, spec).map_err(|e| e.to_string())?;
    let loss = bce_loss(&[0.5, 0.5], &[0, 1]).map_err(|e| e.to_string())?;
    let loss_error = (loss - std::f64::consts::LN_2).abs();
    let worst = audit.trials.iter().map(|t| t.label_deviation).fold(0.0, f64::max);
    let detail = format!(
        "{} trials audited, overlap {}, worst label deviation {worst:.3} (tol {}), |loss(0.5) - ln 2| = {loss_error:.1e}",
        audit.n_trials,
        audit.total_overlap(),
        spec.label_tolerance
    );
    if audit.passed() && audit.n_trials == 25 && loss_error <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cv_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.epochs = 30;
    cfg
}

fn end_to_end(report: &CvReport, elapsed: Duration) -> Outcome {
    let acc = &report.summary["accuracy"];
    let leaks: usize = report.trials.iter().map(|t| t.subject_overlap).sum();
    let detail = format!(
        "{} trials, mean test accuracy {:.4} (sd {:.4}), subject overlap {leaks}, {elapsed:.2?} (limit 30 min)",
        report.trials.len(),
        acc.mean,
        acc.std
    );
    if report.trials.len() == 25 && acc.mean >= 0.90 && leaks == 0 && elapsed <= Duration::from_secs(1800) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn localization(report: &CvReport) -> Outcome {
    let cams: Vec<_> = report.trials.iter().take(20).filter_map(|t| t.cam.as_ref()).collect();
    let hits = cams.iter().filter(|c| c.localized).count();
    let ratio: Vec<String> = cams
        .iter()
        .map(|c| format!("{:.2}", c.patch_mass / c.control_mass.max(f64::MIN_POSITIVE)))
        .collect();
    let detail = format!(
        "{hits}/{} runs localized (need 16), patch/control mass ratios [{}]",
        cams.len(),
        ratio.join(" ")
    );
    if cams.len() == 20 && hits >= 16 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn null_signal() -> Outcome {
    let ds = generate(&SyntheticSpec {
        patch_depth: 0.0,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?
    .dataset;
    let report = monte_carlo_cv::<f32>(&ds, &cv_config(), &CvOptions::default()).map_err(|e| e.to_string())?;
    let acc = &report.summary["accuracy"];
    let detail = format!("mean test accuracy {:.4} (sd {:.4}), required in [0.4, 0.6]", acc.mean, acc.std);
    if (0.4..=0.6).contains(&acc.mean) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(ds: &Dataset) -> Outcome {
    let mut cfg = cv_config();
    cfg.model.precision = resgcn_core::Precision::F64;
    cfg.train.epochs = 5;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<Vec<Vec<u8>>, String> {
        pool.install(|| {
            let pyramid = Arc::new(
                Pyramid::<f64>::from_hierarchy(&ds.hierarchy, cfg.model.n_blocks, cfg.model.lambda_max)
                    .map_err(|e| e.to_string())?,
            );
            let out = run_trial::<f64>(ds, &pyramid, &cfg, &CvOptions::default(), 0).map_err(|e| e.to_string())?;
            let checkpoint = out
                .outcome
                .model
                .to_checkpoint(&cfg.train)
                .with_epoch(out.outcome.best_epoch)
                .with_adam(&out.outcome.adam)
                .with_rng(out.outcome.rng.clone())
                .with_normalization(out.normalization.clone());
            let csv = dir.path().join(format!("trials_{tag}.csv"));
            write_trials_csv(&csv, std::slice::from_ref(&out.result)).map_err(|e| e.to_string())?;
            Ok(vec![
                checkpoint.to_json().into_bytes(),
                std::fs::read(&csv).map_err(|e| e.to_string())?,
                out.result.history.to_csv().into_bytes(),
            ])
        })
    };
    let (a, b) = (run("a")?, run("b")?);
    let sizes: Vec<usize> = a.iter().map(Vec::len).collect();
    let detail = format!("checkpoint, trials CSV and history CSV of {sizes:?} bytes");
    if a == b {
        Ok(format!("{detail} are bitwise identical"))
    } else {
        Err(format!("{detail} differ between runs"))
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {name}: {detail}");
        }
    };

    report("spectral oracle equivalence", spectral_oracle());
    report("gradient suite", gradients());
    report("hierarchy invariants", hierarchies());
    report("grad-cam invariants", gradcam());

    match generate(&SyntheticSpec::default()) {
        Ok(cohort) => {
            let ds = cohort.dataset;
            report("protocol fidelity", protocol(&ds));
            let opts = CvOptions {
                cam: true,
                ..Default::default()
            };
            let start = Instant::now();
            match monte_carlo_cv::<f32>(&ds, &cv_config(), &opts) {
                Ok(cv) => {
                    report("end-to-end synthetic task", end_to_end(&cv, start.elapsed()));
                    report("cam localization", localization(&cv));
                }
                Err(e) => {
                    report("end-to-end synthetic task", Err(e.to_string()));
                    report("cam localization", Err("cross-validation did not run".into()));
                }
            }
            report("determinism", determinism(&ds));
        }
        Err(e) => {
            for name in ["protocol fidelity", "end-to-end synthetic task", "cam localization", "determinism"] {
                report(name, Err(format!("dataset generation failed: {e}")));
            }
        }
    }
    report("null-signal control", null_signal());

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
