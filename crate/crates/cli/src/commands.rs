use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use resgcn_core::explain::{average_tp_cam, max_normalized};
use resgcn_core::harness::{
    audit_cv, binary_metrics, generate, monte_carlo_cv, run_trial, subject_level_split, write_cam_csv, write_cam_ply,
    write_trials_csv, CvOptions, Dataset, RunConfig, Split,
};
use resgcn_core::mesh::io::{load_mesh, load_mesh_components};
use resgcn_core::mesh::{build_hierarchy, HierarchyOptions, MeshHierarchy, TriangleMesh};
use resgcn_core::nn::checkpoint::Checkpoint;
use resgcn_core::nn::gradcheck::gradient_suite;
use resgcn_core::nn::{bce_loss, evaluate, Pyramid, ResGcn, SampleSet};
use resgcn_core::{Precision, Real};

use crate::args::*;

/// Result of a command that ran to completion.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    /// A validation check (gradient, audit, leakage) did not hold.
    Failed,
}

pub fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Hierarchy(a) => cmd_hierarchy(a),
        Command::Train(a) => {
            let cfg = resolved(&a.run)?;
            match cfg.model.precision {
                Precision::F32 => cmd_train::<f32>(a, cfg),
                Precision::F64 => cmd_train::<f64>(a, cfg),
            }
        }
        Command::Evaluate(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            match ck.precision {
                Precision::F32 => cmd_evaluate::<f32>(a, ck),
                Precision::F64 => cmd_evaluate::<f64>(a, ck),
            }
        }
        Command::Cv(a) => {
            let cfg = resolved(&a.run)?;
            match cfg.model.precision {
                Precision::F32 => cmd_cv::<f32>(a, cfg),
                Precision::F64 => cmd_cv::<f64>(a, cfg),
            }
        }
        Command::Explain(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            match ck.precision {
                Precision::F32 => cmd_explain::<f32>(a, ck),
                Precision::F64 => cmd_explain::<f64>(a, ck),
            }
        }
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Config(a) => {
            println!("{}", serde_json::to_string_pretty(&resolved(&a.run)?)?);
            Ok(Outcome::Passed)
        }
    }
}

fn resolved(run: &RunOverrides) -> anyhow::Result<RunConfig> {
    let cfg = run.resolve()?;
    cfg.validate().context("invalid run configuration")?;
    Ok(cfg)
}

fn load_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    let ds = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    log::info!(
        "dataset: {} scans, {} nodes x {} features",
        ds.len(),
        ds.samples.n_nodes,
        ds.samples.n_features
    );
    Ok(ds)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<Outcome> {
    let spec = a.synthetic.resolve(a.spec.as_deref())?;
    spec.validate().context("invalid generator parameters")?;
    let cohort = generate(&spec)?;
    cohort.save(&a.out)?;
    let h = &cohort.dataset.hierarchy;
    println!(
        "wrote {} scans of {} subjects to {} (hierarchy depth {}, {} finest nodes, {} features, {} patch vertices)",
        cohort.dataset.len(),
        spec.n_subjects,
        a.out.display(),
        h.depth(),
        h.finest().n_partitions(),
        cohort.dataset.samples.n_features,
        cohort.dataset.manifest.patch_vertices.len()
    );
    Ok(Outcome::Passed)
}

fn cmd_hierarchy(a: HierarchyArgs) -> anyhow::Result<Outcome> {
    let mut opts = HierarchyOptions::default();
    a.options.apply(&mut opts);
    let parts = load_mesh_components(&a.mesh)?;
    let built = parts
        .iter()
        .map(|m| build_hierarchy(m, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let h = if built.len() == 1 {
        built.into_iter().next().unwrap()
    } else {
        MeshHierarchy::compose(&built)?
    };
    write(&a.out, &h.to_json()?)?;
    println!("{} component(s), depth {}", parts.len(), h.depth());
    for (l, level) in h.levels().iter().enumerate() {
        let d = level.mean_neighbor_distance.map_or("-".to_string(), |d| format!("{d:.4}"));
        println!("level {l}: {} partitions, mean neighbor distance {d}", level.n_partitions());
    }
    Ok(Outcome::Passed)
}

fn pyramid<T: Real>(ds: &Dataset, cfg: &resgcn_core::nn::ModelConfig) -> anyhow::Result<Arc<Pyramid<T>>> {
    Ok(Arc::new(Pyramid::from_hierarchy(&ds.hierarchy, cfg.n_blocks, cfg.lambda_max)?))
}

fn cmd_train<T: Real>(a: TrainArgs, cfg: RunConfig) -> anyhow::Result<Outcome> {
    let ds = load_dataset(&a.data)?;
    let pyr = pyramid::<T>(&ds, &cfg.model)?;
    let out = run_trial(&ds, &pyr, &cfg, &CvOptions::default(), a.trial)?;
    let train_cfg = resgcn_core::nn::TrainConfig {
        seed: out.result.train_seed,
        ..cfg.train.clone()
    };
    let ck = out
        .outcome
        .model
        .to_checkpoint(&train_cfg)
        .with_epoch(out.outcome.best_epoch)
        .with_adam(&out.outcome.adam)
        .with_rng(out.outcome.rng.clone())
        .with_normalization(out.normalization.clone());
    std::fs::create_dir_all(&a.out)?;
    ck.save(&a.out.join("checkpoint.json"))?;
    write(&a.out.join("history.csv"), &out.result.history.to_csv())?;
    write(&a.out.join("config.json"), &serde_json::to_string_pretty(&cfg)?)?;
    write_trials_csv(&a.out.join("metrics.csv"), std::slice::from_ref(&out.result))?;
    let m = &out.result.test;
    println!(
        "trial {}: {} train / {} val / {} test scans, best epoch {}, test accuracy {:.4}, auc {}",
        a.trial,
        out.result.n_train,
        out.result.n_val,
        out.result.n_test,
        out.result.best_epoch,
        m.accuracy,
        m.auc.map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(Outcome::Passed)
}

/// Normalized samples, scan indices and network restored from a checkpoint.
struct Restored<T: Real> {
    ds: Dataset,
    samples: SampleSet,
    idx: Vec<usize>,
    model: ResGcn<T>,
}

fn restore<T: Real>(data: &Path, ck: &Checkpoint, run: &RunOverrides, trial: usize, subset: Subset) -> anyhow::Result<Restored<T>> {
    let ds = load_dataset(data)?;
    let Some(mm) = &ck.normalization else {
        bail!("checkpoint carries no feature normalization");
    };
    let mut samples = ds.samples.clone();
    for s in &mut samples.features {
        mm.apply(s, ds.mask.as_deref());
    }
    let idx = if subset == Subset::All {
        (0..ds.len()).collect()
    } else {
        let cfg = resolved(run)?;
        let Split { train, val, test, .. } = subject_level_split(&ds.manifest.records, &cfg.split, trial)?;
        match subset {
            Subset::Train => train,
            Subset::Val => val,
            _ => test,
        }
    };
    let pyr = pyramid::<T>(&ds, &ck.model_config)?;
    let model = ResGcn::from_checkpoint(ck, pyr)?;
    Ok(Restored { ds, samples, idx, model })
}

fn cmd_evaluate<T: Real>(a: EvaluateArgs, ck: Checkpoint) -> anyhow::Result<Outcome> {
    let Restored { ds, samples, idx, mut model } = restore::<T>(&a.data, &ck, &a.run, a.trial, a.subset)?;
    let eval = evaluate(&mut model, &samples, &idx, ck.train_config.batch_size)?;
    let labels = samples.labels_of(&idx);
    let metrics = binary_metrics(&eval.probabilities, &labels)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    if let Some(path) = &a.predictions {
        let mut csv = String::from("index,subject_id,scan_id,label,probability\n");
        for (&i, p) in idx.iter().zip(&eval.probabilities) {
            let r = &ds.manifest.records[i];
            let _ = writeln!(csv, "{i},{},{},{},{p}", r.subject_id, r.scan_id, r.label);
        }
        write(path, &csv)?;
    }
    Ok(Outcome::Passed)
}

fn cmd_cv<T: Real>(a: CvArgs, cfg: RunConfig) -> anyhow::Result<Outcome> {
    let ds = load_dataset(&a.data)?;
    let opts = CvOptions {
        baseline: a.baseline,
        cam: a.cam,
        control_sets: a.control_sets,
    };
    let report = monte_carlo_cv::<T>(&ds, &cfg, &opts)?;
    std::fs::create_dir_all(&a.out)?;
    write_trials_csv(&a.out.join("trials.csv"), &report.trials)?;
    write(&a.out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;

    println!("{} trials, {} parameters", report.trials.len(), report.n_params);
    if let Some(p) = report.baseline_params {
        println!("baseline: {p} parameters");
    }
    for (name, s) in &report.summary {
        println!(
            "{name:>18}: mean {:.4} std {:.4} min {:.4} median {:.4} max {:.4}",
            s.mean, s.std, s.min, s.median, s.max
        );
    }
    if a.cam {
        let hits = report.trials.iter().filter(|t| t.cam.as_ref().is_some_and(|c| c.localized)).count();
        println!("CAM concentrated on the patch in {hits}/{} trials", report.trials.len());
    }
    let leaked: usize = report.trials.iter().map(|t| t.subject_overlap).sum();
    if leaked > 0 {
        eprintln!("subject leakage: {leaked} shared subjects across trials");
        return Ok(Outcome::Failed);
    }
    Ok(Outcome::Passed)
}

/// All structure templates of a dataset as one mesh, in hierarchy vertex
/// order.
fn combined_template(dir: &Path, ds: &Dataset) -> anyhow::Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for s in &ds.manifest.structures {
        let m = load_mesh(&dir.join(&s.template_file))?;
        let off = vertices.len();
        vertices.extend_from_slice(m.vertices());
        faces.extend(m.faces().iter().map(|f| f.map(|v| v + off)));
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}

fn cmd_explain<T: Real>(a: ExplainArgs, ck: Checkpoint) -> anyhow::Result<Outcome> {
    let Restored { ds, samples, idx, mut model } = restore::<T>(&a.data, &ck, &a.run, a.trial, a.subset)?;
    let (finest, count) = average_tp_cam(&mut model, &samples, &idx, a.class, &ds.hierarchy)?;
    let mut values = ds.hierarchy.project_to_mesh(&finest)?;
    if a.normalize {
        values = max_normalized(&values);
    }
    match a.format {
        CamFormat::Csv => write_cam_csv(&a.out, &values)?,
        CamFormat::Ply => write_cam_ply(&a.out, &combined_template(&a.data, &ds)?, &values)?,
    }
    println!(
        "averaged class-{} map over {count} true positives written to {}",
        a.class,
        a.out.display()
    );
    Ok(Outcome::Passed)
}

fn cmd_gradcheck(a: GradcheckArgs) -> anyhow::Result<Outcome> {
    let reports = gradient_suite(a.seed)?;
    let mut ok = true;
    for r in &reports {
        ok &= r.passed();
        println!(
            "{:<12} {:>6} checked  max rel error {:.3e}  tol {:.0e}  {}",
            r.name,
            r.n_checked,
            r.max_rel_error,
            r.tol,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    Ok(if ok { Outcome::Passed } else { Outcome::Failed })
}

/// Largest tolerated deviation of the loss at p = 0.5 from ln 2.
const LOSS_TOL: f64 = 1e-12;

fn cmd_audit(a: AuditArgs) -> anyhow::Result<Outcome> {
    let cfg = resolved(&a.run)?;
    let ds = load_dataset(&a.data)?;
    let audit = audit_cv(&ds.manifest.records, &cfg.split)?;
    for t in &audit.trials {
        println!(
            "trial {:>3}: overlap {} misassigned {} test {:.3} val {:.3} label deviation {:.4} {}",
            t.trial,
            t.subject_overlap,
            t.misassigned_scans,
            t.test_fraction,
            t.val_fraction,
            t.label_deviation,
            if t.passed() { "ok" } else { "FAIL" }
        );
    }
    let loss_err = (bce_loss(&[0.5, 0.5], &[0, 1])? - std::f64::consts::LN_2).abs();
    let loss_ok = loss_err <= LOSS_TOL;
    println!(
        "{} trials (test fraction {}, validation fraction {}), loss at p=0.5 off ln 2 by {loss_err:.1e}",
        audit.n_trials, cfg.split.test_fraction, cfg.split.val_fraction
    );
    if let Some(path) = &a.out {
        write(path, &serde_json::to_string_pretty(&audit)?)?;
    }
    let passed = audit.passed() && loss_ok;
    println!("audit {}", if passed { "passed" } else { "FAILED" });
    Ok(if passed { Outcome::Passed } else { Outcome::Failed })
}
