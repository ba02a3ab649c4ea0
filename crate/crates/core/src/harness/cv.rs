use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{binary_metrics, summarize, Metrics, Summary};
use super::split::{audit_split, subject_level_split, Split};
use super::{Dataset, HarnessError, RunConfig};
use crate::explain::{average_tp_cam, ExplainError};
use crate::nn::{
    evaluate, mlp_width_for_budget, seeded_rng, train, Classifier, History, MinMax, Mlp, Pyramid, ResGcn, SampleSet,
    TrainConfig, TrainOutcome, INIT_STREAM,
};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Also train the parameter-matched fully connected baseline.
    pub baseline: bool,
    /// Compute the averaged true-positive class activation map and test
    /// whether it concentrates on the dataset's signal patch.
    pub cam: bool,
    /// Random vertex sets compared against the patch.
    pub control_sets: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            baseline: false,
            cam: false,
            control_sets: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamOutcome {
    pub true_positives: usize,
    /// Summed map over the patch vertices.
    pub patch_mass: f64,
    /// Mean summed map over random vertex sets of the patch's size.
    pub control_mass: f64,
    pub localized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub split_seed: u64,
    pub train_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Subjects shared between sets, as found by the split audit.
    pub subject_overlap: usize,
    pub best_epoch: usize,
    pub test: Metrics,
    pub baseline: Option<Metrics>,
    pub cam: Option<CamOutcome>,
    pub history: History,
}

/// A finished trial together with the selected model.
#[derive(Clone, Debug)]
pub struct TrialOutput<T: Real> {
    pub result: TrialResult,
    pub split: Split,
    pub normalization: MinMax,
    /// Samples after the trial's normalization.
    pub samples: SampleSet,
    pub outcome: TrainOutcome<T, ResGcn<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub n_params: usize,
    pub baseline_params: Option<usize>,
    pub trials: Vec<TrialResult>,
    /// Distribution of each metric over trials.
    pub summary: BTreeMap<String, Summary>,
}

/// Summed values over `patch` against the mean over `n_controls` random
/// vertex sets of the same size.
pub fn cam_localization(values: &[f64], patch: &[usize], n_controls: usize, seed: u64) -> (f64, f64) {
    let mass = |idx: &mut dyn Iterator<Item = usize>| idx.map(|i| values[i]).sum::<f64>();
    let patch_mass = mass(&mut patch.iter().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let control = (0..n_controls)
        .map(|_| mass(&mut index::sample(&mut rng, values.len(), patch.len()).into_iter()))
        .sum::<f64>()
        / n_controls.max(1) as f64;
    (patch_mass, control)
}

fn normalized(ds: &Dataset, fit_on: &[usize]) -> Result<(MinMax, SampleSet), HarnessError> {
    let mask = ds.mask.as_deref();
    let mm = MinMax::fit(
        fit_on.iter().map(|&i| ds.samples.features[i].as_slice()),
        ds.samples.n_features,
        mask,
    )?;
    let mut samples = ds.samples.clone();
    for s in &mut samples.features {
        mm.apply(s, mask);
    }
    Ok((mm, samples))
}

/// One trial: split, normalize on the training scans, train, evaluate on
/// the test scans. Trial `t` uses split seed `split.seed + t` and training
/// seed `train.seed + t`.
pub fn run_trial<T: Real>(
    ds: &Dataset,
    pyramid: &Arc<Pyramid<T>>,
    cfg: &RunConfig,
    opts: &CvOptions,
    trial: usize,
) -> Result<TrialOutput<T>, HarnessError> {
    cfg.validate()?;
    let records = &ds.manifest.records;
    let split = subject_level_split(records, &cfg.split, trial)?;
    let audit = audit_split(records, &split, &cfg.split)?;
    let (normalization, samples) = normalized(ds, &split.train)?;
    let tcfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(trial as u64),
        ..cfg.train.clone()
    };

    let mut init = seeded_rng(tcfg.seed, INIT_STREAM);
    let model = ResGcn::new(&cfg.model, pyramid.clone(), samples.n_features, &mut init)?;
    let n_conv = model.n_conv_layers();
    let n_params = model.store().n_params();
    let mut outcome = train(model, &samples, &split.train, &split.val, &tcfg)?;
    let eval = evaluate(&mut outcome.model, &samples, &split.test, tcfg.batch_size)?;
    let test = binary_metrics(&eval.probabilities, &samples.labels_of(&split.test))?;

    let baseline = if opts.baseline {
        let input = samples.sample_len();
        let (width, _) = mlp_width_for_budget(input, n_conv, n_params);
        let mut init = seeded_rng(tcfg.seed, INIT_STREAM);
        let mlp = Mlp::<T>::new(input, n_conv, width, &mut init);
        let mut out = train(mlp, &samples, &split.train, &split.val, &tcfg)?;
        let e = evaluate(&mut out.model, &samples, &split.test, tcfg.batch_size)?;
        Some(binary_metrics(&e.probabilities, &samples.labels_of(&split.test))?)
    } else {
        None
    };

    let cam = if opts.cam {
        let patch = &ds.manifest.patch_vertices;
        if patch.is_empty() {
            return Err(HarnessError::Dataset("CAM localization needs patch vertices".into()));
        }
        match average_tp_cam(&mut outcome.model, &samples, &split.test, 1, &ds.hierarchy) {
            Ok((finest, true_positives)) => {
                let mesh = ds.hierarchy.project_to_mesh(&finest)?;
                let n_first = ds.manifest.structures[0].n_vertices;
                let (patch_mass, control_mass) =
                    cam_localization(&mesh[..n_first], patch, opts.control_sets, tcfg.seed);
                Some(CamOutcome {
                    true_positives,
                    patch_mass,
                    control_mass,
                    localized: patch_mass > control_mass,
                })
            }
            Err(ExplainError::NoTruePositives(_)) => Some(CamOutcome {
                true_positives: 0,
                patch_mass: 0.0,
                control_mass: 0.0,
                localized: false,
            }),
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    log::info!(
        "trial {trial}: test accuracy {:.3}, best epoch {}",
        test.accuracy,
        outcome.best_epoch
    );
    let result = TrialResult {
        trial,
        split_seed: cfg.split.seed.wrapping_add(trial as u64),
        train_seed: tcfg.seed,
        n_train: split.train.len(),
        n_val: split.val.len(),
        n_test: split.test.len(),
        subject_overlap: audit.subject_overlap,
        best_epoch: outcome.best_epoch,
        test,
        baseline,
        cam,
        history: outcome.history.clone(),
    };
    Ok(TrialOutput {
        result,
        split,
        normalization,
        samples,
        outcome,
    })
}

fn summaries(trials: &[TrialResult]) -> BTreeMap<String, Summary> {
    let mut out = BTreeMap::new();
    let mut add = |name: &str, values: Vec<f64>| {
        if let Some(s) = summarize(&values) {
            out.insert(name.to_string(), s);
        }
    };
    add("accuracy", trials.iter().map(|t| t.test.accuracy).collect());
    add("sensitivity", trials.iter().filter_map(|t| t.test.sensitivity).collect());
    add("specificity", trials.iter().filter_map(|t| t.test.specificity).collect());
    add("auc", trials.iter().filter_map(|t| t.test.auc).collect());
    let base: Vec<&Metrics> = trials.iter().filter_map(|t| t.baseline.as_ref()).collect();
    add("baseline_accuracy", base.iter().map(|m| m.accuracy).collect());
    add("baseline_auc", base.iter().filter_map(|m| m.auc).collect());
    out
}

/// Runs every trial (in parallel, each independently seeded) and
/// summarizes the test metrics.
pub fn monte_carlo_cv<T: Real>(ds: &Dataset, cfg: &RunConfig, opts: &CvOptions) -> Result<CvReport, HarnessError> {
    cfg.validate()?;
    let pyramid = Arc::new(Pyramid::<T>::from_hierarchy(
        &ds.hierarchy,
        cfg.model.n_blocks,
        cfg.model.lambda_max,
    )?);
    let trials = (0..cfg.split.n_trials)
        .into_par_iter()
        .map(|t| run_trial(ds, &pyramid, cfg, opts, t).map(|o| o.result))
        .collect::<Result<Vec<_>, _>>()?;
    let n_features = ds.samples.n_features;
    let coarse = pyramid.nodes(cfg.model.n_blocks);
    let n_params = ResGcn::<T>::count_params(&cfg.model, n_features, coarse);
    let baseline_params = opts.baseline.then(|| {
        let depth = 2 * (cfg.model.n_blocks + 1);
        mlp_width_for_budget(ds.samples.sample_len(), depth, n_params).1
    });
    Ok(CvReport {
        n_params,
        baseline_params,
        summary: summaries(&trials),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate, SplitSpec, SyntheticSpec};
    use crate::mesh::HierarchyOptions;
    use crate::nn::ModelConfig;

    fn tiny() -> (Dataset, RunConfig) {
        let ds = generate(&SyntheticSpec {
            n_subjects: 10,
            scans_per_subject: 2,
            subdivisions: 2,
            radius: 4.0,
            hierarchy: HierarchyOptions {
                sigma: 2.0,
                stop_distance: f64::MIN_POSITIVE,
                max_depth: 4,
            },
            ..Default::default()
        })
        .unwrap()
        .dataset;
        let cfg = RunConfig {
            model: ModelConfig {
                kernels_per_conv: 4,
                n_blocks: 2,
                fc_units: 8,
                post_resblock_units: 4,
                ..Default::default()
            },
            train: TrainConfig {
                batch_size: 4,
                epochs: 2,
                ..Default::default()
            },
            split: SplitSpec {
                n_trials: 2,
                ..Default::default()
            },
        };
        (ds, cfg)
    }

    #[test]
    fn trials_are_reproducible_and_leak_free() {
        let (ds, cfg) = tiny();
        let opts = CvOptions {
            baseline: true,
            cam: true,
            control_sets: 10,
        };
        let a = monte_carlo_cv::<f64>(&ds, &cfg, &opts).unwrap();
        let b = monte_carlo_cv::<f64>(&ds, &cfg, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 2);
        for t in &a.trials {
            assert_eq!(t.subject_overlap, 0);
            assert_eq!(t.n_test, 4);
            assert_eq!(t.history.records.len(), 2);
            assert!(t.baseline.is_some() && t.cam.is_some());
        }
        assert!(a.summary.contains_key("accuracy"));
        let bp = a.baseline_params.unwrap() as f64;
        assert!((bp - a.n_params as f64).abs() / (a.n_params as f64) < 0.05);
    }

    #[test]
    fn single_trial_matches_direct_run() {
        let (ds, mut cfg) = tiny();
        cfg.split.n_trials = 1;
        let report = monte_carlo_cv::<f64>(&ds, &cfg, &CvOptions::default()).unwrap();
        let pyramid = Arc::new(Pyramid::from_hierarchy(&ds.hierarchy, 2, cfg.model.lambda_max).unwrap());
        let direct = run_trial::<f64>(&ds, &pyramid, &cfg, &CvOptions::default(), 0).unwrap();
        assert_eq!(report.trials[0], direct.result);
    }

    #[test]
    fn localization_compares_against_random_sets() {
        let mut v = vec![0.0; 50];
        for x in &mut v[..5] {
            *x = 1.0;
        }
        let (p, c) = cam_localization(&v, &[0, 1, 2, 3, 4], 200, 0);
        assert_eq!(p, 5.0);
        assert!((c - 0.5).abs() < 0.15);
    }
}
