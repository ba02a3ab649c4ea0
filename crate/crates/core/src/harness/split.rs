use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, SubjectRecord};

/// Subject-level Monte Carlo cross-validation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Fraction of each class's subjects held out for testing.
    pub test_fraction: f64,
    /// Fraction of the remaining subjects used for validation.
    pub val_fraction: f64,
    pub n_trials: usize,
    /// Trial `t` shuffles with seed `seed + t`.
    pub seed: u64,
    /// Largest accepted gap between a set's class-1 proportion and the
    /// cohort's.
    pub label_tolerance: f64,
    pub max_retries: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            val_fraction: 0.2,
            n_trials: 25,
            seed: 0,
            label_tolerance: 0.05,
            max_retries: 100,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let frac = |f: f64| f > 0.0 && f < 1.0;
        if !frac(self.test_fraction) || !frac(self.val_fraction) {
            return Err(HarnessError::Config("split fractions must lie in (0, 1)".into()));
        }
        if self.n_trials == 0 || self.max_retries == 0 {
            return Err(HarnessError::Config("n_trials and max_retries must be positive".into()));
        }
        if !(self.label_tolerance >= 0.0) {
            return Err(HarnessError::Config("label_tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    /// Test and validation subject counts for a class of `n` subjects.
    pub fn class_counts(&self, n: usize) -> (usize, usize) {
        let test = ((n as f64 * self.test_fraction).round() as usize).max(1);
        let val = (((n - test.min(n)) as f64 * self.val_fraction).round() as usize).max(1);
        (test, val)
    }
}

/// Scan indices of one trial. Every subject lands in exactly one set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub trial: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Shuffles drawn before the label check passed (or the best of all).
    pub attempts: usize,
    pub label_deviation: f64,
}

struct Subjects<'a> {
    /// Per class, subject ids in sorted order.
    by_class: BTreeMap<u8, Vec<&'a str>>,
    scans: BTreeMap<&'a str, Vec<usize>>,
}

fn group(records: &[SubjectRecord]) -> Result<Subjects<'_>, HarnessError> {
    let mut label_of: BTreeMap<&str, u8> = BTreeMap::new();
    let mut scans: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        match label_of.insert(&r.subject_id, r.label) {
            Some(l) if l != r.label => return Err(HarnessError::InconsistentLabels(r.subject_id.clone())),
            _ => {}
        }
        scans.entry(&r.subject_id).or_default().push(i);
    }
    let mut by_class: BTreeMap<u8, Vec<&str>> = BTreeMap::new();
    for (s, l) in label_of {
        by_class.entry(l).or_default().push(s);
    }
    Ok(Subjects { by_class, scans })
}

fn proportion(records: &[SubjectRecord], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().filter(|&&i| records[i].label == 1).count() as f64 / idx.len() as f64
}

fn label_deviation(records: &[SubjectRecord], sets: [&[usize]; 3]) -> f64 {
    let all: Vec<usize> = (0..records.len()).collect();
    let global = proportion(records, &all);
    sets.iter()
        .map(|s| (proportion(records, s) - global).abs())
        .fold(0.0, f64::max)
}

/// Stratified subject-level split for one trial. Subjects of each class are
/// shuffled and the first `max(1, round(n * test_fraction))` go to test, the
/// next `max(1, round(rest * val_fraction))` to validation. Shuffles are
/// redrawn until every set's scan-level class proportion is within the
/// tolerance; after `max_retries` the closest split is used.
pub fn subject_level_split(records: &[SubjectRecord], spec: &SplitSpec, trial: usize) -> Result<Split, HarnessError> {
    spec.validate()?;
    let subjects = group(records)?;
    for (&class, ids) in &subjects.by_class {
        let (t, v) = spec.class_counts(ids.len());
        if ids.len() < t + v + 1 {
            return Err(HarnessError::TooFewSubjects { class, n: ids.len() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(trial as u64));
    let mut best: Option<Split> = None;
    for attempt in 1..=spec.max_retries {
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for ids in subjects.by_class.values() {
            let mut ids = ids.clone();
            ids.shuffle(&mut rng);
            let (t, v) = spec.class_counts(ids.len());
            for (k, s) in ids.iter().enumerate() {
                let dst = if k < t {
                    &mut test
                } else if k < t + v {
                    &mut val
                } else {
                    &mut train
                };
                dst.extend(&subjects.scans[s]);
            }
        }
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        let dev = label_deviation(records, [&train, &val, &test]);
        let split = Split {
            trial,
            train,
            val,
            test,
            attempts: attempt,
            label_deviation: dev,
        };
        if dev <= spec.label_tolerance {
            return Ok(split);
        }
        if best.as_ref().is_none_or(|b| dev < b.label_deviation) {
            best = Some(split);
        }
    }
    let best = best.expect("at least one attempt is made");
    log::warn!(
        "trial {trial}: no split within label tolerance after {} attempts; using deviation {:.3}",
        spec.max_retries,
        best.label_deviation
    );
    Ok(best)
}

/// Independent check of one split against the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub trial: usize,
    /// Subjects that appear in more than one set.
    pub subject_overlap: usize,
    /// Scans missing from every set or present in several.
    pub misassigned_scans: usize,
    /// Per-class subject counts follow the rounding rule.
    pub counts_match_rule: bool,
    /// Test subjects over all subjects.
    pub test_fraction: f64,
    /// Validation subjects over non-test subjects.
    pub val_fraction: f64,
    pub label_deviation: f64,
    pub within_tolerance: bool,
}

impl SplitAudit {
    pub fn passed(&self) -> bool {
        self.subject_overlap == 0 && self.misassigned_scans == 0 && self.counts_match_rule && self.within_tolerance
    }
}

pub fn audit_split(records: &[SubjectRecord], split: &Split, spec: &SplitSpec) -> Result<SplitAudit, HarnessError> {
    let subjects = group(records)?;
    let sets = [&split.train, &split.val, &split.test];
    let mut seen = vec![0usize; records.len()];
    let mut members: [BTreeSet<&str>; 3] = Default::default();
    for (set, names) in sets.iter().zip(members.iter_mut()) {
        for &i in set.iter() {
            if i >= records.len() {
                return Err(HarnessError::Dataset(format!("split refers to scan {i}")));
            }
            seen[i] += 1;
            names.insert(&records[i].subject_id);
        }
    }
    let misassigned_scans = seen.iter().filter(|&&c| c != 1).count();
    let subject_overlap = subjects
        .scans
        .keys()
        .filter(|s| members.iter().filter(|m| m.contains(*s)).count() > 1)
        .count();
    let mut counts_match_rule = true;
    for ids in subjects.by_class.values() {
        let (t, v) = spec.class_counts(ids.len());
        let count = |m: &BTreeSet<&str>| ids.iter().filter(|s| m.contains(*s)).count();
        counts_match_rule &= count(&members[2]) == t && count(&members[1]) == v && count(&members[0]) == ids.len() - t - v;
    }
    let n_subjects = subjects.scans.len() as f64;
    let n_test = members[2].len() as f64;
    let label_deviation = label_deviation(records, sets.map(|s| s.as_slice()));
    Ok(SplitAudit {
        trial: split.trial,
        subject_overlap,
        misassigned_scans,
        counts_match_rule,
        test_fraction: n_test / n_subjects,
        val_fraction: members[1].len() as f64 / (n_subjects - n_test),
        label_deviation,
        within_tolerance: label_deviation <= spec.label_tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvAudit {
    pub n_trials: usize,
    pub trials: Vec<SplitAudit>,
}

impl CvAudit {
    pub fn passed(&self) -> bool {
        self.trials.len() == self.n_trials && self.trials.iter().all(SplitAudit::passed)
    }

    pub fn total_overlap(&self) -> usize {
        self.trials.iter().map(|t| t.subject_overlap).sum()
    }
}

/// Regenerates and audits every trial's split.
pub fn audit_cv(records: &[SubjectRecord], spec: &SplitSpec) -> Result<CvAudit, HarnessError> {
    let trials = (0..spec.n_trials)
        .map(|t| audit_split(records, &subject_level_split(records, spec, t)?, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvAudit {
        n_trials: spec.n_trials,
        trials,
    })
}

#[cfg(test)]
pub(crate) fn cohort(n_subjects: usize, scans: usize) -> Vec<SubjectRecord> {
    (0..n_subjects)
        .flat_map(|s| {
            (0..scans).map(move |k| SubjectRecord {
                subject_id: format!("s{s:02}"),
                scan_id: format!("{k}"),
                label: (s % 2) as u8,
                mesh_files: Vec::new(),
            })
        })
        .collect()
}
