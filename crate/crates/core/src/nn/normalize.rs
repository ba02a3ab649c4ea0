use serde::{Deserialize, Serialize};

use super::NnError;

/// Per-feature affine map onto `[-1, 1]`, fitted on training samples.
///
/// Samples are `nodes x features` row-major. Entries flagged in the padding
/// mask are structural zeros: they are excluded from the extrema and stay
/// zero after normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit<'a>(
        samples: impl IntoIterator<Item = &'a [f64]>,
        n_features: usize,
        mask: Option<&[bool]>,
    ) -> Result<Self, NnError> {
        let mut min = vec![f64::INFINITY; n_features];
        let mut max = vec![f64::NEG_INFINITY; n_features];
        for s in samples {
            if let Some(m) = mask {
                if m.len() != s.len() {
                    return Err(NnError::Shape("padding mask does not match sample shape".into()));
                }
            }
            for (i, &v) in s.iter().enumerate() {
                if mask.is_some_and(|m| m[i]) {
                    continue;
                }
                let f = i % n_features;
                min[f] = min[f].min(v);
                max[f] = max[f].max(v);
            }
        }
        if let Some(f) = min.iter().position(|v| v.is_infinite()) {
            return Err(NnError::EmptyFeature(f));
        }
        Ok(Self { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Normalizes one sample in place. Degenerate features map to 0.
    pub fn apply(&self, sample: &mut [f64], mask: Option<&[bool]>) {
        let nf = self.n_features();
        for (i, v) in sample.iter_mut().enumerate() {
            if mask.is_some_and(|m| m[i]) {
                *v = 0.0;
                continue;
            }
            let f = i % nf;
            let span = self.max[f] - self.min[f];
            *v = if span > 0.0 { 2.0 * (*v - self.min[f]) / span - 1.0 } else { 0.0 };
        }
    }
}

/// Fits on the samples selected by `fit_on` and normalizes every sample.
pub fn minmax_normalize(
    samples: &mut [Vec<f64>],
    n_features: usize,
    mask: Option<&[bool]>,
    fit_on: &[usize],
) -> Result<MinMax, NnError> {
    let mm = MinMax::fit(fit_on.iter().map(|&i| samples[i].as_slice()), n_features, mask)?;
    for s in samples.iter_mut() {
        mm.apply(s, mask);
    }
    Ok(mm)
}
