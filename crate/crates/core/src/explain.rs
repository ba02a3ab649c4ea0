//! Gradient-weighted class activation maps for mesh networks.
//!
//! Feature maps `A` are the post-ResBlock output (the last graph
//! convolution before the fully connected head). Importance weights are the
//! vertex-averaged gradients of the class logit with respect to each map,
//! and the map is the rectified weighted sum of the feature maps. Maps are
//! carried to the finest hierarchy level by copying each value down the
//! partition tree.

use thiserror::Error;

use crate::mesh::{upsample_to_finest, MeshError, MeshHierarchy};
use crate::nn::{probabilities, Classifier, NnError, ResGcn, SampleSet};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("class {0} is not 0 or 1")]
    InvalidClass(usize),
    #[error("no true positives for class {0}")]
    NoTruePositives(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Nonnegative relevance per vertex of one hierarchy level.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassActivationMap {
    pub level: usize,
    pub class: usize,
    pub values: Vec<f64>,
    /// Values copied to the finest level, once upsampled.
    pub finest_values: Option<Vec<f64>>,
}

/// Per-map mean over vertices of `d y_c / d A`, given as `nodes x maps`.
pub fn neuron_importance(grad: &[f64], n_maps: usize) -> Result<Vec<f64>, ExplainError> {
    if n_maps == 0 || grad.is_empty() || !grad.len().is_multiple_of(n_maps) {
        return Err(ExplainError::Shape(format!("{} gradient values for {n_maps} maps", grad.len())));
    }
    let nodes = grad.len() / n_maps;
    let mut alpha = vec![0.0; n_maps];
    for row in grad.chunks_exact(n_maps) {
        for (a, &g) in alpha.iter_mut().zip(row) {
            *a += g;
        }
    }
    alpha.iter_mut().for_each(|a| *a /= nodes as f64);
    Ok(alpha)
}

/// `ReLU(sum_k alpha_k A_k)` per vertex, with `A` given as `nodes x maps`.
pub fn class_activation_map(
    alpha: &[f64],
    maps: &[f64],
    level: usize,
    class: usize,
) -> Result<ClassActivationMap, ExplainError> {
    let k = alpha.len();
    if k == 0 || !maps.len().is_multiple_of(k) {
        return Err(ExplainError::Shape(format!("{} map values for {k} weights", maps.len())));
    }
    let values = maps
        .chunks_exact(k)
        .map(|row| row.iter().zip(alpha).map(|(a, w)| a * w).sum::<f64>().max(0.0))
        .collect();
    Ok(ClassActivationMap {
        level,
        class,
        values,
        finest_values: None,
    })
}

/// Copies the map to the finest level of `h`.
pub fn upsample_cam(cam: &ClassActivationMap, h: &MeshHierarchy) -> Result<ClassActivationMap, ExplainError> {
    let finest = upsample_to_finest(h, &cam.values, cam.level)?;
    Ok(ClassActivationMap {
        finest_values: Some(finest),
        ..cam.clone()
    })
}

/// Hierarchy level of the post-ResBlock feature maps.
pub fn cam_level<T: Real>(model: &ResGcn<T>, h: &MeshHierarchy) -> Result<usize, ExplainError> {
    let n_blocks = model.config().n_blocks;
    let level = h
        .depth()
        .checked_sub(n_blocks)
        .ok_or_else(|| ExplainError::Shape("model is deeper than the hierarchy".into()))?;
    if h.level_size(level) != model.coarse_nodes() {
        return Err(ExplainError::Shape(format!(
            "hierarchy level {level} has {} vertices, model expects {}",
            h.level_size(level),
            model.coarse_nodes()
        )));
    }
    Ok(level)
}

/// Grad-CAM for class `class` of every sample in a batch, in inference mode.
/// Returns the maps and the class-1 probabilities.
pub fn grad_cam_batch<T: Real>(
    model: &mut ResGcn<T>,
    x: &[T],
    batch: usize,
    class: usize,
    level: usize,
) -> Result<(Vec<ClassActivationMap>, Vec<f64>), ExplainError> {
    if class > 1 {
        return Err(ExplainError::InvalidClass(class));
    }
    let (logits, cache) = model.forward(x, batch, false)?;
    let mut dlogits = vec![T::zero(); 2 * batch];
    for b in 0..batch {
        dlogits[2 * b + class] = T::one();
    }
    // In inference mode samples do not interact, so one backward pass gives
    // each sample's own gradient.
    let grad = model.activation_grad(&cache, &dlogits)?;
    let per = grad.len() / batch;
    let n_maps = model.config().post_resblock_units;
    let act = cache.activation();
    let mut cams = Vec::with_capacity(batch);
    for b in 0..batch {
        let g: Vec<f64> = grad[b * per..(b + 1) * per].iter().map(|v| v.f64()).collect();
        let a: Vec<f64> = act[b * per..(b + 1) * per].iter().map(|v| v.f64()).collect();
        let alpha = neuron_importance(&g, n_maps)?;
        cams.push(class_activation_map(&alpha, &a, level, class)?);
    }
    Ok((cams, probabilities(&logits)))
}

/// Mean finest-level map over the samples of `idx` that are predicted as
/// `class` and labelled `class`. Maps are averaged as they are, without
/// per-sample rescaling. Returns the average and the number of samples.
pub fn average_tp_cam<T: Real>(
    model: &mut ResGcn<T>,
    data: &SampleSet,
    idx: &[usize],
    class: usize,
    h: &MeshHierarchy,
) -> Result<(Vec<f64>, usize), ExplainError> {
    let level = cam_level(model, h)?;
    let mut sum = vec![0.0; h.level_size(h.depth())];
    let mut count = 0;
    for part in idx.chunks(32) {
        let (cams, probs) = grad_cam_batch(model, &data.gather::<T>(part), part.len(), class, level)?;
        for ((cam, p), &i) in cams.iter().zip(probs).zip(part) {
            let predicted = usize::from(p >= 0.5);
            if predicted == class && usize::from(data.labels[i]) == class {
                let fine = upsample_to_finest(h, &cam.values, level)?;
                for (s, v) in sum.iter_mut().zip(fine) {
                    *s += v;
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(ExplainError::NoTruePositives(class));
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok((sum, count))
}

/// Rescales to `[0, 1]` by the maximum; an all-zero map is returned as is.
pub fn max_normalized(values: &[f64]) -> Vec<f64> {
    let m = values.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        values.iter().map(|v| v / m).collect()
    } else {
        values.to_vec()
    }
}
