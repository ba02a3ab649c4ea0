use super::NnError;
use crate::real::Real;

/// Probabilities are clamped to `[CLIP, 1 - CLIP]` before taking logs.
pub const CLIP: f64 = 1e-7;

fn check_labels(labels: &[u8]) -> Result<(), NnError> {
    match labels.iter().find(|&&y| y > 1) {
        Some(&y) => Err(NnError::InvalidLabel(y)),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy of class-1 probabilities.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64, NnError> {
    check_labels(labels)?;
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(NnError::Shape(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Class-1 probability of a two-logit softmax, `sigmoid(z1 - z0)`.
pub fn softmax_p1(z0: f64, z1: f64) -> f64 {
    let d = z1 - z0;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Class-1 probabilities for `batch x 2` logits.
pub fn probabilities<T: Real>(logits: &[T]) -> Vec<f64> {
    logits
        .chunks_exact(2)
        .map(|z| softmax_p1(z[0].f64(), z[1].f64()))
        .collect()
}

/// Binary cross-entropy on softmax class-1 probabilities together with its
/// gradient with respect to the logits. Clamped probabilities get zero
/// gradient, matching the clamp's derivative.
pub fn bce_softmax<T: Real>(logits: &[T], labels: &[u8]) -> Result<(f64, Vec<T>), NnError> {
    let probs = probabilities(logits);
    let loss = bce_loss(&probs, labels)?;
    let n = labels.len() as f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let g = if (CLIP..=1.0 - CLIP).contains(&p) {
            (p - f64::from(y)) / n
        } else {
            0.0
        };
        grad.push(T::of(-g));
        grad.push(T::of(g));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((bce_loss(&[0.5; 4], &[0, 1, 0, 1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let perfect = bce_loss(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!((perfect - -(1.0f64 - CLIP).ln()).abs() < 1e-18);
        let want = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((bce_loss(&[0.9, 0.2], &[1, 0]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(matches!(bce_loss(&[0.5], &[2]), Err(NnError::InvalidLabel(2))));
    }

    #[test]
    fn softmax_head_equals_sigmoid_head() {
        for &(z0, z1) in &[(0.3, -1.2), (5.0, 5.0), (-30.0, 12.0), (2.5, 0.1)] {
            let e0: f64 = f64::exp(z0);
            let e1: f64 = f64::exp(z1);
            let p_soft = e1 / (e0 + e1);
            let p_sig = 1.0 / (1.0 + (-(z1 - z0)).exp());
            assert!((softmax_p1(z0, z1) - p_soft).abs() < 1e-15);
            let a = bce_loss(&[p_soft], &[1]).unwrap();
            let b = bce_loss(&[p_sig], &[1]).unwrap();
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = [0.4, -0.3, -1.0, 0.7, 0.2, 0.2];
        let labels = [1, 0, 1];
        let (_, g) = bce_softmax(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut p = logits;
            let mut m = logits;
            p[i] += h;
            m[i] -= h;
            let num = (bce_softmax(&p, &labels).unwrap().0 - bce_softmax(&m, &labels).unwrap().0) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-8);
        }
    }
}
