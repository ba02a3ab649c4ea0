use super::param::ParamStore;
use super::NnError;
use crate::real::Real;

/// Adam with bias-corrected moments. Moment buffers follow the parameter
/// order of the store they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.params().iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update with learning rate `lr`. Any nonfinite gradient aborts the
    /// step before anything is modified.
    pub fn update(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<(), NnError> {
        for p in store.params() {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    param: p.name.clone(),
                    index: i,
                    value: p.grad[i].f64(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (ob1, ob2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let (ic1, ic2) = (T::of(1.0 / c1), T::of(1.0 / c2));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), mi), vi) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                let mhat = *mi * ic1;
                let vhat = *vi * ic2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add_param("w", &[1], vec![value]);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar(1.5);
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        adam.update(&mut s, 1e-3).unwrap();
        assert_eq!(s.params()[0].value[0], 1.5);
        adam.m[0][0] = 0.2;
        adam.v[0][0] = 0.1;
        adam.update(&mut s, 1e-3).unwrap();
        assert_eq!(adam.m[0][0], 0.9 * 0.2);
        assert_eq!(adam.v[0][0], 0.999 * 0.1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar(0.0);
        s.params_mut()[0].grad[0] = 1.0;
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        adam.update(&mut s, 1e-3).unwrap();
        assert!((s.params()[0].value[0] + 1e-3).abs() < 1e-11);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let mut s = scalar(0.0);
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..5000 {
            s.params_mut()[0].grad[0] = 0.37;
            adam.update(&mut s, 1e-3).unwrap();
            let now = s.params()[0].value[0];
            step = prev - now;
            prev = now;
        }
        assert!((step - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn nonfinite_gradient_is_reported() {
        let mut s = scalar(0.0);
        s.params_mut()[0].grad[0] = f64::NAN;
        let mut adam = Adam::new(&s, 0.9, 0.999, 1e-8);
        let err = adam.update(&mut s, 1e-3).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { ref param, .. } if param == "w"));
        assert_eq!(adam.step, 0);
    }
}
