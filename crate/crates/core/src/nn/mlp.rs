use rand::Rng;

use super::layers::{relu_backward, relu_forward, relu_margin, Dense};
use super::model::Classifier;
use super::param::ParamStore;
use super::NnError;
use crate::real::Real;

/// Fully connected baseline on flattened inputs: `depth` hidden layers of
/// equal width with ReLU, then two logits.
#[derive(Clone, Debug)]
pub struct Mlp<T> {
    input_len: usize,
    layers: Vec<Dense>,
    store: ParamStore<T>,
}

#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    /// Input of every layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<T>>,
}

/// Parameter count of an MLP with `depth` hidden layers of `width` units.
pub fn mlp_param_count(input_len: usize, depth: usize, width: usize) -> usize {
    if depth == 0 {
        return Dense::n_params(input_len, 2);
    }
    Dense::n_params(input_len, width) + (depth - 1) * Dense::n_params(width, width) + Dense::n_params(width, 2)
}

/// Hidden width whose parameter count is closest to `budget`, with that
/// count.
pub fn mlp_width_for_budget(input_len: usize, depth: usize, budget: usize) -> (usize, usize) {
    let mut best = (1, mlp_param_count(input_len, depth, 1));
    let mut w = 1;
    loop {
        let c = mlp_param_count(input_len, depth, w);
        if c.abs_diff(budget) < best.1.abs_diff(budget) {
            best = (w, c);
        }
        if c > budget || depth == 0 {
            return best;
        }
        w += 1;
    }
}

impl<T: Real> Mlp<T> {
    pub fn new<R: Rng>(input_len: usize, depth: usize, width: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(depth + 1);
        let mut f = input_len;
        for l in 0..depth {
            layers.push(Dense::new(&mut store, &format!("hidden{l}"), f, width, rng));
            f = width;
        }
        layers.push(Dense::new(&mut store, "out", f, 2, rng));
        log::info!("MLP baseline built with {} parameters", store.n_params());
        Self {
            input_len,
            layers,
            store,
        }
    }
}

impl<T: Real> Classifier<T> for Mlp<T> {
    type Cache = MlpCache<T>;

    fn input_len(&self) -> usize {
        self.input_len
    }

    fn forward(&mut self, x: &[T], batch: usize, _train: bool) -> Result<(Vec<T>, MlpCache<T>), NnError> {
        if x.len() != batch * self.input_len {
            return Err(NnError::Shape(format!("MLP input has {} values", x.len())));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&self.store, &h)?;
            inputs.push(std::mem::take(&mut h));
            if l == last {
                return Ok((z, MlpCache { inputs, pre }));
            }
            h = relu_forward(&z).0;
            pre.push(z);
        }
        unreachable!("the output layer always exists")
    }

    fn backward(&mut self, cache: &MlpCache<T>, dlogits: &[T]) -> Result<(), NnError> {
        let mut d = dlogits.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l < self.layers.len() - 1 {
                d = relu_backward(&cache.pre[l], &d);
            }
            d = layer.backward(&mut self.store, &cache.inputs[l], &d)?;
        }
        Ok(())
    }

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn kink_margin(cache: &MlpCache<T>) -> f64 {
        cache.pre.iter().map(|z| relu_margin(z)).fold(f64::INFINITY, f64::min)
    }
}
