//! Differentiable layers over batched graph signals.
//!
//! Activations are `batch x nodes x channels`, row-major. Every layer has a
//! `forward` that returns its output and a cache, and a `backward` that
//! consumes the cache, adds parameter gradients into the store and returns
//! the input gradient.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::param::{BufferId, ParamId, ParamStore};
use super::NnError;
use crate::conv::{backward_ref, forward_ref, ChebCache, ChebFilterBank, FilterRef};
use crate::graph::CsrMatrix;
use crate::real::Real;

fn check_len(what: &str, got: usize, expected: usize) -> Result<(), NnError> {
    if got == expected {
        Ok(())
    } else {
        Err(NnError::Shape(format!("{what}: got {got} values, expected {expected}")))
    }
}

/// Chebyshev graph convolution applied to every sample of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebConv {
    pub order: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub theta: ParamId,
    pub bias: Option<ParamId>,
}

impl ChebConv {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        order: usize,
        f_in: usize,
        f_out: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let bank = ChebFilterBank::<T>::init(order, f_in, f_out, with_bias, rng)?;
        let theta = store.add_param(format!("{name}.theta"), &[order, f_in, f_out], bank.theta);
        let bias = bank
            .bias
            .map(|b| store.add_param(format!("{name}.bias"), &[f_out], b));
        Ok(Self { order, f_in, f_out, theta, bias })
    }

    fn filter<'a, T: Real>(&self, store: &'a ParamStore<T>) -> FilterRef<'a, T> {
        FilterRef {
            order: self.order,
            f_in: self.f_in,
            f_out: self.f_out,
            theta: store.value(self.theta),
            bias: self.bias.map(|b| store.value(b)),
        }
    }

    pub fn n_params(&self) -> usize {
        self.order * self.f_in * self.f_out + if self.bias.is_some() { self.f_out } else { 0 }
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        lap: &CsrMatrix<T>,
        x: &[T],
        batch: usize,
    ) -> Result<(Vec<T>, Vec<ChebCache<T>>), NnError> {
        let n = lap.dim();
        check_len("conv input", x.len(), batch * n * self.f_in)?;
        let w = self.filter(store);
        let mut y = Vec::with_capacity(batch * n * self.f_out);
        let mut caches = Vec::with_capacity(batch);
        for xs in x.chunks_exact(n * self.f_in) {
            let (ys, c) = forward_ref(lap, xs, w)?;
            y.extend_from_slice(&ys);
            caches.push(c);
        }
        Ok((y, caches))
    }

    pub fn backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        lap: &CsrMatrix<T>,
        caches: &[ChebCache<T>],
        dy: &[T],
    ) -> Result<Vec<T>, NnError> {
        let n = lap.dim();
        check_len("conv upstream", dy.len(), caches.len() * n * self.f_out)?;
        let mut dbias = self.bias.map(|_| vec![T::zero(); self.f_out]);
        let mut dx = Vec::with_capacity(caches.len() * n * self.f_in);
        {
            let (theta, dtheta) = store.value_and_grad(self.theta);
            let w = FilterRef {
                order: self.order,
                f_in: self.f_in,
                f_out: self.f_out,
                theta,
                bias: None,
            };
            for (c, dys) in caches.iter().zip(dy.chunks_exact(n * self.f_out)) {
                dx.extend(backward_ref(lap, dys, c, w, dtheta, dbias.as_deref_mut())?);
            }
        }
        if let (Some(id), Some(db)) = (self.bias, dbias) {
            for (g, d) in store.grad_mut(id).iter_mut().zip(db) {
                *g += d;
            }
        }
        Ok(dx)
    }
}

/// Batch normalization over batch and vertices jointly, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.9;
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            channels,
            gamma: store.add_param(format!("{name}.gamma"), &[channels], vec![T::one(); channels]),
            beta: store.add_param(format!("{name}.beta"), &[channels], vec![T::zero(); channels]),
            running_mean: store.add_buffer(format!("{name}.running_mean"), &[channels], vec![T::zero(); channels]),
            running_var: store.add_buffer(format!("{name}.running_var"), &[channels], vec![T::one(); channels]),
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn n_params(&self) -> usize {
        2 * self.channels
    }

    /// In training mode normalizes with the batch moments and folds them
    /// into the running statistics (unbiased variance); otherwise uses the
    /// running statistics.
    pub fn forward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        x: &[T],
        batch: usize,
        train: bool,
    ) -> Result<(Vec<T>, BnCache<T>), NnError> {
        let c = self.channels;
        if !x.len().is_multiple_of(c) || (batch > 0 && !x.len().is_multiple_of(batch)) {
            return Err(NnError::Shape(format!("batch norm input of {} values over {c} channels", x.len())));
        }
        let m = x.len() / c;
        let (mean, var) = if train {
            if batch < 2 {
                return Err(NnError::BatchTooSmall(batch));
            }
            let mut sum = vec![0.0f64; c];
            for row in x.chunks_exact(c) {
                for (s, &v) in sum.iter_mut().zip(row) {
                    *s += v.f64();
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
            let mut sq = vec![0.0f64; c];
            for row in x.chunks_exact(c) {
                for ((s, &v), mu) in sq.iter_mut().zip(row).zip(&mean) {
                    let d = v.f64() - mu;
                    *s += d * d;
                }
            }
            let var: Vec<f64> = sq.iter().map(|s| s / m as f64).collect();
            let mom = self.momentum;
            let unbias = m as f64 / (m as f64 - 1.0).max(1.0);
            for (r, mu) in store.buffer_mut(self.running_mean).iter_mut().zip(&mean) {
                *r = T::of(mom * r.f64() + (1.0 - mom) * mu);
            }
            for (r, v) in store.buffer_mut(self.running_var).iter_mut().zip(&var) {
                *r = T::of(mom * r.f64() + (1.0 - mom) * v * unbias);
            }
            (mean, var)
        } else {
            (
                store.buffer(self.running_mean).iter().map(|v| v.f64()).collect(),
                store.buffer(self.running_var).iter().map(|v| v.f64()).collect(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + self.eps).sqrt())).collect();
        let mean: Vec<T> = mean.into_iter().map(T::of).collect();
        let gamma = store.value(self.gamma);
        let beta = store.value(self.beta);
        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.chunks_exact(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(gamma[j] * h + beta[j]);
            }
        }
        Ok((y, BnCache { xhat, inv_std, train }))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &BnCache<T>, dy: &[T]) -> Result<Vec<T>, NnError> {
        let c = self.channels;
        check_len("batch norm upstream", dy.len(), cache.xhat.len())?;
        let m = dy.len() / c;
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (drow, hrow) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += drow[j];
                sum_dy_xhat[j] += drow[j] * hrow[j];
            }
        }
        let gamma = store.value(self.gamma).to_vec();
        let mut dx = Vec::with_capacity(dy.len());
        if cache.train {
            let inv_m = T::of(1.0 / m as f64);
            for (drow, hrow) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
                for j in 0..c {
                    let g = gamma[j] * cache.inv_std[j];
                    dx.push(g * (drow[j] - inv_m * sum_dy[j] - hrow[j] * inv_m * sum_dy_xhat[j]));
                }
            }
        } else {
            for drow in dy.chunks_exact(c) {
                for j in 0..c {
                    dx.push(gamma[j] * cache.inv_std[j] * drow[j]);
                }
            }
        }
        for (g, d) in store.grad_mut(self.gamma).iter_mut().zip(&sum_dy_xhat) {
            *g += *d;
        }
        for (g, d) in store.grad_mut(self.beta).iter_mut().zip(&sum_dy) {
            *g += *d;
        }
        Ok(dx)
    }
}

/// Rectified linear unit. The cache keeps the input.
pub fn relu_forward<T: Real>(x: &[T]) -> (Vec<T>, Vec<T>) {
    (x.iter().map(|&v| v.max(T::zero())).collect(), x.to_vec())
}

pub fn relu_backward<T: Real>(input: &[T], dy: &[T]) -> Vec<T> {
    input
        .iter()
        .zip(dy)
        .map(|(&x, &d)| if x > T::zero() { d } else { T::zero() })
        .collect()
}

/// Smallest `|x|` among ReLU inputs, i.e. the distance to the kink.
pub fn relu_margin<T: Real>(input: &[T]) -> f64 {
    input.iter().map(|v| v.abs().f64()).fold(f64::INFINITY, f64::min)
}

/// Max pooling of sibling vertices `2i` and `2i + 1` into parent `i`.
#[derive(Clone, Debug)]
pub struct PoolCache {
    /// `true` where the second sibling won; ties go to the first.
    second: Vec<bool>,
    min_gap: f64,
}

impl PoolCache {
    /// Smallest difference between competing siblings.
    pub fn margin(&self) -> f64 {
        self.min_gap
    }
}

pub fn max_pool_forward<T: Real>(x: &[T], batch: usize, nodes: usize, channels: usize) -> Result<(Vec<T>, PoolCache), NnError> {
    check_len("pool input", x.len(), batch * nodes * channels)?;
    if !nodes.is_multiple_of(2) {
        return Err(NnError::Shape(format!("cannot pool {nodes} vertices in pairs")));
    }
    let half = x.len() / 2;
    let mut y = Vec::with_capacity(half);
    let mut second = Vec::with_capacity(half);
    let mut min_gap = f64::INFINITY;
    for pair in x.chunks_exact(2 * channels) {
        let (a, b) = pair.split_at(channels);
        for (&u, &v) in a.iter().zip(b) {
            let s = v > u;
            second.push(s);
            y.push(if s { v } else { u });
            min_gap = min_gap.min((u - v).abs().f64());
        }
    }
    Ok((y, PoolCache { second, min_gap }))
}

pub fn max_pool_backward<T: Real>(cache: &PoolCache, dy: &[T], channels: usize) -> Result<Vec<T>, NnError> {
    check_len("pool upstream", dy.len(), cache.second.len())?;
    let mut dx = vec![T::zero(); 2 * dy.len()];
    for (p, (dchunk, schunk)) in dy.chunks_exact(channels).zip(cache.second.chunks_exact(channels)).enumerate() {
        let base = 2 * p * channels;
        for (j, (&d, &s)) in dchunk.iter().zip(schunk).enumerate() {
            dx[base + if s { channels } else { 0 } + j] = d;
        }
    }
    Ok(dx)
}

/// Fully connected layer `y = x W + b` with `W` of shape `[f_in, f_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub f_in: usize,
    pub f_out: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, f_in: usize, f_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (f_in + f_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("limit is positive and finite");
        let w = (0..f_in * f_out).map(|_| T::of(dist.sample(rng))).collect();
        Self {
            f_in,
            f_out,
            weight: store.add_param(format!("{name}.weight"), &[f_in, f_out], w),
            bias: store.add_param(format!("{name}.bias"), &[f_out], vec![T::zero(); f_out]),
        }
    }

    pub fn n_params(f_in: usize, f_out: usize) -> usize {
        f_in * f_out + f_out
    }

    /// Returns the output; the cache is the input itself.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &[T]) -> Result<Vec<T>, NnError> {
        if !x.len().is_multiple_of(self.f_in) {
            return Err(NnError::Shape(format!("dense input of {} values, width {}", x.len(), self.f_in)));
        }
        let w = store.value(self.weight);
        let b = store.value(self.bias);
        let mut y = Vec::with_capacity(x.len() / self.f_in * self.f_out);
        for xrow in x.chunks_exact(self.f_in) {
            let start = y.len();
            y.extend_from_slice(b);
            let out = &mut y[start..];
            for (&a, wrow) in xrow.iter().zip(w.chunks_exact(self.f_out)) {
                for (o, &wv) in out.iter_mut().zip(wrow) {
                    *o += a * wv;
                }
            }
        }
        Ok(y)
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, x: &[T], dy: &[T]) -> Result<Vec<T>, NnError> {
        let rows = x.len() / self.f_in;
        check_len("dense upstream", dy.len(), rows * self.f_out)?;
        let mut dx = vec![T::zero(); x.len()];
        {
            let (w, dw) = store.value_and_grad(self.weight);
            for ((xrow, drow), dxrow) in x
                .chunks_exact(self.f_in)
                .zip(dy.chunks_exact(self.f_out))
                .zip(dx.chunks_exact_mut(self.f_in))
            {
                for (i, &a) in xrow.iter().enumerate() {
                    let wrow = &w[i * self.f_out..(i + 1) * self.f_out];
                    let dwrow = &mut dw[i * self.f_out..(i + 1) * self.f_out];
                    let mut acc = T::zero();
                    for ((dwv, &wv), &d) in dwrow.iter_mut().zip(wrow).zip(drow) {
                        *dwv += a * d;
                        acc += wv * d;
                    }
                    dxrow[i] = acc;
                }
            }
        }
        let db = store.grad_mut(self.bias);
        for drow in dy.chunks_exact(self.f_out) {
            for (g, &d) in db.iter_mut().zip(drow) {
                *g += d;
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_channel_normalizes_to_beta() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 1);
        store.params_mut()[1].value[0] = 0.25;
        let (y, _) = bn.forward(&mut store, &[3.0; 8], 2, true).unwrap();
        assert!(y.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn batch_moments_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 3);
        let x: Vec<f64> = (0..4 * 5 * 3).map(|_| rng.random_range(-3.0..7.0)).collect();
        let (y, _) = bn.forward(&mut store, &x, 4, true).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = y.iter().skip(j).step_by(3).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-5);
        }
        let raw: Vec<f64> = x.iter().step_by(3).copied().collect();
        let mu = raw.iter().sum::<f64>() / 20.0;
        let unbiased = raw.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 19.0;
        assert!((store.buffer(bn.running_mean)[0] - 0.1 * mu).abs() < 1e-12);
        assert!((store.buffer(bn.running_var)[0] - (0.9 + 0.1 * unbiased)).abs() < 1e-12);
    }

    #[test]
    fn train_mode_rejects_single_sample() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        assert!(matches!(bn.forward(&mut store, &[1.0, 2.0, 3.0, 4.0], 1, true), Err(NnError::BatchTooSmall(1))));
        assert!(bn.forward(&mut store, &[1.0, 2.0, 3.0, 4.0], 1, false).is_ok());
    }

    #[test]
    fn pooling_picks_max_and_breaks_ties_low() {
        // One sample, four vertices, one channel.
        let (y, cache) = max_pool_forward(&[1.0, 3.0, 2.0, 2.0], 1, 4, 1).unwrap();
        assert_eq!(y, vec![3.0, 2.0]);
        let dx = max_pool_backward(&cache, &[5.0, 7.0], 1).unwrap();
        assert_eq!(dx, vec![0.0, 5.0, 7.0, 0.0]);
        assert_eq!(cache.margin(), 0.0);
    }

    #[test]
    fn pooling_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (b, n, c) = (3, 8, 4);
        let x: Vec<f64> = (0..b * n * c).map(|_| rng.random()).collect();
        let (y, cache) = max_pool_forward(&x, b, n, c).unwrap();
        for s in 0..b {
            for p in 0..n / 2 {
                for j in 0..c {
                    let a = x[(s * n + 2 * p) * c + j];
                    let d = x[(s * n + 2 * p + 1) * c + j];
                    assert_eq!(y[(s * n / 2 + p) * c + j], a.max(d));
                }
            }
        }
        let dy: Vec<f64> = (0..y.len()).map(|_| rng.random()).collect();
        let dx = max_pool_backward(&cache, &dy, c).unwrap();
        assert_eq!(dx.iter().sum::<f64>(), dy.iter().sum::<f64>());
        assert_eq!(dx.iter().filter(|&&v| v != 0.0).count(), dy.len());
    }

    #[test]
    fn relu_routes_only_positive() {
        let (y, cache) = relu_forward(&[-1.0, 0.0, 2.0]);
        assert_eq!(y, vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&cache, &[1.0, 1.0, 1.0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(relu_margin(&cache), 0.0);
    }

    #[test]
    fn dense_forward_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let d = Dense::new(&mut store, "fc", 2, 3, &mut rng);
        store.params_mut()[1].value = vec![1.0, 2.0, 3.0];
        let w = store.value(d.weight).to_vec();
        let y = d.forward(&store, &[1.0, -1.0]).unwrap();
        for g in 0..3 {
            assert!((y[g] - (w[g] - w[3 + g] + (g + 1) as f64)).abs() < 1e-15);
        }
    }
}
