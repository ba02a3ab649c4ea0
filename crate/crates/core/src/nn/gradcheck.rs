//! Central-difference validation of every backward pass, in 64-bit.
//!
//! Each check draws a random instance, sums the op's output against fixed
//! random weights to get a scalar, and compares analytic gradients with
//! central differences coordinate by coordinate. Instances whose ReLU
//! inputs or max-pool pairs come within [`KINK_MARGIN`] of a kink are
//! redrawn, since the derivative is not defined there.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::{max_pool_backward, max_pool_forward, relu_backward, relu_forward, relu_margin, BatchNorm, ChebConv, Dense};
use super::loss::bce_softmax;
use super::model::{Classifier, Pyramid, ResGcn};
use super::param::ParamStore;
use super::resblock::ResBlock;
use super::{LambdaMax, ModelConfig, NnError};
use crate::graph::{normalized_laplacian, scale_laplacian, CsrMatrix, SparseGraph, DEFAULT_LAMBDA_TOL};
use crate::real::Precision;
use crate::testing::{random_connected_graph, random_vec};

pub const FD_STEP: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-3;
pub const LAYER_TOL: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-5;
const MAX_DRAWS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub n_checked: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    /// Instances rejected for lying too close to a kink.
    pub redraws: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// `|a - n| / max(1, |a|, |n|)`: relative for large values, absolute near 0.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Largest discrepancy between `analytic` and central differences of `f`
/// at `x`.
pub fn finite_difference_check(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], step: f64) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * step)));
    }
    worst
}

/// Checks the input and every parameter of `store` for a scalar loss
/// `loss(store, x)`; `store` must already hold the analytic gradients.
fn check_all(
    name: &str,
    store: &ParamStore<f64>,
    x: &[f64],
    dx: Option<&[f64]>,
    loss: impl Fn(&ParamStore<f64>, &[f64]) -> f64,
    tol: f64,
    redraws: usize,
) -> GradCheckReport {
    let mut worst = 0.0f64;
    let mut n = 0;
    if let Some(dx) = dx {
        worst = worst.max(finite_difference_check(|xp| loss(store, xp), x, dx, FD_STEP));
        n += x.len();
    }
    for (pi, p) in store.params().iter().enumerate() {
        let mut s = store.clone();
        let err = finite_difference_check(
            |v| {
                s.params_mut()[pi].value.copy_from_slice(v);
                loss(&s, x)
            },
            &p.value,
            &p.grad,
            FD_STEP,
        );
        worst = worst.max(err);
        n += p.value.len();
    }
    GradCheckReport {
        name: name.to_string(),
        n_checked: n,
        max_rel_error: worst,
        tol,
        redraws,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled_lap(g: &SparseGraph) -> CsrMatrix<f64> {
    let l = normalized_laplacian(g);
    let lm = l.lambda_max(DEFAULT_LAMBDA_TOL).expect("small graphs converge");
    scale_laplacian(&l, lm).expect("lambda_max is positive")
}

fn randomize_norm_params(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for p in store.params_mut() {
        if p.name.ends_with(".gamma") {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
        } else if p.name.ends_with(".beta") || p.name.ends_with(".bias") {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
}

pub fn check_cheb_conv(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, fi, fo, k, batch) = (10, 3, 2, 3, 2);
    let lap = scaled_lap(&random_connected_graph(&mut rng, n, 0.3));
    let mut store = ParamStore::new();
    let conv = ChebConv::new(&mut store, "conv", k, fi, fo, true, &mut rng)?;
    randomize_norm_params(&mut store, &mut rng);
    let x = random_vec(&mut rng, batch * n * fi);
    let w = random_vec(&mut rng, batch * n * fo);
    let (_, caches) = conv.forward(&store, &lap, &x, batch)?;
    let dx = conv.backward(&mut store, &lap, &caches, &w)?;
    let loss = |s: &ParamStore<f64>, x: &[f64]| dot(&conv.forward(s, &lap, x, batch).unwrap().0, &w);
    Ok(check_all("cheb_conv", &store, &x, Some(&dx), loss, LAYER_TOL, 0))
}

pub fn check_batch_norm(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, n, c) = (3, 4, 3);
    let mut store = ParamStore::new();
    let bn = BatchNorm::new(&mut store, "bn", c);
    randomize_norm_params(&mut store, &mut rng);
    let x: Vec<f64> = (0..batch * n * c).map(|_| rng.random_range(-2.0..3.0)).collect();
    let w = random_vec(&mut rng, x.len());
    let (_, cache) = bn.forward(&mut store, &x, batch, true)?;
    let dx = bn.backward(&mut store, &cache, &w)?;
    let loss = |s: &ParamStore<f64>, x: &[f64]| dot(&bn.forward(&mut s.clone(), x, batch, true).unwrap().0, &w);
    Ok(check_all("batch_norm", &store, &x, Some(&dx), loss, LAYER_TOL, 0))
}

pub fn check_relu(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut redraws = 0;
    let x = loop {
        let x = random_vec(&mut rng, 40);
        if relu_margin(&x) >= KINK_MARGIN {
            break x;
        }
        redraws += 1;
    };
    let w = random_vec(&mut rng, x.len());
    let dx = relu_backward(&x, &w);
    let err = finite_difference_check(|xp| dot(&relu_forward(xp).0, &w), &x, &dx, FD_STEP);
    Ok(GradCheckReport {
        name: "relu".into(),
        n_checked: x.len(),
        max_rel_error: err,
        tol: LAYER_TOL,
        redraws,
    })
}

pub fn check_max_pool(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, n, c) = (2, 8, 3);
    let mut redraws = 0;
    let (x, cache) = loop {
        let x = random_vec(&mut rng, batch * n * c);
        let (_, cache) = max_pool_forward(&x, batch, n, c)?;
        if cache.margin() >= KINK_MARGIN {
            break (x, cache);
        }
        redraws += 1;
    };
    let w = random_vec(&mut rng, x.len() / 2);
    let dx = max_pool_backward(&cache, &w, c)?;
    let err = finite_difference_check(|xp| dot(&max_pool_forward(xp, batch, n, c).unwrap().0, &w), &x, &dx, FD_STEP);
    Ok(GradCheckReport {
        name: "max_pool".into(),
        n_checked: x.len(),
        max_rel_error: err,
        tol: LAYER_TOL,
        redraws,
    })
}

pub fn check_dense(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let fc = Dense::new(&mut store, "fc", 7, 4, &mut rng);
    randomize_norm_params(&mut store, &mut rng);
    let x = random_vec(&mut rng, 3 * 7);
    let w = random_vec(&mut rng, 3 * 4);
    let dx = fc.backward(&mut store, &x, &w)?;
    let loss = |s: &ParamStore<f64>, x: &[f64]| dot(&fc.forward(s, x).unwrap(), &w);
    Ok(check_all("dense", &store, &x, Some(&dx), loss, LAYER_TOL, 0))
}

pub fn check_res_block(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, batch, fi, fo) = (8, 3, 2, 3);
    let lap = scaled_lap(&random_connected_graph(&mut rng, n, 0.3));
    let mut store = ParamStore::new();
    let block = ResBlock::new(&mut store, "block", 3, fi, fo, true, &mut rng)?;
    randomize_norm_params(&mut store, &mut rng);
    let mut redraws = 0;
    let (x, cache) = loop {
        let x = random_vec(&mut rng, batch * n * fi);
        let (_, cache) = block.forward(&mut store.clone(), &lap, &x, batch, true)?;
        if cache.margin() >= KINK_MARGIN {
            break (x, cache);
        }
        redraws += 1;
        if redraws > MAX_DRAWS {
            return Err(NnError::Config("could not draw a kink-free ResBlock instance".into()));
        }
    };
    let w = random_vec(&mut rng, batch * n * fo);
    let dx = block.backward(&mut store, &lap, &cache, &w)?;
    let loss = |s: &ParamStore<f64>, x: &[f64]| {
        dot(&block.forward(&mut s.clone(), &lap, x, batch, true).unwrap().0, &w)
    };
    Ok(check_all("res_block", &store, &x, Some(&dx), loss, LAYER_TOL, redraws))
}

/// Small residual GCN with two pooling stages.
pub fn small_model(seed: u64) -> Result<ResGcn<f64>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<SparseGraph> = [16, 8, 4]
        .iter()
        .map(|&n| random_connected_graph(&mut rng, n, 0.2))
        .collect();
    let pyr = Arc::new(Pyramid::from_graphs(&graphs, LambdaMax::Computed)?);
    let cfg = ModelConfig {
        kernels_per_conv: 4,
        cheb_order: 3,
        n_blocks: 2,
        fc_units: 5,
        post_resblock_units: 6,
        precision: Precision::F64,
        ..Default::default()
    };
    let mut model = ResGcn::new(&cfg, pyr, 3, &mut rng)?;
    randomize_norm_params(model.store_mut(), &mut rng);
    Ok(model)
}

/// End-to-end check: binary cross-entropy of the full network with respect
/// to every parameter.
pub fn check_full_model(seed: u64) -> Result<GradCheckReport, NnError> {
    let mut model = small_model(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let batch = 4;
    let labels = [0u8, 1, 1, 0];
    let mut redraws = 0;
    let (x, cache, logits) = loop {
        let x = random_vec(&mut rng, batch * model.input_len());
        let (logits, cache) = model.clone().forward(&x, batch, true)?;
        if ResGcn::kink_margin(&cache) >= KINK_MARGIN {
            break (x, cache, logits);
        }
        redraws += 1;
        if redraws > MAX_DRAWS {
            return Err(NnError::Config("could not draw a kink-free model instance".into()));
        }
    };
    let (_, dlogits) = bce_softmax(&logits, &labels)?;
    model.store_mut().zero_grad();
    model.backward(&cache, &dlogits)?;
    let loss = |s: &ParamStore<f64>, x: &[f64]| {
        let mut m = model.clone();
        *m.store_mut() = s.clone();
        let (z, _) = m.forward(x, batch, true).unwrap();
        bce_softmax(&z, &labels).unwrap().0
    };
    Ok(check_all("full_model", model.store(), &x, None, loss, MODEL_TOL, redraws))
}

/// Runs every check with seeds derived from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckReport>, NnError> {
    Ok(vec![
        check_cheb_conv(seed)?,
        check_batch_norm(seed + 1)?,
        check_relu(seed + 2)?,
        check_max_pool(seed + 3)?,
        check_dense(seed + 4)?,
        check_res_block(seed + 5)?,
        check_full_model(seed + 6)?,
    ])
}
