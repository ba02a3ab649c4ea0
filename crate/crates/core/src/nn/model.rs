use std::sync::Arc;

use rand::Rng;

use super::checkpoint::{Architecture, Checkpoint};
use super::config::{LambdaMax, ModelConfig, TrainConfig};
use super::train::{seeded_rng, INIT_STREAM};
use super::layers::{max_pool_backward, max_pool_forward, relu_backward, relu_forward, relu_margin, Dense, PoolCache};
use super::param::ParamStore;
use super::resblock::{ResBlock, ResBlockCache};
use super::NnError;
use crate::graph::{normalized_laplacian, scale_laplacian, CsrMatrix, SparseGraph, DEFAULT_LAMBDA_TOL};
use crate::mesh::MeshHierarchy;
use crate::real::Real;

/// Scaled Laplacians for consecutive pooling stages. Stage 0 is the input
/// (finest) graph; every following stage has half as many vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid<T> {
    laps: Vec<CsrMatrix<T>>,
    lambda_max: Vec<f64>,
}

impl<T: Real> Pyramid<T> {
    pub fn from_graphs(graphs: &[SparseGraph], mode: LambdaMax) -> Result<Self, NnError> {
        if graphs.is_empty() {
            return Err(NnError::Shape("pyramid needs at least one graph".into()));
        }
        for w in graphs.windows(2) {
            if w[0].n_vertices() != 2 * w[1].n_vertices() {
                return Err(NnError::Shape(format!(
                    "stage sizes {} -> {} do not halve",
                    w[0].n_vertices(),
                    w[1].n_vertices()
                )));
            }
        }
        let mut laps = Vec::with_capacity(graphs.len());
        let mut lambda_max = Vec::with_capacity(graphs.len());
        for g in graphs {
            let lap = normalized_laplacian(g);
            let lm = match mode {
                LambdaMax::Computed => lap.lambda_max(DEFAULT_LAMBDA_TOL)?,
                LambdaMax::Two => 2.0,
            };
            laps.push(scale_laplacian(&lap, lm)?.cast::<T>());
            lambda_max.push(lm);
        }
        Ok(Self { laps, lambda_max })
    }

    /// Stages for the finest level of `h` and the `n_pools` levels above it.
    pub fn from_hierarchy(h: &MeshHierarchy, n_pools: usize, mode: LambdaMax) -> Result<Self, NnError> {
        let depth = h.depth();
        if n_pools > depth {
            return Err(NnError::Config(format!(
                "{n_pools} pooling stages need a hierarchy deeper than {depth}"
            )));
        }
        let graphs: Vec<SparseGraph> = (0..=n_pools).map(|s| h.level(depth - s).graph.clone()).collect();
        Self::from_graphs(&graphs, mode)
    }

    pub fn n_stages(&self) -> usize {
        self.laps.len()
    }

    pub fn lap(&self, stage: usize) -> &CsrMatrix<T> {
        &self.laps[stage]
    }

    pub fn nodes(&self, stage: usize) -> usize {
        self.laps[stage].dim()
    }

    pub fn lambda_max(&self) -> &[f64] {
        &self.lambda_max
    }
}

/// Batched forward/backward interface shared by the graph network and the
/// dense baseline, so one training loop serves both.
pub trait Classifier<T: Real>: Clone + Send {
    type Cache;

    /// Values per sample in the flattened input.
    fn input_len(&self) -> usize;

    /// Two logits per sample.
    fn forward(&mut self, x: &[T], batch: usize, train: bool) -> Result<(Vec<T>, Self::Cache), NnError>;

    /// Adds parameter gradients for upstream logit gradients `dlogits`.
    fn backward(&mut self, cache: &Self::Cache, dlogits: &[T]) -> Result<(), NnError>;

    fn store(&self) -> &ParamStore<T>;

    fn store_mut(&mut self) -> &mut ParamStore<T>;

    /// Smallest distance of any ReLU input or max-pool pair from a kink.
    fn kink_margin(cache: &Self::Cache) -> f64;
}

/// Residual Chebyshev network: `n_blocks` x (ResBlock, pool), a
/// post-ResBlock, flatten, a hidden fully connected layer with ReLU, and a
/// two-logit output layer.
#[derive(Clone, Debug)]
pub struct ResGcn<T> {
    config: ModelConfig,
    n_features: usize,
    pyramid: Arc<Pyramid<T>>,
    blocks: Vec<ResBlock>,
    post: ResBlock,
    fc1: Dense,
    fc2: Dense,
    store: ParamStore<T>,
}

#[derive(Clone, Debug)]
pub struct GcnCache<T> {
    batch: usize,
    blocks: Vec<(ResBlockCache<T>, PoolCache)>,
    post: ResBlockCache<T>,
    /// Post-ResBlock output: `batch x coarse nodes x post units`.
    activation: Vec<T>,
    hidden_in: Vec<T>,
    hidden_out: Vec<T>,
}

impl<T> GcnCache<T> {
    pub fn activation(&self) -> &[T] {
        &self.activation
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<T: Real> ResGcn<T> {
    pub fn new<R: Rng>(config: &ModelConfig, pyramid: Arc<Pyramid<T>>, n_features: usize, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        if config.n_blocks + 1 > pyramid.n_stages() {
            return Err(NnError::Config(format!(
                "{} blocks need {} graph stages, hierarchy provides {}",
                config.n_blocks,
                config.n_blocks + 1,
                pyramid.n_stages()
            )));
        }
        let (k, kern, bias) = (config.cheb_order, config.kernels_per_conv, config.bias_enabled);
        let mut store = ParamStore::new();
        let mut blocks = Vec::with_capacity(config.n_blocks);
        let mut f = n_features;
        for b in 0..config.n_blocks {
            blocks.push(ResBlock::new(&mut store, &format!("block{b}"), k, f, kern, bias, rng)?);
            f = kern;
        }
        let post = ResBlock::new(&mut store, "post", k, f, config.post_resblock_units, bias, rng)?;
        let coarse = pyramid.nodes(config.n_blocks);
        let fc1 = Dense::new(&mut store, "fc1", coarse * config.post_resblock_units, config.fc_units, rng);
        let fc2 = Dense::new(&mut store, "fc2", config.fc_units, 2, rng);
        let model = Self {
            config: config.clone(),
            n_features,
            pyramid,
            blocks,
            post,
            fc1,
            fc2,
            store,
        };
        debug_assert_eq!(
            model.store.n_params(),
            Self::count_params(config, n_features, model.coarse_nodes())
        );
        log::info!("residual GCN built with {} parameters", model.store.n_params());
        Ok(model)
    }

    /// Number of trainable scalars for a configuration, without building it.
    pub fn count_params(config: &ModelConfig, n_features: usize, coarse_nodes: usize) -> usize {
        let (k, kern) = (config.cheb_order, config.kernels_per_conv);
        let b = usize::from(config.bias_enabled);
        let block = |fi: usize, fo: usize| {
            let skip = if fi != fo { fi * fo + b * fo } else { 0 };
            2 * fi + (k * fi * fo + b * fo) + 2 * fo + (k * fo * fo + b * fo) + skip
        };
        let mut total = 0;
        let mut f = n_features;
        for _ in 0..config.n_blocks {
            total += block(f, kern);
            f = kern;
        }
        total += block(f, config.post_resblock_units);
        total += Dense::n_params(coarse_nodes * config.post_resblock_units, config.fc_units);
        total + Dense::n_params(config.fc_units, 2)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn pyramid(&self) -> &Arc<Pyramid<T>> {
        &self.pyramid
    }

    pub fn coarse_nodes(&self) -> usize {
        self.pyramid.nodes(self.config.n_blocks)
    }

    /// Number of graph convolutions on the main path (skip maps excluded).
    pub fn n_conv_layers(&self) -> usize {
        2 * (self.blocks.len() + 1)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::ResGcn {
            n_features: self.n_features,
            stage_nodes: (0..self.pyramid.n_stages()).map(|s| self.pyramid.nodes(s)).collect(),
        }
    }

    pub fn to_checkpoint(&self, train: &TrainConfig) -> Checkpoint {
        Checkpoint::new(self.architecture(), &self.config, train, &self.store)
    }

    /// Rebuilds a network on `pyramid` and loads the stored tensors.
    pub fn from_checkpoint(ck: &Checkpoint, pyramid: Arc<Pyramid<T>>) -> Result<Self, NnError> {
        let Architecture::ResGcn { n_features, stage_nodes } = &ck.architecture else {
            return Err(NnError::Checkpoint("checkpoint does not hold a graph network".into()));
        };
        let nodes: Vec<usize> = (0..pyramid.n_stages()).map(|s| pyramid.nodes(s)).collect();
        if *stage_nodes != nodes {
            return Err(NnError::Checkpoint(format!(
                "checkpoint stages {stage_nodes:?} do not match the hierarchy's {nodes:?}"
            )));
        }
        let mut model = Self::new(&ck.model_config, pyramid, *n_features, &mut seeded_rng(0, INIT_STREAM))?;
        ck.restore_into(&mut model.store)?;
        Ok(model)
    }

    /// Gradient of the logits, weighted by `dlogits`, with respect to the
    /// post-ResBlock output. Parameters are left untouched.
    pub fn activation_grad(&self, cache: &GcnCache<T>, dlogits: &[T]) -> Result<Vec<T>, NnError> {
        let d = input_grad(&self.fc2, &self.store, dlogits)?;
        let d = relu_backward(&cache.hidden_in, &d);
        input_grad(&self.fc1, &self.store, &d)
    }
}

/// `dy W^T` for a dense layer.
fn input_grad<T: Real>(layer: &Dense, store: &ParamStore<T>, dy: &[T]) -> Result<Vec<T>, NnError> {
    if !dy.len().is_multiple_of(layer.f_out) {
        return Err(NnError::Shape("dense upstream width".into()));
    }
    let w = store.value(layer.weight);
    let mut dx = Vec::with_capacity(dy.len() / layer.f_out * layer.f_in);
    for drow in dy.chunks_exact(layer.f_out) {
        for wrow in w.chunks_exact(layer.f_out) {
            dx.push(wrow.iter().zip(drow).fold(T::zero(), |acc, (&a, &b)| acc + a * b));
        }
    }
    Ok(dx)
}

impl<T: Real> Classifier<T> for ResGcn<T> {
    type Cache = GcnCache<T>;

    fn input_len(&self) -> usize {
        self.pyramid.nodes(0) * self.n_features
    }

    fn forward(&mut self, x: &[T], batch: usize, train: bool) -> Result<(Vec<T>, GcnCache<T>), NnError> {
        if x.len() != batch * self.input_len() {
            return Err(NnError::Shape(format!(
                "model input has {} values, expected {batch} x {}",
                x.len(),
                self.input_len()
            )));
        }
        let mut h = x.to_vec();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (s, block) in self.blocks.iter().enumerate() {
            let (y, bc) = block.forward(&mut self.store, self.pyramid.lap(s), &h, batch, train)?;
            let (p, pc) = max_pool_forward(&y, batch, self.pyramid.nodes(s), block.f_out)?;
            caches.push((bc, pc));
            h = p;
        }
        let last = self.blocks.len();
        let (activation, post) = self.post.forward(&mut self.store, self.pyramid.lap(last), &h, batch, train)?;
        let hidden_in = self.fc1.forward(&self.store, &activation)?;
        let (hidden_out, _) = relu_forward(&hidden_in);
        let logits = self.fc2.forward(&self.store, &hidden_out)?;
        Ok((
            logits,
            GcnCache {
                batch,
                blocks: caches,
                post,
                activation,
                hidden_in,
                hidden_out,
            },
        ))
    }

    fn backward(&mut self, cache: &GcnCache<T>, dlogits: &[T]) -> Result<(), NnError> {
        let d = self.fc2.backward(&mut self.store, &cache.hidden_out, dlogits)?;
        let d = relu_backward(&cache.hidden_in, &d);
        let d = self.fc1.backward(&mut self.store, &cache.activation, &d)?;
        let last = self.blocks.len();
        let mut d = self.post.backward(&mut self.store, self.pyramid.lap(last), &cache.post, &d)?;
        for (s, block) in self.blocks.iter().enumerate().rev() {
            let (bc, pc) = &cache.blocks[s];
            let up = max_pool_backward(pc, &d, block.f_out)?;
            d = block.backward(&mut self.store, self.pyramid.lap(s), bc, &up)?;
        }
        Ok(())
    }

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn kink_margin(cache: &GcnCache<T>) -> f64 {
        cache
            .blocks
            .iter()
            .map(|(b, p)| b.margin().min(p.margin()))
            .fold(cache.post.margin(), f64::min)
            .min(relu_margin(&cache.hidden_in))
    }
}
