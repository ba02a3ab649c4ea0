//! Residual Chebyshev graph network: layers with hand-written backward
//! passes, the training loop, checkpoints and gradient checks.

mod adam;
pub mod checkpoint;
mod config;
pub mod gradcheck;
mod layers;
mod loss;
mod mlp;
mod model;
mod normalize;
mod param;
mod resblock;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use config::{Head, LambdaMax, ModelConfig, TrainConfig};
pub use layers::{
    max_pool_backward, max_pool_forward, relu_backward, relu_forward, relu_margin, BatchNorm, BnCache, ChebConv,
    Dense, PoolCache,
};
pub use loss::{bce_loss, bce_softmax, probabilities, softmax_p1, CLIP};
pub use mlp::{mlp_width_for_budget, Mlp, MlpCache};
pub use model::{Classifier, GcnCache, Pyramid, ResGcn};
pub use normalize::{minmax_normalize, MinMax};
pub use param::{Buffer, BufferId, Param, ParamId, ParamStore};
pub use resblock::{ResBlock, ResBlockCache};
pub use train::{
    batches, evaluate, seeded_rng, train, EpochRecord, Evaluation, History, RngState, SampleSet, TrainOutcome,
    INIT_STREAM, SHUFFLE_STREAM,
};

use crate::conv::ConvError;
use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training-mode batch normalization needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("nonfinite gradient {value} in {param}[{index}]")]
    NonFiniteGradient { param: String, index: usize, value: f64 },
    #[error("nonfinite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("feature {0} has no unmasked entries")]
    EmptyFeature(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Conv(#[from] ConvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
