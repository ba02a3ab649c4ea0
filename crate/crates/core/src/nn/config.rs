use serde::{Deserialize, Serialize};

use super::NnError;
use crate::real::Precision;

/// How the largest Laplacian eigenvalue is obtained for each level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMax {
    /// Power iteration on each level graph.
    #[default]
    Computed,
    /// Use the spectral upper bound 2.
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Two logits followed by softmax; the class-1 probability feeds the
    /// binary cross-entropy.
    #[default]
    TwoLogitSoftmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernels_per_conv: usize,
    /// Chebyshev order `K` (number of polynomial terms).
    pub cheb_order: usize,
    pub pool_size: usize,
    pub n_blocks: usize,
    pub fc_units: usize,
    pub post_resblock_units: usize,
    pub bias_enabled: bool,
    pub precision: Precision,
    pub lambda_max: LambdaMax,
    pub head: Head,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernels_per_conv: 16,
            cheb_order: 3,
            pool_size: 2,
            n_blocks: 4,
            fc_units: 128,
            post_resblock_units: 128,
            bias_enabled: true,
            precision: Precision::F32,
            lambda_max: LambdaMax::Computed,
            head: Head::TwoLogitSoftmax,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.pool_size != 2 {
            return bad("pool_size must equal the hierarchy branching factor 2");
        }
        if self.cheb_order == 0 {
            return bad("cheb_order must be at least 1");
        }
        if self.kernels_per_conv == 0 || self.fc_units == 0 || self.post_resblock_units == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate once per epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            lr: 5e-4,
            lr_decay: 0.999,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}
