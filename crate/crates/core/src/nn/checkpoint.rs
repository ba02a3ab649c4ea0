//! Versioned JSON checkpoints. Tensors are stored as 64-bit values, which
//! represent both working precisions exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::normalize::MinMax;
use super::param::ParamStore;
use super::train::RngState;
use super::{ModelConfig, NnError, TrainConfig};
use crate::real::{Precision, Real};

pub const FORMAT: &str = "resgcn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    ResGcn { n_features: usize, stage_nodes: Vec<usize> },
    Mlp { input_len: usize, depth: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub precision: Precision,
    /// Epoch the parameters come from (0 = initialization).
    pub epoch: usize,
    pub normalization: Option<MinMax>,
    pub params: Vec<TensorRecord>,
    pub buffers: Vec<TensorRecord>,
    pub adam: Option<AdamRecord>,
    pub rng: Option<RngState>,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

fn precision_of<T: Real>() -> Precision {
    if T::NAME == "f32" {
        Precision::F32
    } else {
        Precision::F64
    }
}

impl Checkpoint {
    pub fn new<T: Real>(
        architecture: Architecture,
        model_config: &ModelConfig,
        train_config: &TrainConfig,
        store: &ParamStore<T>,
    ) -> Self {
        let record = |name: &str, shape: &[usize], values: &[T]| TensorRecord {
            name: name.to_string(),
            shape: shape.to_vec(),
            values: to_f64(values),
        };
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            architecture,
            model_config: model_config.clone(),
            train_config: train_config.clone(),
            precision: precision_of::<T>(),
            epoch: 0,
            normalization: None,
            params: store.params().iter().map(|p| record(&p.name, &p.shape, &p.value)).collect(),
            buffers: store.buffers().iter().map(|b| record(&b.name, &b.shape, &b.value)).collect(),
            adam: None,
            rng: None,
        }
    }

    pub fn with_epoch(mut self, epoch: usize) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn with_adam<T: Real>(mut self, adam: &Adam<T>) -> Self {
        self.adam = Some(AdamRecord {
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            step: adam.step,
            m: adam.m.iter().map(|m| to_f64(m)).collect(),
            v: adam.v.iter().map(|v| to_f64(v)).collect(),
        });
        self
    }

    pub fn with_rng(mut self, rng: RngState) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn with_normalization(mut self, mm: MinMax) -> Self {
        self.normalization = Some(mm);
        self
    }

    /// Copies stored tensors into a freshly built model's store. Names,
    /// order and shapes must match exactly.
    pub fn restore_into<T: Real>(&self, store: &mut ParamStore<T>) -> Result<(), NnError> {
        if self.precision != precision_of::<T>() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint holds {} parameters, model uses {}",
                self.precision,
                T::NAME
            )));
        }
        if self.params.len() != store.params().len() || self.buffers.len() != store.buffers().len() {
            return Err(NnError::Checkpoint("tensor count does not match the model".into()));
        }
        for (rec, p) in self.params.iter().zip(store.params_mut()) {
            if rec.name != p.name || rec.shape != p.shape || rec.values.len() != p.value.len() {
                return Err(NnError::Checkpoint(format!("tensor {} does not match model tensor {}", rec.name, p.name)));
            }
            for (d, &s) in p.value.iter_mut().zip(&rec.values) {
                *d = T::of(s);
            }
        }
        for (rec, b) in self.buffers.iter().zip(store.buffers_mut()) {
            if rec.name != b.name || rec.values.len() != b.value.len() {
                return Err(NnError::Checkpoint(format!("buffer {} does not match model buffer {}", rec.name, b.name)));
            }
            for (d, &s) in b.value.iter_mut().zip(&rec.values) {
                *d = T::of(s);
            }
        }
        Ok(())
    }

    pub fn restore_adam<T: Real>(&self) -> Option<Adam<T>> {
        self.adam.as_ref().map(|a| Adam {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            step: a.step,
            m: a.m.iter().map(|m| m.iter().map(|&x| T::of(x)).collect()).collect(),
            v: a.v.iter().map(|v| v.iter().map(|&x| T::of(x)).collect()).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: Self = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
