use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::TrainConfig;
use super::loss::{bce_softmax, probabilities};
use super::model::Classifier;
use super::NnError;
use crate::real::Real;

/// RNG stream used for parameter initialization.
pub const INIT_STREAM: u64 = 0;
/// RNG stream used for shuffling training batches.
pub const SHUFFLE_STREAM: u64 = 1;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Position of a ChaCha generator, enough to resume it exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Word position as a decimal string (it is a 128-bit counter).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, NnError> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| NnError::Config(format!("bad RNG word position {:?}", self.word_pos)))?;
        let mut rng = seeded_rng(self.seed, self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Samples at the network's input level: features are `nodes x features`
/// row-major and already normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub n_nodes: usize,
    pub n_features: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.n_nodes * self.n_features
    }

    /// Concatenated inputs of the selected samples in working precision.
    pub fn gather<T: Real>(&self, idx: &[usize]) -> Vec<T> {
        let mut x = Vec::with_capacity(idx.len() * self.sample_len());
        for &i in idx {
            x.extend(self.features[i].iter().map(|&v| T::of(v)));
        }
        x
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                r.lr,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc)
            );
        }
        out
    }
}

/// Loss, accuracy and class-1 probabilities over a subset, in inference
/// mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub probabilities: Vec<f64>,
}

pub fn evaluate<T: Real, M: Classifier<T>>(
    model: &mut M,
    data: &SampleSet,
    idx: &[usize],
    chunk: usize,
) -> Result<Evaluation, NnError> {
    if idx.is_empty() {
        return Err(NnError::Shape("cannot evaluate an empty set".into()));
    }
    let mut probs = Vec::with_capacity(idx.len());
    for part in idx.chunks(chunk.max(1)) {
        let (logits, _) = model.forward(&data.gather(part), part.len(), false)?;
        probs.extend(probabilities(&logits));
    }
    let labels = data.labels_of(idx);
    let loss = super::loss::bce_loss(&probs, &labels)?;
    Ok(Evaluation {
        loss,
        accuracy: accuracy(&probs, &labels),
        probabilities: probs,
    })
}

fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Splits a shuffled order into batches; a trailing batch of one sample is
/// merged into the previous batch so batch statistics stay defined.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T, M> {
    /// Model at the selected epoch.
    pub model: M,
    /// Optimizer state at the selected epoch.
    pub adam: Adam<T>,
    /// Shuffle generator position at the selected epoch.
    pub rng: RngState,
    pub history: History,
    /// 1-based selected epoch; 0 when no epoch ran.
    pub best_epoch: usize,
}

/// Trains with Adam on shuffled mini-batches and keeps the epoch with the
/// best validation accuracy (ties broken by lower validation loss). Without
/// a validation set the final epoch is kept.
pub fn train<T: Real, M: Classifier<T>>(
    mut model: M,
    data: &SampleSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T, M>, NnError> {
    cfg.validate()?;
    if train_idx.len() < 2 && cfg.epochs > 0 {
        return Err(NnError::BatchTooSmall(train_idx.len()));
    }
    let mut adam = Adam::new(model.store(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = seeded_rng(cfg.seed, SHUFFLE_STREAM);
    let mut history = History::default();
    let mut best: Option<(f64, f64, usize, M, Adam<T>, RngState)> = None;
    let mut order = train_idx.to_vec();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (step, batch) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let labels = data.labels_of(batch);
            model.store_mut().zero_grad();
            let (logits, cache) = model.forward(&data.gather(batch), batch.len(), true)?;
            let (loss, dlogits) = bce_softmax(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch: epoch + 1, step });
            }
            model.backward(&cache, &dlogits)?;
            adam.update(model.store_mut(), lr)?;
            loss_sum += loss * batch.len() as f64;
            correct += probabilities(&logits)
                .iter()
                .zip(&labels)
                .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
                .count();
        }
        let n = order.len() as f64;
        let val = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate(&mut model, data, val_idx, cfg.batch_size)?)
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: val.as_ref().map(|v| v.loss),
            val_acc: val.as_ref().map(|v| v.accuracy),
        };
        log::debug!(
            "epoch {} lr {:.3e} train loss {:.4} acc {:.3} val acc {:?}",
            record.epoch,
            lr,
            record.train_loss,
            record.train_acc,
            record.val_acc
        );
        history.records.push(record);

        let (acc, loss) = val.map_or((0.0, 0.0), |v| (v.accuracy, v.loss));
        let improved = match &best {
            None => true,
            Some(_) if val_idx.is_empty() => true,
            Some((ba, bl, ..)) => acc > *ba || (acc == *ba && loss < *bl),
        };
        if improved {
            best = Some((acc, loss, epoch + 1, model.clone(), adam.clone(), RngState::capture(cfg.seed, &rng)));
        }
    }

    Ok(match best {
        Some((_, _, best_epoch, model, adam, rng)) => TrainOutcome {
            model,
            adam,
            rng,
            history,
            best_epoch,
        },
        None => TrainOutcome {
            rng: RngState::capture(cfg.seed, &rng),
            model,
            adam,
            history,
            best_epoch: 0,
        },
    })
}
