use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptimState};
use super::config::ModelConfig;
use super::network::{loss_and_gradients, predict};
use super::params::{init_params, Gradients, ModelParams};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::ccc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Conversations per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Stop after this many epochs without a dev improvement larger than
    /// `min_delta`.
    pub patience: Option<usize>,
    pub min_delta: f64,
    /// Rescale batch gradients whose global L2 norm exceeds this value.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 15,
            learning_rate: 1e-3,
            seed: 0,
            patience: None,
            min_delta: 0.0,
            grad_clip: None,
        }
    }
}

/// A normalized conversation with its regression target.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub features: FeatureMatrix,
    pub gold: Vec<f64>,
}

impl Sequence {
    pub fn new(features: FeatureMatrix, gold: Vec<f64>) -> Result<Self> {
        if gold.len() != features.len() {
            return Err(Error::schema(format!(
                "{}: gold has {} segments, features have {}",
                features.timeline.conversation_id,
                gold.len(),
                features.len()
            )));
        }
        Ok(Self { features, gold })
    }

    pub fn id(&self) -> &str {
        &self.features.timeline.conversation_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-conversation `1 − CCC` over the epoch's batches.
    pub train_loss: f64,
    /// CCC of the concatenated dev predictions after the epoch.
    pub dev_ccc: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainRecord {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }

    /// `epoch,train_loss,dev_ccc` rows. Wall time is left out so identical
    /// runs produce identical files.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_ccc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.dev_ccc));
        }
        out
    }
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the highest dev CCC.
    pub best: ModelParams,
    pub last: ModelParams,
    pub record: TrainRecord,
}

/// Concatenated-CCC of `params` over `sequences`, in listing order.
pub fn concat_ccc(params: &ModelParams, sequences: &[Sequence]) -> Result<f64> {
    let preds = sequences
        .par_iter()
        .map(|s| predict(params, s.features.rows.view()))
        .collect::<Result<Vec<_>>>()?;
    let all_pred: Vec<f64> = preds.into_iter().flatten().collect();
    let all_gold: Vec<f64> = sequences.iter().flat_map(|s| s.gold.iter().copied()).collect();
    ccc(&all_pred, &all_gold)
}

fn check_sequences(name: &str, seqs: &[Sequence], input_dim: usize, min_len: usize) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::invalid(format!("{name} set is empty")));
    }
    for s in seqs {
        if s.features.dim() != input_dim {
            return Err(Error::schema(format!(
                "{}: features have D={}, model expects {input_dim}",
                s.id(),
                s.features.dim()
            )));
        }
        if s.features.len() < min_len {
            return Err(Error::invalid(format!("{}: needs at least {min_len} segments", s.id())));
        }
    }
    Ok(())
}

/// Mini-batch training with Adam on `1 − CCC`.
///
/// Every epoch shuffles the training conversations, runs each one at full
/// length, averages the per-conversation gradients of a batch in batch order
/// and takes one optimizer step. Dev CCC is measured after every epoch and
/// the best epoch's parameters are kept.
pub fn train(
    model: &ModelConfig,
    config: &TrainConfig,
    train_set: &[Sequence],
    dev_set: &[Sequence],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.validate()?;
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("epochs and batch_size must be positive"));
    }
    check_sequences("train", train_set, model.input_dim, 2)?;
    check_sequences("dev", dev_set, model.input_dim, 1)?;

    let mut params = init_params(model)?;
    let hyper = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut optim = OptimState::new(params.values().len(), hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut record = TrainRecord::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut plateau = (f64::NEG_INFINITY, 0usize);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    loss_and_gradients(&params, s.features.rows.view(), &s.gold)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = Gradients::zeros_like(&params);
            for (loss, g) in &results {
                loss_sum += loss;
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            if let Some(limit) = config.grad_clip {
                let norm = total.l2_norm();
                if norm > limit {
                    total.scale(limit / norm);
                }
            }
            adam_step(&mut params, &total, &mut optim)?;
        }

        let dev_ccc = concat_ccc(&params, dev_set)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_ccc,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        on_epoch(&rec);
        record.epochs.push(rec);

        let improved = best.as_ref().is_none_or(|(b, _)| dev_ccc > *b);
        if improved {
            record.best_epoch = epoch;
            best = Some((dev_ccc, params.clone()));
        }
        if dev_ccc > plateau.0 + config.min_delta {
            plateau = (dev_ccc, epoch);
        }
        if let Some(p) = config.patience {
            if epoch - plateau.1 >= p {
                break;
            }
        }
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        last: params,
        record,
    })
}
