//! Minibatch gradient descent loop shared by both classifiers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::ContrastiveError;
use crate::data::DataError;
use crate::encoders::{EncoderError, ParamSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Decoupled weight decay: each step also shrinks every parameter by
    /// `learning_rate * weight_decay` times its value.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.003,
            seed: 0,
            optimizer: Optimizer::Adam,
            weight_decay: 0.1,
        }
    }
}

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (events {events:?})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
        events: Vec<String>,
    },
    #[error("event {0} has no conflict type")]
    MissingConflict(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
}

pub(crate) trait Trainable: Clone {
    type Example;

    fn zero_grads(&self) -> Vec<ParamSet>;
    /// Parameters subject to weight decay, in `zero_grads` order; parts left
    /// off the end are not decayed.
    fn decayed_params(&self) -> Vec<&ParamSet>;
    /// Mean loss over `batch`; adds the gradient of that mean into `grads`.
    fn batch_loss(&self, batch: &[&Self::Example], grads: &mut [ParamSet]) -> Result<f64, TrainError>;
    /// `params -= step`, part by part in `zero_grads` order.
    fn apply(&mut self, step: &[ParamSet]);
    fn accuracy(&self, examples: &[Self::Example]) -> Result<f64, TrainError>;
    fn example_id(example: &Self::Example) -> String;
    fn temperature(&self) -> Option<f64> {
        None
    }
}

pub(crate) struct Fitted<M> {
    pub model: M,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub log: Vec<EpochLog>,
}

pub(crate) fn fit<M: Trainable>(
    mut model: M,
    train: &[M::Example],
    val: &[M::Example],
    cfg: &TrainConfig,
) -> Result<Fitted<M>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(TrainError::Config("epochs and batch_size must be positive".into()));
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 {
        return Err(TrainError::Config(format!("learning rate {}", cfg.learning_rate)));
    }
    if !cfg.weight_decay.is_finite() || cfg.weight_decay < 0.0 {
        return Err(TrainError::Config(format!("weight decay {}", cfg.weight_decay)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, M)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut opt = OptState::new(cfg, &model.zero_grads());
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&M::Example> = chunk.iter().map(|&i| &train[i]).collect();
            let mut grads = model.zero_grads();
            let loss = model.batch_loss(&batch, &mut grads)?;
            if !loss.is_finite() || !grads.iter().all(ParamSet::all_finite) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    loss,
                    events: batch.iter().map(|e| M::example_id(e)).collect(),
                });
            }
            total += loss * batch.len() as f64;
            opt.step(&mut grads);
            if cfg.weight_decay > 0.0 {
                for (g, p) in grads.iter_mut().zip(model.decayed_params()) {
                    g.add_scaled(p, cfg.learning_rate * cfg.weight_decay);
                }
            }
            model.apply(&grads);
        }
        let acc = model.accuracy(val)?;
        log.push(EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_accuracy: acc,
            temperature: model.temperature(),
        });
        if best.as_ref().map_or(true, |(_, b, _)| acc > *b) {
            best = Some((epoch, acc, model.clone()));
        }
    }
    let (best_epoch, best_accuracy, model) = best.expect("at least one epoch");
    Ok(Fitted {
        model,
        best_epoch,
        best_accuracy,
        log,
    })
}

struct OptState {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m: Vec<ParamSet>,
    v: Vec<ParamSet>,
}

impl OptState {
    fn new(cfg: &TrainConfig, shapes: &[ParamSet]) -> Self {
        let moments = || match cfg.optimizer {
            Optimizer::Adam => shapes.to_vec(),
            Optimizer::Sgd => Vec::new(),
        };
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            t: 0,
            m: moments(),
            v: moments(),
        }
    }

    /// Turn gradients into the step to subtract, in place.
    fn step(&mut self, grads: &mut [ParamSet]) {
        match self.kind {
            Optimizer::Sgd => grads.iter_mut().for_each(|g| g.scale(self.lr)),
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for ((g, m), v) in grads.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    for ((name, gt), (_, mt)) in g.iter_mut().zip(m.iter_mut()) {
                        let vt = v.get_mut(name).expect("same names");
                        for ((gi, mi), vi) in gt.data.iter_mut().zip(&mut mt.data).zip(&mut vt.data) {
                            *mi = B1 * *mi + (1.0 - B1) * *gi;
                            *vi = B2 * *vi + (1.0 - B2) * *gi * *gi;
                            *gi = self.lr * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn descend(params: &mut ParamSet, step: &ParamSet) {
    params.add_scaled(step, -1.0);
}
