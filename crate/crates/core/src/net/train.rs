use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Task, TrainConfig};
use super::model::CsiNet;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, l1_loss, lr_schedule_with, AdamState, Mode, Tensor};
use crate::pipeline::Instance;
use crate::seed::derive_seed;

/// Mean minibatch loss and learning rate for every epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub epoch_lr: Vec<f64>,
}

/// Per-head training targets.
#[derive(Debug, Clone)]
pub enum Targets {
    Classes(Vec<usize>),
    /// Row-major `[N, 4]`, already normalized.
    Biometrics(Vec<f32>),
}

impl Targets {
    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Biometrics(b) => Targets::Biometrics(idx.iter().flat_map(|&i| b[i * 4..i * 4 + 4].to_vec()).collect()),
        }
    }
}

/// Extracts the targets each head of `model` needs from the labels.
pub fn targets_for(model: &CsiNet, data: &[Instance]) -> Result<Vec<Targets>> {
    let norm = model.normalization();
    model
        .config()
        .tasks
        .iter()
        .map(|t| match t.task {
            Task::Biometrics => {
                let mut out = Vec::with_capacity(data.len() * 4);
                for inst in data {
                    let b = inst
                        .label
                        .biometrics()
                        .filter(|b| b.len() == 4)
                        .ok_or_else(|| Error::domain(format!("label {:?} has no biometrics for the biometrics head", inst.label)))?;
                    out.extend(norm.normalize_bio(b).into_iter().map(|v| v as f32));
                }
                Ok(Targets::Biometrics(out))
            }
            task => data
                .iter()
                .map(|inst| {
                    let c = inst
                        .label
                        .class()
                        .ok_or_else(|| Error::domain(format!("label {:?} has no class for the {} head", inst.label, task.name())))?
                        as usize;
                    if c >= t.output_dim {
                        return Err(Error::domain(format!("class {c} out of range for the {} head", task.name())));
                    }
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()
                .map(Targets::Classes),
        })
        .collect()
}

/// Forward, loss and backward for one minibatch; gradients are left in the
/// parameters. Returns the weighted total loss.
pub fn loss_and_backward(model: &mut CsiNet, x: &Tensor<f32>, targets: &[Targets]) -> Result<f64> {
    let outputs = model.forward(x, Mode::Train)?;
    let alphas: Vec<f32> = model.config().tasks.iter().map(|t| t.alpha as f32).collect();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for ((y, t), &alpha) in outputs.iter().zip(targets).zip(&alphas) {
        let (loss, g) = match t {
            Targets::Classes(c) => cross_entropy_loss(y, c)?,
            Targets::Biometrics(b) => l1_loss(y, &Tensor::new(y.shape(), b.clone())?)?,
        };
        total += alpha as f64 * loss as f64;
        grads.push(g.scale(alpha));
    }
    model.backward(&grads)?;
    Ok(total)
}

/// Trains with shuffled minibatches, Adam and the milestone schedule.
///
/// Normalization is refitted on `data` first. A trailing minibatch of one
/// instance is skipped because batch norm cannot train on it.
pub fn train(model: &mut CsiNet, data: &[Instance], cfg: &TrainConfig) -> Result<TrainLog> {
    train_with_optimizer(model, data, cfg).map(|(log, _)| log)
}

/// [`train`], also returning the final optimizer state for checkpointing.
pub fn train_with_optimizer(
    model: &mut CsiNet,
    data: &[Instance],
    cfg: &TrainConfig,
) -> Result<(TrainLog, AdamState<f32>)> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::domain("training needs at least 2 instances"));
    }
    model.fit_normalization(data)?;
    let targets = targets_for(model, data)?;
    let x_all = model.input_tensor(data.iter().map(|i| i.amplitude.as_slice()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train"));
    let mut adam = AdamState::new(cfg.initial_lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        adam.lr = lr_schedule_with(cfg.initial_lr, epoch, &cfg.milestones);
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in order.chunks(cfg.minibatch).filter(|b| b.len() > 1) {
            let mut xb = Vec::with_capacity(idx.len() * 30);
            for &i in idx {
                xb.extend_from_slice(x_all.item(i));
            }
            let x = Tensor::new(&[idx.len(), 30, 1, 1], xb)?;
            let t: Vec<Targets> = targets.iter().map(|t| t.select(idx)).collect();
            model.zero_grad();
            let loss = loss_and_backward(model, &x, &t)?;
            if !loss.is_finite() {
                return Err(Error::domain(format!("non-finite loss at epoch {epoch}")));
            }
            adam.step(&mut model.params_mut())?;
            sum += loss;
            batches += 1;
        }
        log.epoch_loss.push(sum / batches.max(1) as f64);
        log.epoch_lr.push(adam.lr);
    }
    Ok((log, adam))
}

/// Per-head predictions for a set of instances.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<u32>),
    /// Denormalized biometric vectors.
    Biometrics(Vec<Vec<f64>>),
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const PREDICT_CHUNK: usize = 256;

/// Eval-mode predictions, one entry per head.
pub fn predict(model: &mut CsiNet, data: &[Instance]) -> Result<Vec<Predictions>> {
    let tasks = model.tasks();
    let mut out: Vec<Predictions> = tasks
        .iter()
        .map(|t| {
            if t.is_regression() {
                Predictions::Biometrics(Vec::with_capacity(data.len()))
            } else {
                Predictions::Classes(Vec::with_capacity(data.len()))
            }
        })
        .collect();
    for chunk in data.chunks(PREDICT_CHUNK) {
        let x = model.input_tensor(chunk.iter().map(|i| i.amplitude.as_slice()))?;
        let ys = model.forward(&x, Mode::Eval)?;
        for (y, p) in ys.iter().zip(&mut out) {
            let k = y.dim(1);
            match p {
                Predictions::Classes(c) => c.extend(y.data().chunks_exact(k).map(|r| argmax(r) as u32)),
                Predictions::Biometrics(b) => {
                    let norm = model.normalization();
                    b.extend(y.data().chunks_exact(k).map(|r| {
                        norm.denormalize_bio(&r.iter().map(|&v| v as f64).collect::<Vec<_>>())
                    }))
                }
            }
        }
    }
    Ok(out)
}
