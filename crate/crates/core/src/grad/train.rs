use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::backward::{backward_with_mode, task_loss, Batch, JacobianMode};
use super::loss::{Labels, LossKind};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};
use crate::polynet::{PolyNetwork, RegularizerKind};
use crate::regularizers::SpectralProjector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Optional global-norm gradient clip.
    pub clip_norm: Option<f64>,
    pub jacobian_mode: JacobianMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 1337,
            clip_norm: None,
            jacobian_mode: JacobianMode::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be > 0".into()));
        }
        Ok(())
    }
}

/// Features and targets in the training precision.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData<T = f64> {
    pub x: Matrix<T>,
    pub y: Labels<T>,
}

impl<T: Real> TrainData<T> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn batch(&self) -> Batch<'_, T> {
        Batch::new(&self.x, &self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrainStatus {
    Completed,
    EarlyStopped,
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective (task + penalty) over the epoch's mini-batches.
    pub train_loss: f64,
    pub train_task_loss: f64,
    /// Task loss only.
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_epoch: usize,
    pub status: TrainStatus,
}

impl TrainReport {
    /// Equality ignoring wall-clock fields.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            for e in &mut r.epochs {
                e.seconds = 0.0;
            }
            r
        };
        strip(self) == strip(other)
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite(_) | Error::Overflow { .. } | Error::NonFiniteGradient { .. }
    )
}

/// Mini-batch Adam with per-epoch validation and early stopping.
///
/// Returns the snapshot with the lowest validation task loss. A non-finite
/// loss or gradient ends training with [`TrainStatus::Diverged`].
pub fn train<T: Real>(
    net: PolyNetwork<T>,
    train_set: &TrainData<T>,
    val_set: &TrainData<T>,
    config: &TrainConfig,
    loss: LossKind,
) -> Result<(PolyNetwork<T>, TrainReport)> {
    config.validate()?;
    net.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("train and validation sets must be non-empty".into()));
    }
    train_set.y.check(loss, net.output_dim())?;
    val_set.y.check(loss, net.output_dim())?;

    let mut net = net;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut adam = AdamState::new(&net);
    let mut projector = match net.regularizer {
        RegularizerKind::SpectralNorm { power_iters } => {
            let mut p = SpectralProjector::new(&net, power_iters, config.seed);
            p.project(&mut net);
            Some(p)
        }
        _ => None,
    };

    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut status = TrainStatus::Completed;

    'epochs: for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut task = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::subset(&train_set.x, &train_set.y, chunk);
            let (value, mut grads) = match backward_with_mode(&net, &batch, loss, config.jacobian_mode) {
                Ok(r) => r,
                Err(e) if is_divergence(&e) => {
                    status = TrainStatus::Diverged {
                        epoch,
                        reason: e.to_string(),
                    };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let w = chunk.len() as f64;
            total += value.total.as_f64() * w;
            task += value.task.as_f64() * w;
            if let Some(clip) = config.clip_norm {
                let norm = grads.global_norm().as_f64();
                if norm > clip {
                    grads.scale(T::c(clip / norm));
                }
            }
            adam_step(&mut net, &grads, &mut adam, &config.adam);
            if let Some(p) = projector.as_mut() {
                p.project(&mut net);
            }
        }

        let val = match task_loss(&net, &val_set.batch(), loss) {
            Ok(v) if v.as_f64().is_finite() => v.as_f64(),
            Ok(_) => f64::NAN,
            Err(e) if is_divergence(&e) => f64::NAN,
            Err(e) => return Err(e),
        };
        let n = train_set.len() as f64;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / n,
            train_task_loss: task / n,
            val_loss: val,
            seconds: start.elapsed().as_secs_f64(),
        });
        if !val.is_finite() {
            status = TrainStatus::Diverged {
                epoch,
                reason: "non-finite validation loss".into(),
            };
            break;
        }
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_net = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                status = TrainStatus::EarlyStopped;
                break;
            }
        }
    }

    let stopped_epoch = match &status {
        TrainStatus::Diverged { epoch, .. } => *epoch,
        _ => epochs.len(),
    };
    Ok((
        best_net,
        TrainReport {
            epochs,
            best_epoch,
            best_val_loss: best_val,
            stopped_epoch,
            status,
        },
    ))
}
