//! Losses, Adam optimization with cosine decay, the training loop and the
//! generalization-gap experiment.

pub mod adam;
pub mod loss;
mod loops;

pub use adam::{adam_step, AdamState};
pub use loops::{
    bound_shape, evaluate, generalization_experiment, train, train_traced, GenPoint, TrainOutput,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error("epoch observer failed: {0}")]
    Observer(String),
    #[error("non-finite gradient at parameter {index} (epoch {epoch})")]
    NonFiniteGradient { index: usize, epoch: usize },
    #[error("loss diverged to a non-finite value at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("rescale range is inverted: max {max} < min {min}")]
    InvertedRange { min: f64, max: f64 },
    #[error("empty {what}")]
    Empty { what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Cce,
    L2,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    32
}

fn default_loss() -> LossKind {
    LossKind::Bce
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: default_batch(),
            learning_rate: 0.05,
            lr_schedule: LrSchedule::Cosine,
            loss: default_loss(),
            seed: 0,
        }
    }
}

/// Per-epoch learning rate under the configured schedule.
pub fn scheduled_lr(config: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    match config.lr_schedule {
        LrSchedule::Constant => config.learning_rate,
        LrSchedule::Cosine => {
            if total_steps <= 1 {
                return config.learning_rate;
            }
            let t = step as f64 / total_steps as f64;
            config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub wall_secs: Vec<f64>,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_schedule: LrSchedule::Cosine,
            ..TrainConfig::default()
        };
        let total = 400;
        assert_eq!(scheduled_lr(&cfg, 0, total), 0.1);
        let last = scheduled_lr(&cfg, total - 1, total);
        assert!(last <= 0.01 * 0.1, "final lr {last}");
        // Monotone decreasing.
        let mut prev = f64::INFINITY;
        for s in 0..total {
            let lr = scheduled_lr(&cfg, s, total);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn constant_schedule_is_flat() {
        let cfg = TrainConfig {
            learning_rate: 0.03,
            lr_schedule: LrSchedule::Constant,
            ..TrainConfig::default()
        };
        assert_eq!(scheduled_lr(&cfg, 0, 100), 0.03);
        assert_eq!(scheduled_lr(&cfg, 99, 100), 0.03);
    }
}
