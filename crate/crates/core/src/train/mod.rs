//! Self-supervised pre-training: masked reconstruction loss, gradients,
//! AdamW with warmup + cosine schedule, and the three-task batch loop.

mod grad;
mod gradcheck;
mod loss;
mod optim;
mod pretrain;

pub use grad::{accumulate_gradients, compute_gradients, GradItem, Gradients};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport, GroupError};
pub use loss::masked_mse;
pub use optim::{adamw_update, lr_schedule, OptimizerState};
pub use pretrain::{
    evaluate_losses, pretrain, pretrain_from, pretrain_step, LossReport, NullObserver, StepRecord, TrainObserver, TrainSet,
    TrainSummary,
};

use serde::{Deserialize, Serialize};

/// Optimizer, schedule and masking settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Fractional values are allowed so the warmup can be scaled to short runs.
    pub warmup_epochs: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Masking ratios for the random, time and frequency tasks.
    pub ratios: [f64; 3],
    pub seed: u64,
    /// Run in double precision (used by gradient checking).
    pub grad_check_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            base_lr: 5e-4,
            warmup_epochs: 5.0,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            ratios: [0.85, 0.5, 0.5],
            seed: 0,
            grad_check_mode: false,
        }
    }
}

impl TrainConfig {
    /// Default settings with the warmup scaled to keep its share of the run.
    pub fn scaled_to(epochs: usize) -> Self {
        let d = TrainConfig::default();
        TrainConfig {
            epochs,
            warmup_epochs: d.warmup_epochs * epochs as f64 / d.epochs as f64,
            ..d
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::WifoError;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(WifoError::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(WifoError::InvalidArgument(
                "all three masking ratios must lie in (0, 1] during training".into(),
            ));
        }
        if !(self.base_lr >= 0.0) || !(self.warmup_epochs >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(WifoError::InvalidArgument("learning rate, warmup and weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(WifoError::InvalidArgument("betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}
