//! Learning-rate and scheduled-sampling schedules.

use super::TrainConfig;

/// Cross-entropy learning rate: decays by `lr_anneal_xe` every
/// `lr_anneal_every` epochs.
pub fn xe_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr_xe * cfg.lr_anneal_xe.powi((epoch / cfg.lr_anneal_every) as i32)
}

/// Scheduled-sampling probability: grows by `ss_increment` every
/// `ss_every` epochs, capped at `ss_cap`.
pub fn ss_prob(cfg: &TrainConfig, epoch: usize) -> f64 {
    (cfg.ss_increment * (epoch / cfg.ss_every) as f64).min(cfg.ss_cap)
}

/// Multiplies the rate by `factor` once the monitored score has failed to
/// improve on its best for `patience` consecutive evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub stale: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Plateau {
            lr,
            factor,
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records a score and returns the rate for the next epoch.
    pub fn observe(&mut self, score: f64) -> f64 {
        match self.best {
            Some(b) if score <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    self.lr *= self.factor;
                    self.stale = 0;
                }
            }
            _ => {
                self.best = Some(score);
                self.stale = 0;
            }
        }
        self.lr
    }
}
