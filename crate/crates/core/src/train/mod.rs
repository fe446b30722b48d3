//! Cross-entropy and self-critical training.

pub mod adam;
pub mod loss;
pub mod schedule;
mod trainer;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Scores;

pub use adam::{adam_update, AdamState};
pub use loss::{scheduled_sampling_loss, scst_pseudo_loss, scst_step, xe_loss, ScstStep};
pub use schedule::{ss_prob, xe_lr, Plateau};
pub use trainer::{run_training, TrainOutcome, LOG_FILE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub xe_epochs: usize,
    pub scst_epochs: usize,
    pub lr_xe: f64,
    /// Multiplier applied every `lr_anneal_every` XE epochs.
    pub lr_anneal_xe: f64,
    pub lr_anneal_every: usize,
    pub lr_scst: f64,
    /// Multiplier applied when validation CIDEr-D plateaus.
    pub lr_anneal_scst: f64,
    pub scst_patience: usize,
    pub ss_increment: f64,
    pub ss_every: usize,
    pub ss_cap: f64,
    pub seed: u64,
    pub max_len: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Reference captions used per image in XE; 0 uses all of them.
    pub captions_per_image: usize,
    pub min_count: usize,
    /// Validation interval in XE epochs; the last epoch is always scored.
    pub eval_every: usize,
    /// Intermediate checkpoint interval in epochs; 0 writes only phase ends.
    pub checkpoint_every: usize,
    /// Worker threads for per-example gradients; 0 uses all cores.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            xe_epochs: 30,
            scst_epochs: 15,
            lr_xe: 2e-4,
            lr_anneal_xe: 0.8,
            lr_anneal_every: 3,
            lr_scst: 2e-5,
            lr_anneal_scst: 0.5,
            scst_patience: 3,
            ss_increment: 0.05,
            ss_every: 5,
            ss_cap: 0.5,
            seed: 1,
            max_len: 16,
            grad_clip: 0.0,
            captions_per_image: 0,
            min_count: 5,
            eval_every: 1,
            checkpoint_every: 0,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("lr_xe", self.lr_xe), ("lr_scst", self.lr_scst)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lr_anneal_xe", self.lr_anneal_xe), ("lr_anneal_scst", self.lr_anneal_scst)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.ss_cap) || !(self.ss_increment >= 0.0) {
            return bad(format!(
                "scheduled sampling needs ss_increment >= 0 and ss_cap in [0, 1], got {} / {}",
                self.ss_increment, self.ss_cap
            ));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("lr_anneal_every", self.lr_anneal_every),
            ("ss_every", self.ss_every),
            ("scst_patience", self.scst_patience),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("grad_clip must be non-negative, got {}", self.grad_clip));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Xe,
    Scst,
    Full,
}

impl Phase {
    pub fn runs_xe(self) -> bool {
        matches!(self, Phase::Xe | Phase::Full)
    }

    pub fn runs_scst(self) -> bool {
        matches!(self, Phase::Scst | Phase::Full)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Xe => "xe",
            Phase::Scst => "scst",
            Phase::Full => "full",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xe" => Ok(Phase::Xe),
            "scst" => Ok(Phase::Scst),
            "full" => Ok(Phase::Full),
            other => Err(Error::Config(format!("unknown phase {other:?} (xe | scst | full)"))),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: String,
    pub lr: f64,
    pub ss_prob: f64,
    /// Per-token cross-entropy (XE) or mean surrogate loss (SCST).
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_sample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_greedy: Option<f64>,
    pub val: Option<Scores>,
}

pub(crate) const STREAM_XE: u64 = 1;
pub(crate) const STREAM_SCST: u64 = 2;

/// Independent random stream per (seed, phase, epoch, example), so results
/// do not depend on how examples are spread over threads.
pub fn stream_rng(seed: u64, phase: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, phase, epoch, index].iter().enumerate() {
        key[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
