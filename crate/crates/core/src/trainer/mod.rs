//! Adam training with early stopping and leave-one-subject-out orchestration.

mod adam;
mod fold;
mod loso;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fold::{inner_holdout_split, train_fold, EpochStats, FoldResult, TrainedFold};
pub use loso::{run_loso, LosoRun};

use crate::error::{DsidError, Result};

/// Which set drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Monitor {
    /// The held-out subject itself.
    #[default]
    HeldOutFold,
    /// A seeded 20% slice of every training subject's samples, removed from training.
    InnerHoldout,
}

impl Monitor {
    pub fn as_str(self) -> &'static str {
        match self {
            Monitor::HeldOutFold => "heldout",
            Monitor::InnerHoldout => "inner",
        }
    }
}

impl std::str::FromStr for Monitor {
    type Err = DsidError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heldout" => Ok(Monitor::HeldOutFold),
            "inner" => Ok(Monitor::InnerHoldout),
            other => Err(DsidError::InvalidConfig(format!("unknown monitor {other:?}"))),
        }
    }
}

/// The two classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// True emotion recognition.
    Ter,
    /// Disguised emotion recognition.
    Der,
}

/// Network layout to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Both branches, trained with the full weighted objective.
    Dsid,
    /// One branch trained with cross-entropy on a single task.
    SingleStream(Task),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub dropout_p: f64,
    pub patience: usize,
    pub seed: u64,
    pub monitor: Monitor,
    pub adam: AdamConfig,
    /// Upper bound on folds trained concurrently.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 32,
            dropout_p: 0.5,
            patience: 50,
            seed: 0,
            monitor: Monitor::HeldOutFold,
            adam: AdamConfig::default(),
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DsidError::InvalidConfig(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be ≥ 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p));
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1".into());
        }
        let a = &self.adam;
        if !(a.lr.is_finite() && a.lr > 0.0) || !(a.weight_decay.is_finite() && a.weight_decay >= 0.0) {
            return bad(format!("invalid learning rate {} or weight decay {}", a.lr, a.weight_decay));
        }
        Ok(())
    }
}
