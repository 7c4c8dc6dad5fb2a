use rayon::prelude::*;

use super::{train_fold, FoldResult, Task, TrainConfig, Variant};
use crate::dataio::{split_by_subject, Dataset};
use crate::error::{DsidError, Result};
use crate::metrics::{pool_folds, PooledScore};
use crate::netcore::{DsidModel, ModelDims};
use crate::objective::ObjectiveConfig;

/// All folds of one leave-one-subject-out run, ascending by subject id.
#[derive(Debug, Clone)]
pub struct LosoRun {
    pub folds: Vec<FoldResult>,
    pub models: Vec<DsidModel>,
    pub ter: Option<PooledScore>,
    pub der: Option<PooledScore>,
}

impl LosoRun {
    pub fn pooled(&self, task: Task) -> Option<&PooledScore> {
        match task {
            Task::Ter => self.ter.as_ref(),
            Task::Der => self.der.as_ref(),
        }
    }
}

/// One fold per subject. Fold `s` trains with seed `train_cfg.seed + s`, so
/// results do not depend on the order or concurrency in which folds run.
pub fn run_loso(
    dataset: &Dataset,
    dims: ModelDims,
    variant: Variant,
    obj: &ObjectiveConfig,
    train_cfg: &TrainConfig,
) -> Result<LosoRun> {
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(DsidError::TooFewSubjects(subjects.len()));
    }
    train_cfg.validate()?;
    obj.validate()?;

    let fold = |&s: &u16| -> Result<_> {
        let (train, test) = split_by_subject(dataset, s)?;
        let cfg = TrainConfig {
            seed: train_cfg.seed.wrapping_add(s as u64),
            ..*train_cfg
        };
        train_fold(&train, &test, dims, variant, obj, &cfg)
    };
    let trained: Vec<_> = if train_cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(train_cfg.jobs)
            .build()
            .map_err(|e| DsidError::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| subjects.par_iter().map(fold).collect::<Result<_>>())?
    } else {
        subjects.iter().map(fold).collect::<Result<_>>()?
    };

    let (folds, models): (Vec<_>, Vec<_>) = trained.into_iter().map(|t| (t.result, t.model)).unzip();
    let pool_task = |task: Task| -> Result<Option<PooledScore>> {
        let outcomes: Vec<_> = folds.iter().filter_map(|f| f.outcome(task)).collect();
        if outcomes.is_empty() {
            return Ok(None);
        }
        let classes = outcomes[0].score.confusion.classes();
        pool_folds(outcomes, classes).map(Some)
    };
    Ok(LosoRun {
        ter: pool_task(Task::Ter)?,
        der: pool_task(Task::Der)?,
        folds,
        models,
    })
}
