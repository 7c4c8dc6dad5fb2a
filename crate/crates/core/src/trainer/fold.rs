use rand::seq::SliceRandom;

use super::{adam_step, AdamState, Monitor, Task, TrainConfig, Variant};
use crate::dataio::Dataset;
use crate::error::{shape_err, DsidError, Result};
use crate::matrix::Matrix;
use crate::metrics::{predict_labels, TaskOutcome};
use crate::netcore::{stream, DropoutRngs, DsidModel, ForwardMode, ModelDims, Topology};
use crate::objective::{cross_entropy, total_loss, ObjectiveConfig};

const SHUFFLE_STREAM: u64 = 20;
const HOLDOUT_STREAM: u64 = 21;

/// Batch-averaged losses for one epoch plus the monitor accuracy after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub true_ce: f64,
    pub disguised_ce: f64,
    pub hsic: f64,
    pub monitor_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub subject_id: u16,
    pub ter: Option<TaskOutcome>,
    pub der: Option<TaskOutcome>,
    pub epochs_ran: usize,
    pub best_epoch: usize,
    pub best_monitor_accuracy: f64,
    pub history: Vec<EpochStats>,
}

impl FoldResult {
    pub fn outcome(&self, task: Task) -> Option<&TaskOutcome> {
        match task {
            Task::Ter => self.ter.as_ref(),
            Task::Der => self.der.as_ref(),
        }
    }
}

/// A fold's result and the restored best-monitor model.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub result: FoldResult,
    pub model: DsidModel,
}

fn embeddings(ds: &Dataset) -> Matrix {
    let mut m = Matrix::zeros(ds.len(), ds.d_emb);
    for (i, r) in ds.records.iter().enumerate() {
        for (dst, &v) in m.row_mut(i).iter_mut().zip(&r.embedding) {
            *dst = v as f64;
        }
    }
    m
}

fn labels(ds: &Dataset, task: Task) -> Vec<usize> {
    ds.records
        .iter()
        .map(|r| match task {
            Task::Ter => r.true_label as usize,
            Task::Der => r.disguised_label as usize,
        })
        .collect()
}

fn gather(x: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), x.cols());
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(x.row(i));
    }
    out
}

fn pick(v: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Splits off a seeded 20% of each subject's samples as a monitor set.
///
/// Subjects with at least two samples contribute `max(1, ⌊n/5⌋)` samples;
/// record order is preserved in both parts.
pub fn inner_holdout_split(train: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = stream(seed, HOLDOUT_STREAM);
    let mut monitor_idx = Vec::new();
    for s in train.subjects() {
        let mut idx: Vec<usize> = (0..train.len())
            .filter(|&i| train.records[i].subject_id == s)
            .collect();
        if idx.len() < 2 {
            continue;
        }
        idx.shuffle(&mut rng);
        let k = (idx.len() / 5).max(1);
        monitor_idx.extend_from_slice(&idx[idx.len() - k..]);
    }
    monitor_idx.sort_unstable();
    let fit_idx: Vec<usize> = (0..train.len())
        .filter(|i| monitor_idx.binary_search(i).is_err())
        .collect();
    if monitor_idx.is_empty() {
        return Err(DsidError::EmptyEvalSet);
    }
    Ok((train.subset(&fit_idx), train.subset(&monitor_idx)))
}

struct Prepared {
    x: Matrix,
    true_labels: Vec<usize>,
    disg_labels: Vec<usize>,
}

impl Prepared {
    fn new(ds: &Dataset) -> Self {
        Self {
            x: embeddings(ds),
            true_labels: labels(ds, Task::Ter),
            disg_labels: labels(ds, Task::Der),
        }
    }

    fn labels(&self, task: Task) -> &[usize] {
        match task {
            Task::Ter => &self.true_labels,
            Task::Der => &self.disg_labels,
        }
    }
}

fn primary_task(variant: Variant) -> Task {
    match variant {
        Variant::Dsid => Task::Ter,
        Variant::SingleStream(t) => t,
    }
}

fn monitor_accuracy(model: &DsidModel, set: &Prepared, task: Task) -> Result<f64> {
    let out = model.predict(&set.x)?;
    let preds = predict_labels(&out.true_logits);
    let correct = preds.iter().zip(set.labels(task)).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Trains one model on `train` and scores it on `eval`.
///
/// Each epoch reshuffles the training rows, steps Adam once per batch, then
/// measures the monitor set's accuracy on the primary task (true emotion for
/// DSID). Training stops after `patience` epochs without strict improvement or
/// at `max_epochs`; the earliest best epoch's parameters are restored before
/// the final predictions.
pub fn train_fold(
    train: &Dataset,
    eval: &Dataset,
    dims: ModelDims,
    variant: Variant,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
) -> Result<TrainedFold> {
    cfg.validate()?;
    obj.validate()?;
    if train.is_empty() {
        return Err(DsidError::EmptyTrainSet);
    }
    if eval.is_empty() {
        return Err(DsidError::EmptyEvalSet);
    }
    if train.d_emb != dims.d_emb || eval.d_emb != dims.d_emb {
        return Err(shape_err("embedding width", dims.d_emb, train.d_emb));
    }
    let eval_subjects = eval.subjects();
    if let Some(s) = train.subjects().into_iter().find(|s| eval_subjects.binary_search(s).is_ok()) {
        return Err(DsidError::SubjectLeak(s));
    }

    let seed = cfg.seed;
    let (fit, monitor) = match cfg.monitor {
        Monitor::HeldOutFold => (Prepared::new(train), Prepared::new(eval)),
        Monitor::InnerHoldout => {
            let (f, m) = inner_holdout_split(train, seed)?;
            (Prepared::new(&f), Prepared::new(&m))
        }
    };
    let n_fit = fit.x.rows();
    if n_fit < 2 || cfg.batch_size < 2 {
        return Err(DsidError::TrainSetTooSmall);
    }

    let topology = match variant {
        Variant::Dsid => Topology::DualStream,
        Variant::SingleStream(_) => Topology::SingleStream,
    };
    let task = primary_task(variant);
    let mut model = DsidModel::init(dims, topology, cfg.dropout_p, seed)?;
    let mut rngs = DropoutRngs::new(seed);
    let mut shuffle_rng = stream(seed, SHUFFLE_STREAM);
    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..n_fit).collect();

    let mut best: Option<(usize, f64, DsidModel)> = None;
    let mut since_best = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // BatchNorm needs two rows
            if chunk.len() < 2 {
                continue;
            }
            let xb = gather(&fit.x, chunk);
            let out = model.forward(&xb, ForwardMode::Train, &mut rngs)?;
            model.commit_running_stats(&out.trace);
            let grads = match variant {
                Variant::Dsid => {
                    let yt = pick(&fit.true_labels, chunk);
                    let yd = pick(&fit.disg_labels, chunk);
                    let disg = out.disguised_logits.as_ref().expect("dual-stream output");
                    let loss = total_loss(&out.true_logits, disg, &out.pairs, &yt, &yd, obj)?;
                    sums[0] += loss.total;
                    sums[1] += loss.components.true_ce;
                    sums[2] += loss.components.disguised_ce;
                    sums[3] += loss.components.hsic;
                    model.backward(
                        out.trace,
                        &loss.grads.true_logits,
                        Some(&loss.grads.disguised_logits),
                        Some(&loss.grads.pairs),
                    )?
                }
                Variant::SingleStream(t) => {
                    let y = pick(fit.labels(t), chunk);
                    let (l, g) = cross_entropy(&out.true_logits, &y)?;
                    sums[0] += l;
                    sums[1] += l;
                    model.backward(out.trace, &g, None, None)?
                }
            };
            let g = grads.tensors();
            let mut params: Vec<(bool, &mut [f64])> = model
                .trainable_mut()
                .into_iter()
                .map(|(k, t)| (k.decays(), t))
                .collect();
            adam_step(&mut params, &g, &mut adam, &cfg.adam)?;
            batches += 1;
        }
        if batches == 0 {
            return Err(DsidError::TrainSetTooSmall);
        }

        let acc = monitor_accuracy(&model, &monitor, task)?;
        let nb = batches as f64;
        history.push(EpochStats {
            epoch,
            total: sums[0] / nb,
            true_ce: sums[1] / nb,
            disguised_ce: sums[2] / nb,
            hsic: sums[3] / nb,
            monitor_accuracy: acc,
        });
        if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
            best = Some((epoch, acc, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_acc, model) = best.expect("at least one epoch ran");
    let eval_set = Prepared::new(eval);
    let out = model.predict(&eval_set.x)?;
    let primary = predict_labels(&out.true_logits);
    let (ter, der) = match variant {
        Variant::Dsid => {
            let disg = predict_labels(out.disguised_logits.as_ref().expect("dual-stream output"));
            (
                Some(TaskOutcome::new(primary, eval_set.true_labels.clone(), dims.c_true)?),
                Some(TaskOutcome::new(disg, eval_set.disg_labels.clone(), dims.c_disg)?),
            )
        }
        Variant::SingleStream(Task::Ter) => (
            Some(TaskOutcome::new(primary, eval_set.true_labels.clone(), dims.c_true)?),
            None,
        ),
        Variant::SingleStream(Task::Der) => (
            None,
            Some(TaskOutcome::new(primary, eval_set.disg_labels.clone(), dims.c_true)?),
        ),
    };

    Ok(TrainedFold {
        result: FoldResult {
            subject_id: eval_subjects[0],
            ter,
            der,
            epochs_ran: history.len(),
            best_epoch,
            best_monitor_accuracy: best_acc,
            history,
        },
        model,
    })
}
