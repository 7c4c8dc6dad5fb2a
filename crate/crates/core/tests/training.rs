use dsid_core::dataio::{split_by_subject, synth_generate};
use dsid_core::netcore::encode_model;
use dsid_core::trainer::{inner_holdout_split, run_loso, train_fold, AdamConfig};
use dsid_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(subject: u16, t: u8, g: u8, embedding: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord {
        subject_id: subject,
        true_label: t,
        disguised_label: g,
        frame_type: FrameType::Apex,
        embedding,
    }
}

/// Two true classes separated by a gap of at least 1 along the first axis; the
/// disguised label is uninformative noise.
fn separable(subjects: u16, per_subject: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for s in 1..=subjects {
        for i in 0..per_subject {
            let t = (i % 2) as u8;
            let g = rng.random_range(2..6u8);
            let mut e: Vec<f32> = (0..d).map(|_| rng.random_range(-0.2..0.2)).collect();
            let offset = 0.5 + rng.random_range(0.0f32..0.1);
            e[0] = if t == 0 { -offset } else { offset };
            records.push(record(s, t, g, e));
        }
    }
    Dataset::new(d, records).unwrap()
}

fn small_dims(d: usize) -> ModelDims {
    ModelDims::new(d, 16, 8)
}

fn quick(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        batch_size: 8,
        patience: 5,
        seed,
        ..Default::default()
    }
}

#[test]
fn patience_one_stops_after_first_non_improving_epoch() {
    // every label is class 0, and a large step makes epoch 1 already perfect
    let mut ds = separable(3, 12, 6, 1);
    for r in &mut ds.records {
        r.true_label = 0;
        r.disguised_label = 1;
    }
    let (train, eval) = split_by_subject(&ds, 3).unwrap();
    let cfg = TrainConfig {
        patience: 1,
        adam: AdamConfig {
            lr: 0.05,
            ..Default::default()
        },
        ..quick(3, 200)
    };
    let r = train_fold(&train, &eval, small_dims(6), Variant::SingleStream(Task::Ter), &ObjectiveConfig::default(), &cfg)
        .unwrap()
        .result;
    assert_eq!(r.history[0].monitor_accuracy, 1.0);
    assert_eq!(r.epochs_ran, 2);
    assert_eq!(r.best_epoch, 1);
}

#[test]
fn stopping_rule_replays_from_history() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 3,
        samples_per_subject: 20,
        d_emb: 8,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let (train, eval) = split_by_subject(&ds, 2).unwrap();
    for patience in [1, 2, 4] {
        let cfg = TrainConfig { patience, ..quick(9, 60) };
        let r = train_fold(&train, &eval, small_dims(8), Variant::Dsid, &ObjectiveConfig::default(), &cfg)
            .unwrap()
            .result;
        let mut best = f64::NEG_INFINITY;
        let mut best_epoch = 0;
        let mut since = 0;
        let mut stop = cfg.max_epochs;
        for h in &r.history {
            if h.monitor_accuracy > best {
                best = h.monitor_accuracy;
                best_epoch = h.epoch;
                since = 0;
            } else {
                since += 1;
                if since >= patience {
                    stop = h.epoch;
                    break;
                }
            }
        }
        assert_eq!(r.epochs_ran, stop, "patience {patience}");
        assert_eq!(r.best_epoch, best_epoch);
        assert_eq!(r.best_monitor_accuracy, best);
    }
}

#[test]
fn restored_checkpoint_reproduces_best_monitor_accuracy() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 4,
        samples_per_subject: 15,
        d_emb: 8,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let (train, eval) = split_by_subject(&ds, 1).unwrap();
    let trained = train_fold(&train, &eval, small_dims(8), Variant::Dsid, &ObjectiveConfig::default(), &quick(5, 40)).unwrap();
    let r = &trained.result;
    let max = r.history.iter().map(|h| h.monitor_accuracy).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.best_monitor_accuracy, max);
    assert_eq!(r.history[r.best_epoch - 1].monitor_accuracy, max);
    assert!(r.history[..r.best_epoch - 1].iter().all(|h| h.monitor_accuracy < max));
    // the held-out fold is the monitor, so its TER accuracy is the best observed
    assert_eq!(r.ter.as_ref().unwrap().score.accuracy, max);
    assert_eq!(r.ter.as_ref().unwrap().predictions.len(), eval.len());
    assert_eq!(r.der.as_ref().unwrap().predictions.len(), eval.len());
}

#[test]
fn zero_weights_reduce_dsid_to_single_stream() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 3,
        samples_per_subject: 30,
        d_emb: 10,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let (train, eval) = split_by_subject(&ds, 3).unwrap();
    let obj = ObjectiveConfig {
        alpha: 0.0,
        beta: 0.0,
        ..Default::default()
    };
    let cfg = TrainConfig { patience: 200, ..quick(11, 15) };
    let dsid = train_fold(&train, &eval, small_dims(10), Variant::Dsid, &obj, &cfg).unwrap().result;
    let single = train_fold(&train, &eval, small_dims(10), Variant::SingleStream(Task::Ter), &obj, &cfg)
        .unwrap()
        .result;
    assert_eq!(dsid.history.len(), single.history.len());
    for (a, b) in dsid.history.iter().zip(&single.history) {
        assert_eq!(a.true_ce.to_bits(), b.true_ce.to_bits(), "epoch {}", a.epoch);
        assert_eq!(a.monitor_accuracy, b.monitor_accuracy);
    }
    assert_eq!(dsid.ter.unwrap().predictions, single.ter.unwrap().predictions);
}

#[test]
fn separable_toy_data_is_learned() {
    let ds = separable(4, 16, 6, 3);
    let (train, eval) = split_by_subject(&ds, 4).unwrap();
    for variant in [Variant::SingleStream(Task::Ter), Variant::Dsid] {
        let cfg = TrainConfig {
            batch_size: 32,
            ..TrainConfig::default()
        };
        let r = train_fold(&train, &eval, ModelDims::with_default_hidden(6), variant, &ObjectiveConfig::default(), &cfg)
            .unwrap()
            .result;
        assert_eq!(r.best_monitor_accuracy, 1.0, "{variant:?}");
        assert!(r.epochs_ran <= 200);
    }
}

#[test]
fn training_is_deterministic() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 3,
        samples_per_subject: 12,
        d_emb: 8,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let (train, eval) = split_by_subject(&ds, 1).unwrap();
    let obj = ObjectiveConfig {
        hsic_mode: HsicMode::ClassicalBiased,
        ..Default::default()
    };
    let a = train_fold(&train, &eval, small_dims(8), Variant::Dsid, &obj, &quick(2, 12)).unwrap();
    let b = train_fold(&train, &eval, small_dims(8), Variant::Dsid, &obj, &quick(2, 12)).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(encode_model(&a.model), encode_model(&b.model));
    let c = train_fold(&train, &eval, small_dims(8), Variant::Dsid, &obj, &quick(3, 12)).unwrap();
    assert_ne!(encode_model(&a.model), encode_model(&c.model));
}

#[test]
fn fold_preconditions_are_enforced() {
    let ds = separable(3, 6, 4, 1);
    let (train, eval) = split_by_subject(&ds, 1).unwrap();
    let obj = ObjectiveConfig::default();
    let v = Variant::Dsid;
    let dims = small_dims(4);
    let empty = Dataset { d_emb: 4, records: vec![] };
    assert!(matches!(
        train_fold(&empty, &eval, dims, v, &obj, &quick(1, 1)),
        Err(DsidError::EmptyTrainSet)
    ));
    assert!(matches!(
        train_fold(&train, &empty, dims, v, &obj, &quick(1, 1)),
        Err(DsidError::EmptyEvalSet)
    ));
    assert!(matches!(
        train_fold(&ds, &eval, dims, v, &obj, &quick(1, 1)),
        Err(DsidError::SubjectLeak(1))
    ));
    assert!(matches!(
        train_fold(&train, &eval, small_dims(5), v, &obj, &quick(1, 1)),
        Err(DsidError::ShapeMismatch { .. })
    ));
    let one = train.subset(&[0]);
    assert!(matches!(
        train_fold(&one, &eval, dims, v, &obj, &quick(1, 1)),
        Err(DsidError::TrainSetTooSmall)
    ));
}

#[test]
fn inner_holdout_partitions_each_subject() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 5,
        samples_per_subject: 23,
        d_emb: 4,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let (fit, monitor) = inner_holdout_split(&ds, 7).unwrap();
    assert_eq!(fit.len() + monitor.len(), ds.len());
    for s in ds.subjects() {
        let n = monitor.records.iter().filter(|r| r.subject_id == s).count();
        assert_eq!(n, 4);
    }
    let again = inner_holdout_split(&ds, 7).unwrap();
    assert_eq!(again.1, monitor);

    let ds = separable(3, 12, 4, 2);
    let (train, eval) = split_by_subject(&ds, 3).unwrap();
    let cfg = TrainConfig {
        monitor: Monitor::InnerHoldout,
        ..quick(4, 10)
    };
    let r = train_fold(&train, &eval, small_dims(4), Variant::Dsid, &ObjectiveConfig::default(), &cfg).unwrap();
    assert_eq!(r.result.ter.unwrap().predictions.len(), eval.len());
}

fn tiny_loso(ds: &Dataset, jobs: usize) -> LosoRun {
    let cfg = TrainConfig { jobs, ..quick(100, 3) };
    run_loso(ds, small_dims(ds.d_emb), Variant::Dsid, &ObjectiveConfig::default(), &cfg).unwrap()
}

#[test]
fn loso_runs_one_fold_per_subject_in_ascending_order() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 22,
        samples_per_subject: 6,
        d_emb: 6,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let run = tiny_loso(&ds, 1);
    assert_eq!(run.folds.len(), 22);
    assert_eq!(run.models.len(), 22);
    let ids: Vec<u16> = run.folds.iter().map(|f| f.subject_id).collect();
    assert_eq!(ids, (1..=22).collect::<Vec<u16>>());

    for task in [Task::Ter, Task::Der] {
        let pooled = run.pooled(task).unwrap();
        let correct: u64 = run.folds.iter().map(|f| f.outcome(task).unwrap().score.confusion.trace()).sum();
        let count: usize = run.folds.iter().map(|f| f.outcome(task).unwrap().predictions.len()).sum();
        assert_eq!(count, ds.len());
        assert_eq!(pooled.micro.accuracy, correct as f64 / count as f64);
        assert_eq!(pooled.folds, 22);
    }
}

#[test]
fn loso_is_independent_of_concurrency() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 5,
        samples_per_subject: 8,
        d_emb: 6,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let serial = tiny_loso(&ds, 1);
    let parallel = tiny_loso(&ds, 3);
    assert_eq!(serial.folds, parallel.folds);
    assert_eq!(serial.ter, parallel.ter);
    assert_eq!(serial.der, parallel.der);
    for (a, b) in serial.models.iter().zip(&parallel.models) {
        assert_eq!(encode_model(a), encode_model(b));
    }
}

#[test]
fn fold_seed_is_base_plus_subject() {
    let ds = synth_generate(&SynthConfig {
        n_subjects: 3,
        samples_per_subject: 8,
        d_emb: 6,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let run = tiny_loso(&ds, 1);
    let (train, eval) = split_by_subject(&ds, 2).unwrap();
    let alone = train_fold(&train, &eval, small_dims(6), Variant::Dsid, &ObjectiveConfig::default(), &quick(102, 3)).unwrap();
    assert_eq!(run.folds[1], alone.result);
}

#[test]
fn single_subject_loso_is_rejected() {
    let ds = separable(1, 8, 4, 1);
    let cfg = quick(1, 1);
    let err = run_loso(&ds, small_dims(4), Variant::Dsid, &ObjectiveConfig::default(), &cfg).unwrap_err();
    assert!(matches!(err, DsidError::TooFewSubjects(1)));
}

fn random_dataset() -> impl Strategy<Value = Dataset> {
    proptest::collection::vec((1u16..9, 0u8..6, 1u8..6), 1..60).prop_map(|rows| {
        let records = rows
            .into_iter()
            .map(|(s, t, shift)| record(s, t, (t + shift) % 6, vec![s as f32, t as f32]))
            .collect();
        Dataset::new(2, records).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loso_splits_partition_the_dataset(ds in random_dataset()) {
        let mut seen = vec![0usize; ds.len()];
        let mut tests_total = 0;
        for s in ds.subjects() {
            let (train, test) = split_by_subject(&ds, s).unwrap();
            prop_assert_eq!(train.len() + test.len(), ds.len());
            prop_assert!(test.records.iter().all(|r| r.subject_id == s));
            prop_assert!(train.records.iter().all(|r| r.subject_id != s));
            tests_total += test.len();
            for (i, r) in ds.records.iter().enumerate() {
                if r.subject_id == s {
                    seen[i] += 1;
                }
            }
        }
        prop_assert_eq!(tests_total, ds.len());
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
