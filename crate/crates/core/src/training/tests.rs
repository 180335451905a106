use super::*;
use crate::catalog::N_CHANNELS;
use crate::featurize::{GridStage, HourlyGrid};
use crate::ids::{NoteId, SubjectId};
use crate::ingest::{CareUnit, Gender, OutcomeEvent, OutcomeKind, StayMeta};
use crate::model::{Mode, ModelConfig};
use crate::numkernel::TrainingState;
use crate::sampler::{NoteEmbedding, Split, StayData};
use crate::time::Timestamp;

const DIM: usize = 4;

/// Stays of 30 hours; odd stays are ventilated at hour 20 and show a raised
/// first channel from hour 8 onwards.
fn toy_dataset(n: u64) -> Dataset {
    let stays = (0..n)
        .map(|i| {
            let positive = i % 2 == 1;
            let meta = StayMeta {
                stay_id: StayId(i + 1),
                subject_id: SubjectId(i + 1),
                intime: Timestamp(0),
                outtime: Timestamp(30 * 3600),
                age: 50.0 + i as f64,
                gender: if i % 3 == 0 { Gender::F } else { Gender::M },
                death_time: None,
                care_unit: CareUnit::Medical,
            };
            let mut grid = HourlyGrid::empty(meta.stay_id, 30);
            for h in 0..30 {
                for c in 0..N_CHANNELS {
                    let k = HourlyGrid::idx(h, c);
                    grid.values[k] = if c == 0 && positive && h >= 8 { 1.5 } else { 0.1 * ((h + c) % 3) as f64 };
                    grid.mask[k] = 1;
                }
            }
            grid.stage = GridStage::Normalized;
            StayData {
                meta: meta.clone(),
                grid,
                notes: vec![NoteEmbedding {
                    note_id: NoteId(i),
                    stay_id: meta.stay_id,
                    time: Timestamp(7 * 3600),
                    vector: vec![if positive { 0.3 } else { -0.3 }; DIM],
                }],
                outcomes: if positive {
                    vec![OutcomeEvent {
                        stay_id: meta.stay_id,
                        kind: OutcomeKind::VentilationStart,
                        time: Timestamp(20 * 3600),
                    }]
                } else {
                    Vec::new()
                },
                split: Some(Split::Train),
            }
        })
        .collect();
    Dataset::build(stays, DIM).unwrap()
}

fn tiny_model(mode: Mode, seed: u64) -> Model<f32> {
    let cfg = ModelConfig {
        lstm_hidden: 4,
        lstm_layers: 1,
        text_in: DIM,
        proj_dim: 8,
        clf_hidden: 6,
        mode,
        ..ModelConfig::default()
    };
    Model::new(cfg, seed).unwrap()
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        lr: 5e-3,
        batch_size: 32,
        warmup_epochs: 1,
        max_epochs: 4,
        patience: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_history_and_loss_drops() {
    let data = toy_dataset(12);
    let val = toy_dataset(6);
    let cfg = quick_cfg();
    let run = || {
        let mut m = tiny_model(Mode::Multimodal, 1);
        let out = train(&mut m, &data, &val, &cfg, &TrainOutputs::default()).unwrap();
        (out, m.params.flatten())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(pa, pb);
    let strip = |h: &[EpochRecord]| h.iter().map(|r| (r.train_loss, r.val_auroc, r.lr)).collect::<Vec<_>>();
    assert_eq!(strip(&a.history), strip(&b.history));
    assert_eq!(a.history.len(), 4);
    assert!(a.history[3].train_loss < a.history[0].train_loss);
    let best = a.history.iter().map(|r| r.val_auroc).fold(f64::MIN, f64::max);
    assert_eq!(a.best.state.best_val_auroc, best);
}

#[test]
fn scripted_peak_at_epoch_two_stops_after_nine() {
    let data = toy_dataset(4);
    let trajectory = [0.60, 0.81, 0.80, 0.79, 0.80, 0.78, 0.77, 0.81, 0.70, 0.9, 0.9];
    let cfg = TrainConfig {
        max_epochs: 50,
        patience: 7,
        batches_per_epoch: Some(1),
        ..quick_cfg()
    };
    let mut snapshots = Vec::new();
    let mut m = tiny_model(Mode::StructuredOnly, 2);
    let out = train_with(&mut m, &data, &cfg, &TrainOutputs::default(), None, |m, epoch| {
        snapshots.push(m.params.flatten());
        Ok((trajectory[epoch - 1], 0.5))
    })
    .unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.history.len(), 9);
    assert_eq!(out.best_epoch, 2);
    assert_eq!(out.best.state.epoch, 2);
    assert_eq!(out.best.params.flatten(), snapshots[1]);
    assert_ne!(out.last.params.flatten(), snapshots[1]);
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let data = toy_dataset(8);
    let cfg = quick_cfg();
    let mut saved = None;
    let mut full = tiny_model(Mode::Multimodal, 4);
    train_with(&mut full, &data, &cfg, &TrainOutputs::default(), None, |m, epoch| {
        if epoch == 2 {
            let state = TrainingState {
                epoch: 2,
                best_val_auroc: 0.5,
                patience_counter: 0,
            };
            saved = Some(Checkpoint::new("multimodal", &m.params, state, String::new()));
        }
        Ok((0.5, 0.5))
    })
    .unwrap();
    let bytes = saved.unwrap().to_bytes();
    let ck = Checkpoint::read_from(&bytes[..]).unwrap();
    let mut resumed = tiny_model(Mode::Multimodal, 99);
    train_with(&mut resumed, &data, &cfg, &TrainOutputs::default(), Some(&ck), |_, _| Ok((0.5, 0.5))).unwrap();
    assert_eq!(resumed.params.flatten(), full.params.flatten());
    assert_eq!(resumed.params.step(), full.params.step());
}

#[test]
fn outputs_are_written_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_dataset(6);
    let outputs = TrainOutputs {
        best_checkpoint: Some(dir.path().join("best.ckpt")),
        last_checkpoint: Some(dir.path().join("last.ckpt")),
        history: Some(dir.path().join("history.csv")),
        ..TrainOutputs::default()
    };
    let cfg = TrainConfig {
        max_epochs: 2,
        ..quick_cfg()
    };
    let mut m = tiny_model(Mode::TextOnly, 5);
    let out = train(&mut m, &data, &data, &cfg, &outputs).unwrap();
    let hist = read_history(&dir.path().join("history.csv")).unwrap();
    assert_eq!(hist, out.history);
    let header = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(header.starts_with("epoch,train_loss,val_auroc,val_auprc,lr,seconds"));
    let (best, ck) = load_model(&dir.path().join("best.ckpt")).unwrap();
    assert_eq!(ck.kind, "text_only");
    assert_eq!(best.params.flatten(), out.best.params.flatten());
    assert_eq!(ck.config_value("train.seed"), Some("3"));
}

#[test]
fn non_finite_loss_names_the_batch() {
    let data = toy_dataset(4);
    let mut m = tiny_model(Mode::StructuredOnly, 6);
    let id = m.params.id("clf.2.b").unwrap();
    m.params.value_mut(id)[0] = f32::NAN;
    let err = train_with(&mut m, &data, &quick_cfg(), &TrainOutputs::default(), None, |_, _| Ok((0.5, 0.5))).unwrap_err();
    match err {
        TrainError::NonFinite { epoch, batch, indices, samples } => {
            assert_eq!((epoch, batch), (1, 0));
            assert_eq!(indices.len(), 32);
            assert_eq!(samples.len(), 32);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn capped_epochs_are_seeded_prefixes() {
    let cfg = TrainConfig {
        batch_size: 10,
        batches_per_epoch: Some(3),
        ..TrainConfig::default()
    };
    let a = epoch_order(1000, &cfg, 1);
    assert_eq!(a.len(), 30);
    assert_eq!(a, epoch_order(1000, &cfg, 1));
    assert_ne!(a, epoch_order(1000, &cfg, 2));
}

#[test]
fn config_round_trips_and_validates() {
    let mut c = TrainConfig {
        batches_per_epoch: Some(7),
        lr: 3e-4,
        ..TrainConfig::default()
    };
    let mut d = TrainConfig::default();
    for line in c.to_kv().lines() {
        let (k, v) = line.split_once('=').unwrap();
        assert!(d.set(k, v).unwrap());
    }
    assert_eq!(c, d);
    assert!(!d.set("model.lstm_hidden", "3").unwrap());
    c.alpha = 1.0;
    assert!(c.validate().is_err());
}
