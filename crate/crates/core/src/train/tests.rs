use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{CpcLabel, DomainLabel, SentiLabel};
use crate::encode::{DependencyGraph, LabelVocab, TokenSpan};
use crate::model::{ModelConfig, SentenceInput};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d0: 4,
        d_g: 4,
        d_l: 4,
        d_s: 4,
        sgcn_hidden: vec![4],
        analyzer_hidden: 2,
        window: 1,
        entity_proj: 6,
        head_hidden: 4,
        n_labels: 4,
        ..ModelConfig::default()
    }
}

fn sentence(id: String, rng: &mut ChaCha8Rng, signal: f32) -> SentenceInput {
    let n = 5;
    let g = DependencyGraph::chain(n);
    let mut vocab = LabelVocab::new();
    vocab.observe(&g);
    let mut v = Array2::from_shape_simple_fn((n, 4), || rng.gen_range(-0.3f32..0.3));
    v[[2, 0]] += signal;
    SentenceInput {
        id,
        vectors: v,
        edges: g.index(&vocab),
        spans: vec![TokenSpan::new(0, 0), TokenSpan::new(4, 4)],
    }
}

/// The middle token carries the label: +2 Better, -2 Worse, 0 None.
fn cpc_set(n: usize, seed: u64) -> Vec<CpcExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (label, s) = match i % 3 {
                0 => (CpcLabel::Better, 2.0),
                1 => (CpcLabel::Worse, -2.0),
                _ => (CpcLabel::None, 0.0),
            };
            CpcExample {
                input: sentence(format!("c{i}"), &mut rng, s),
                label,
            }
        })
        .collect()
}

fn absa_set(n: usize, seed: u64) -> Vec<AbsaExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (sentiment, s) = match i % 3 {
                0 => (SentiLabel::Pos, 2.0),
                1 => (SentiLabel::Neg, -2.0),
                _ => (SentiLabel::Neu, 0.0),
            };
            let mut input = sentence(format!("a{i}"), &mut rng, s);
            input.spans.truncate(1);
            AbsaExample {
                input,
                sentiment,
                domain: DomainLabel::AbsaDomain,
            }
        })
        .collect()
}

fn quick(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        epochs,
        schedule: BatchSchedule {
            ratio_cpc: 1,
            ratio_absa: 1,
            batch_size: batch,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn select_best_examples() {
    assert_eq!(select_best(&[0.80, 0.85, 0.83]).unwrap(), 2);
    assert_eq!(select_best(&[0.5]).unwrap(), 1);
    assert_eq!(select_best(&[0.7, 0.7, 0.6]).unwrap(), 1);
    assert!(select_best(&[]).is_err());
}

#[test]
fn lr_trace_follows_step_decay() {
    let cpc = cpc_set(6, 1);
    let absa = absa_set(6, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let cfg = TrainConfig {
        epochs: 7,
        schedule: BatchSchedule {
            batch_size: 3,
            ..BatchSchedule::default()
        },
        ..TrainConfig::default()
    };
    let mut m = SaeconModel::<f32>::new(tiny_config(), 3).unwrap();
    let out = train(&mut m, &data, &cfg).unwrap();
    let lrs: Vec<f64> = out.log.iter().filter(|r| r.task == "CPC").map(|r| r.lr).collect();
    let want = [5e-4, 5e-4, 5e-4, 4e-4, 4e-4, 4e-4, 3.2e-4];
    assert_eq!(lrs.len(), want.len());
    for (a, b) in lrs.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert_eq!(out.log.len(), 14, "one CPC and one ABSA row per epoch");
}

#[test]
fn task_trace_alternates_one_to_one() {
    let cpc = cpc_set(6, 1);
    let absa = absa_set(9, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let mut m = SaeconModel::<f32>::new(tiny_config(), 3).unwrap();
    let out = train(&mut m, &data, &quick(2, 3)).unwrap();
    // The run stops on the CPC batch that closes epoch 2.
    assert_eq!(out.tasks.len(), 7);
    for (k, t) in out.tasks.iter().enumerate() {
        assert_eq!(*t, if k % 2 == 0 { Task::Cpc } else { Task::Absa });
    }
}

#[test]
fn stop_at_ends_the_run_early() {
    let cpc = cpc_set(6, 1);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &[],
        cpc_dev: &cpc,
    };
    let mut m = SaeconModel::<f32>::new(tiny_config(), 3).unwrap();
    let cfg = TrainConfig {
        stop_at: Some(0.0),
        ..quick(5, 3)
    };
    let out = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(out.best_epoch, 1);
    assert!(out.log.iter().all(|r| r.epoch == 1));
}

#[test]
fn without_analyzer_only_cpc_steps_run() {
    let cpc = cpc_set(6, 1);
    let absa = absa_set(6, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let cfg = ModelConfig {
        use_analyzer: false,
        ..tiny_config()
    };
    let mut m = SaeconModel::<f32>::new(cfg, 3).unwrap();
    let out = train(&mut m, &data, &quick(2, 3)).unwrap();
    assert!(out.tasks.iter().all(|t| *t == Task::Cpc));
    assert_eq!(out.tasks.len(), 4);
    assert!(out.log.iter().all(|r| r.task == "CPC" && r.loss_d.is_none()));
}

#[test]
fn runs_are_deterministic() {
    let cpc = cpc_set(9, 1);
    let absa = absa_set(9, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let run = || {
        let mut m = SaeconModel::<f32>::new(tiny_config(), 11).unwrap();
        let out = train(&mut m, &data, &quick(3, 3)).unwrap();
        (out.batch_losses, out.log, m.store)
    };
    let (a, la, sa) = run();
    let (b, lb, sb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    for ((_, p), (_, q)) in sa.iter().zip(sb.iter()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn overfits_a_tiny_set() {
    let cpc = cpc_set(12, 5);
    let absa = absa_set(12, 6);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let mut cfg = quick(40, 4);
    cfg.class_weights = crate::corpus::ClassWeights::uniform();
    let mut m = SaeconModel::<f32>::new(tiny_config(), 7).unwrap();
    let out = train(&mut m, &data, &cfg).unwrap();
    assert!(out.best_score > 0.99, "train micro-F1 {}", out.best_score);
    let first = out.log.first().unwrap().loss_c.unwrap();
    let last = out.log.iter().rev().find(|r| r.task == "CPC").unwrap().loss_c.unwrap();
    assert!(last < first * 0.5, "{first} -> {last}");
}

#[test]
fn best_parameters_are_restored() {
    let cpc = cpc_set(9, 1);
    let dev = cpc_set(6, 9);
    let absa = absa_set(9, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &dev,
    };
    let mut m = SaeconModel::<f32>::new(tiny_config(), 4).unwrap();
    let out = train(&mut m, &data, &quick(6, 3)).unwrap();
    let scores: Vec<f64> = out.log.iter().filter(|r| r.task == "CPC").map(|r| r.dev_micro_f1).collect();
    assert_eq!(select_best(&scores).unwrap(), out.best_epoch);
    let again = evaluate_cpc(&m, &dev).unwrap();
    assert_eq!(again, out.best_report);
}

#[test]
fn zero_alpha_and_lambda_d_match_a_build_without_the_reversal() {
    let cpc = cpc_set(9, 1);
    let absa = absa_set(9, 2);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &absa,
        cpc_dev: &cpc,
    };
    let mut cfg = quick(3, 3);
    cfg.loss.lambda_d = 0.0;
    let with = ModelConfig {
        grl_alpha: 0.0,
        ..tiny_config()
    };
    let without = ModelConfig {
        use_grl: false,
        ..tiny_config()
    };
    let mut a = SaeconModel::<f32>::new(with, 5).unwrap();
    let mut b = SaeconModel::<f32>::new(without, 5).unwrap();
    // L2 over the extra classifier weights would shift the total, not the
    // shared gradients; drop it to compare totals too.
    cfg.loss.lambda = 0.0;
    let oa = train(&mut a, &data, &cfg).unwrap();
    let ob = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(oa.batch_losses, ob.batch_losses);
    for (_, p) in b.store.iter() {
        let q = a.store.value(a.store.find(&p.name).unwrap());
        assert_eq!(&p.value, q, "{}", p.name);
    }
}

#[test]
fn non_finite_parameters_abort_training() {
    let cpc = cpc_set(6, 1);
    let data = TrainData {
        cpc_train: &cpc,
        absa_train: &[],
        cpc_dev: &cpc,
    };
    let mut m = SaeconModel::<f32>::new(tiny_config(), 3).unwrap();
    let id = m.store.find("cpc_head.weight").or_else(|| m.store.ids().last()).unwrap();
    m.store.get_mut(id).value[[0, 0]] = f32::NAN;
    let err = train(&mut m, &data, &quick(1, 3)).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    assert!(err.to_string().contains("epoch 1 batch 0"), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = TrainConfig::default();
    cfg.lr = 0.0;
    assert!(cfg.validate().is_err());
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
    let mut cfg = TrainConfig::default();
    cfg.loss.lambda_d = -1.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn metric_log_round_trips() {
    let rows = vec![
        MetricRow {
            epoch: 1,
            task: "CPC".into(),
            lr: 5e-4,
            loss_c: Some(1.25),
            loss_s: None,
            loss_d: Some(0.5),
            dev_micro_f1: 0.75,
            dev_f1_b: 0.5,
            dev_f1_w: 0.25,
            dev_f1_n: 0.875,
        },
        MetricRow {
            epoch: 1,
            task: "ABSA".into(),
            lr: 5e-4,
            loss_c: None,
            loss_s: Some(0.75),
            loss_d: None,
            dev_micro_f1: 0.75,
            dev_f1_b: 0.5,
            dev_f1_w: 0.25,
            dev_f1_n: 0.875,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metric_log(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("epoch,task,lr,loss_c,loss_s,loss_d,dev_micro_f1,dev_f1_b,dev_f1_w,dev_f1_n"));
    assert_eq!(read_metric_log(&path).unwrap(), rows);
}

mod checkpoints {
    use super::*;
    use crate::train::checkpoint::{read_manifest, MANIFEST, TENSORS};

    fn saved() -> (tempfile::TempDir, SaeconModel<f32>) {
        let mut m = SaeconModel::<f32>::new(tiny_config(), 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for id in m.store.ids().collect::<Vec<_>>() {
            m.store.get_mut(id).value.mapv_inplace(|_| rng.gen_range(-1.0f32..1.0));
        }
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = Manifest::new(&m, LabelVocab::new());
        manifest.epoch = 4;
        manifest.dev_metric = Some(0.5);
        manifest.train = Some(TrainConfig::default());
        save_checkpoint(&m, &manifest, dir.path()).unwrap();
        (dir, m)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (dir, m) = saved();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(manifest.epoch, 4);
        assert_eq!(manifest.train, Some(TrainConfig::default()));
        for ((_, p), (_, q)) in m.store.iter().zip(back.store.iter()) {
            assert_eq!(p.name, q.name);
            let a: Vec<u32> = p.value.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = q.value.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        let x = cpc_set(1, 3).remove(0);
        assert_eq!(m.cpc_forward(&x.input).unwrap(), back.cpc_forward(&x.input).unwrap());
    }

    #[test]
    fn fresh_manifest_loads_back() {
        let m = SaeconModel::<f32>::new(tiny_config(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&m, &Manifest::new(&m, LabelVocab::new()), dir.path()).unwrap();
        let (_, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.dev_metric, None);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let (dir, _) = saved();
        let path = dir.path().join(TENSORS);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let Err(err) = load_checkpoint(dir.path()) else { panic!("loaded") };
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn shape_mismatch_names_the_first_divergence() {
        let (dir, _) = saved();
        let mut manifest = read_manifest(dir.path()).unwrap();
        manifest.tensors[2].shape[0] += 1;
        manifest.tensors[5].name = "other".into();
        std::fs::write(dir.path().join(MANIFEST), serde_json::to_string(&manifest).unwrap()).unwrap();
        let Err(err) = load_checkpoint(dir.path()) else { panic!("loaded") };
        let err = err.to_string();
        assert!(err.contains("tensor 2"), "{err}");
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let (dir, _) = saved();
        let mut manifest = read_manifest(dir.path()).unwrap();
        manifest.model.d_g = 6;
        std::fs::write(dir.path().join(MANIFEST), serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
