//! Trains a small model, saves it, reloads it, and prints a case study of
//! the analyzer's entity sentiments next to the comparative predictions.
//!
//! cargo run --release --example checkpoint_case_study -- [out_dir] [epochs]

use std::path::PathBuf;

use saecon::eval::{case_study, evaluate_cpc};
use saecon::features::{Featurizer, VectorSource};
use saecon::model::{ModelConfig, SaeconModel};
use saecon::synth::{template_corpus, SynthOptions};
use saecon::train::{load_checkpoint, save_checkpoint, train, Manifest, TrainConfig, TrainData};

fn main() -> saecon::Result<()> {
    env_logger::init();
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example_checkpoint".into()));
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3);

    let opts = SynthOptions {
        n: 600,
        ..SynthOptions::default()
    };
    let corpus = template_corpus(&opts)?;
    let mut feat = Featurizer::new(VectorSource::Static(corpus.embeddings)).with_parses(corpus.parses);
    let (train_part, dev_part) = corpus.cpc.split_at(480);
    let train_set = feat.cpc_all(train_part, true)?;
    let dev = feat.cpc_all(dev_part, false)?;
    let absa = feat.absa_all(&corpus.absa, true)?;

    let config = ModelConfig {
        d0: opts.dim,
        sgcn_hidden: vec![32],
        n_labels: feat.vocab.len(),
        ..ModelConfig::default().with_feature_dim(32)
    };
    let mut model = SaeconModel::<f32>::new(config, 1)?;
    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let outcome = train(
        &mut model,
        &TrainData {
            cpc_train: &train_set,
            absa_train: &absa,
            cpc_dev: &dev,
        },
        &cfg,
    )?;

    let mut manifest = Manifest::new(&model, feat.vocab.clone());
    manifest.train = Some(cfg);
    manifest.epoch = outcome.best_epoch;
    manifest.dev_metric = Some(outcome.best_score);
    let ckpt = out.join("checkpoint");
    save_checkpoint(&model, &manifest, &ckpt)?;
    let (restored, m) = load_checkpoint(&ckpt)?;
    println!(
        "saved epoch {} (dev {:.4}) to {}; reloaded dev micro-F1 {:.4}",
        m.epoch,
        m.dev_metric.unwrap_or(f64::NAN),
        ckpt.display(),
        evaluate_cpc(&restored, &dev)?.micro_f1
    );

    for row in case_study(&restored, &dev_part[..8], &dev[..8])? {
        println!("{} -> {}", row.render(), row.pred);
    }
    Ok(())
}
