//! Trains on a generated comparative corpus and reports held-out F1.
//!
//! cargo run --release --example synthetic_end_to_end -- [template|distance] [ablation] [epochs] [width] [seed]
//!
//! `ablation` is one of full, -bilstm, -sgcn, -grl, -analyzer.

use std::time::Instant;

use saecon::eval::evaluate_cpc;
use saecon::features::{Featurizer, VectorSource};
use saecon::model::{Ablation, ModelConfig, SaeconModel};
use saecon::synth::{distance_corpus, template_corpus, SynthOptions};
use saecon::train::{train, TrainConfig, TrainData};

fn main() -> saecon::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant = args.first().map(String::as_str).unwrap_or("template");
    let ablation: Ablation = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(Ablation::Full);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let width: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(7);

    let opts = SynthOptions {
        seed,
        ..SynthOptions::default()
    };
    let corpus = match variant {
        "distance" => distance_corpus(&opts)?,
        _ => template_corpus(&opts)?,
    };
    let mut feat = Featurizer::new(VectorSource::Static(corpus.embeddings)).with_parses(corpus.parses);
    let n = corpus.cpc.len();
    let (train_end, dev_end) = (n * 7 / 10, n * 8 / 10);
    let train_set = feat.cpc_all(&corpus.cpc[..train_end], true)?;
    let dev = feat.cpc_all(&corpus.cpc[train_end..dev_end], false)?;
    let test = feat.cpc_all(&corpus.cpc[dev_end..], false)?;
    let absa = feat.absa_all(&corpus.absa, true)?;

    let mut config = ModelConfig {
        d0: opts.dim,
        sgcn_hidden: vec![width],
        n_labels: feat.vocab.len(),
        ..ModelConfig::default().with_feature_dim(width)
    };
    ablation.apply(&mut config);
    let mut model = SaeconModel::<f32>::new(config, seed)?;
    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(
        &mut model,
        &TrainData {
            cpc_train: &train_set,
            absa_train: &absa,
            cpc_dev: &dev,
        },
        &cfg,
    )?;
    let report = evaluate_cpc(&model, &test)?;
    println!(
        "{variant} {}: best epoch {} dev {:.4} test micro-F1 {:.4} in {:.1}s",
        ablation.as_str(),
        out.best_epoch,
        out.best_score,
        report.micro_f1,
        start.elapsed().as_secs_f64()
    );
    print!("{}", report.table());
    Ok(())
}
