//! Seed-averaged component ablation on the distance-stressed corpus, where
//! the entities sit far apart in the surface order but close in the parse.
//!
//! cargo run --release --example ablation_study -- [seeds] [epochs] [width]

use saecon::eval::evaluate_cpc;
use saecon::features::{Featurizer, VectorSource};
use saecon::model::{Ablation, ModelConfig, SaeconModel};
use saecon::synth::{distance_corpus, SynthOptions};
use saecon::train::{train, TrainConfig, TrainData};

fn run(seed: u64, ablation: Ablation, epochs: usize, width: usize) -> saecon::Result<f64> {
    let opts = SynthOptions {
        n: 800,
        seed,
        ..SynthOptions::default()
    };
    let corpus = distance_corpus(&opts)?;
    let mut feat = Featurizer::new(VectorSource::Static(corpus.embeddings)).with_parses(corpus.parses);
    let n = corpus.cpc.len();
    let (a, b) = (n * 7 / 10, n * 8 / 10);
    let train_set = feat.cpc_all(&corpus.cpc[..a], true)?;
    let dev = feat.cpc_all(&corpus.cpc[a..b], false)?;
    let test = feat.cpc_all(&corpus.cpc[b..], false)?;
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
    train(
        &mut model,
        &TrainData {
            cpc_train: &train_set,
            absa_train: &absa,
            cpc_dev: &dev,
        },
        &cfg,
    )?;
    Ok(evaluate_cpc(&model, &test)?.micro_f1)
}

fn main() -> saecon::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = args.first().copied().unwrap_or(4) as u64;
    let epochs = args.get(1).copied().unwrap_or(2);
    let width = args.get(2).copied().unwrap_or(64);
    println!("variant     mean   per-seed");
    for ablation in [
        Ablation::Full,
        Ablation::NoBilstm,
        Ablation::NoSgcn,
        Ablation::NoGrl,
        Ablation::NoAnalyzer,
    ] {
        let scores = (1..=seeds)
            .map(|s| run(s, ablation, epochs, width))
            .collect::<saecon::Result<Vec<f64>>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let per: Vec<String> = scores.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:<10} {mean:.4}  {}", ablation.as_str(), per.join(" "));
    }
    Ok(())
}
