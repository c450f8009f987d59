//! Trains on a two-domain corpus whose CPC side ends in a marker token, then
//! fits a linear probe on frozen analyzer outputs to recover the domain.
//! Run once with alpha 1 and once with alpha 0 to compare.
//!
//! cargo run --release --example domain_probe -- [alpha] [epochs] [width] [seed]

use saecon::eval::domain_probe_accuracy;
use saecon::features::{Featurizer, VectorSource};
use saecon::model::{ModelConfig, SaeconModel};
use saecon::synth::{two_domain_corpus, SynthOptions};
use saecon::train::{train, SelectionMetric, TrainConfig, TrainData};

fn main() -> saecon::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let alpha: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let width: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);

    let opts = SynthOptions {
        n: 1000,
        seed,
        ..SynthOptions::default()
    };
    let corpus = two_domain_corpus(&opts, "zorp")?;
    let mut feat = Featurizer::new(VectorSource::Static(corpus.embeddings)).with_parses(corpus.parses);
    let n = corpus.cpc.len();
    let (a, b) = (n * 7 / 10, n * 8 / 10);
    let cpc_train = feat.cpc_all(&corpus.cpc[..a], true)?;
    let cpc_dev = feat.cpc_all(&corpus.cpc[a..b], false)?;
    let cpc_held = feat.cpc_all(&corpus.cpc[b..], false)?;
    let absa_train = feat.absa_all(&corpus.absa[..b], true)?;
    let absa_held = feat.absa_all(&corpus.absa[b..], false)?;

    let config = ModelConfig {
        d0: opts.dim,
        sgcn_hidden: vec![width],
        n_labels: feat.vocab.len(),
        grl_alpha: alpha,
        ..ModelConfig::default().with_feature_dim(width)
    };
    let mut model = SaeconModel::<f32>::new(config, 1)?;
    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        selection: SelectionMetric::LastEpoch,
        ..TrainConfig::default()
    };
    let out = train(
        &mut model,
        &TrainData {
            cpc_train: &cpc_train,
            absa_train: &absa_train,
            cpc_dev: &cpc_dev,
        },
        &cfg,
    )?;
    for row in &out.log {
        if let Some(d) = row.loss_d {
            println!("epoch {} {:<4} domain loss {d:.4}", row.epoch, row.task);
        }
    }
    let acc = domain_probe_accuracy(&model, &cpc_held, &absa_held)?;
    println!("alpha {alpha}: dev micro-F1 {:.4}, probe domain accuracy {acc:.4}", out.best_score);
    Ok(())
}
