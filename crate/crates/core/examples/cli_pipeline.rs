//! Drives the command-line pipeline in-process: writes a synthetic corpus,
//! then runs prepare, train, eval, predict and baseline against it.
//!
//! cargo run --release --example cli_pipeline -- [work_dir]

use std::path::PathBuf;

use clap::Parser;
use saecon::cli::{execute, Cli};
use saecon::synth::{template_corpus, SynthOptions};

fn main() -> saecon::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let work = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/pipeline".into()));
    let data = work.join("data");
    template_corpus(&SynthOptions {
        n: 400,
        dim: 32,
        ..SynthOptions::default()
    })?
    .write_to(&data)?;
    let cfg = work.join("run.cfg");
    let text = format!(
        "data.cpc = {}\ndata.absa_train = {}\ndata.embeddings = {}\ndata.parses = {}\n\
         model.dim = 32\nmodel.sgcn_hidden = 32\ntrain.epochs = 8\ntrain.lr = 0.002\n",
        data.join("cpc.jsonl").display(),
        data.join("absa.jsonl").display(),
        data.join("embeddings.txt").display(),
        data.join("parses.conllu").display(),
    );
    std::fs::write(&cfg, text).map_err(|e| saecon::Error::io(&cfg, e))?;

    let dir = |s: &str| work.join(s).display().to_string();
    let cfg = cfg.display().to_string();
    let ckpt = work.join("train/checkpoint").display().to_string();
    let input = data.join("cpc.jsonl").display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["prepare".into(), "--out".into(), dir("prepare")],
        vec!["train".into(), "--out".into(), dir("train")],
        vec!["eval".into(), "--checkpoint".into(), ckpt.clone(), "--out".into(), dir("eval")],
        vec!["predict".into(), "--checkpoint".into(), ckpt, "--input".into(), input, "--out".into(), dir("predict")],
        vec!["baseline".into(), "--out".into(), dir("baseline")],
    ];
    for step in steps {
        let mut argv = vec!["saecon".to_string(), "--config".into(), cfg.clone()];
        argv.extend(step);
        println!("$ {}", argv.join(" "));
        execute(&Cli::try_parse_from(&argv).map_err(|e| saecon::Error::Config(e.to_string()))?)?;
    }
    print!("{}", std::fs::read_to_string(work.join("eval/report.txt")).unwrap_or_default());
    Ok(())
}
