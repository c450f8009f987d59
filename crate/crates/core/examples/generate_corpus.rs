//! Writes a synthetic corpus in the file formats the `saecon` tool reads:
//! `cpc.jsonl`, `absa.jsonl`, `embeddings.txt`, `parses.conllu`.
//!
//! cargo run --example generate_corpus -- [template|distance|two_domain] [dir] [n] [seed]
//!
//! The default directory `data/` matches the built-in data paths, so
//! `saecon train` works right after.

use std::path::PathBuf;

use saecon::synth::{distance_corpus, template_corpus, two_domain_corpus, SynthOptions};

fn main() -> saecon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("template");
    let dir = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("data"));
    let n = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(7);
    let opts = SynthOptions {
        n,
        seed,
        ..SynthOptions::default()
    };
    let corpus = match kind {
        "template" => template_corpus(&opts)?,
        "distance" => distance_corpus(&opts)?,
        "two_domain" => two_domain_corpus(&opts, "zorp")?,
        other => return Err(saecon::Error::Config(format!("unknown corpus kind {other:?}"))),
    };
    corpus.write_to(&dir)?;
    let (b, w, none) = saecon::corpus::count_triple(&corpus.cpc);
    println!(
        "{kind}: {} CPC ({b} better, {w} worse, {none} none), {} ABSA, {} word vectors -> {}",
        corpus.cpc.len(),
        corpus.absa.len(),
        corpus.embeddings.len(),
        dir.display()
    );
    Ok(())
}
