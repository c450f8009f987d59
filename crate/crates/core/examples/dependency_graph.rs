//! Reads a CoNLL-U parse, builds the direction-aware dependency graph and
//! runs one syntactic GCN layer over random token vectors.
//!
//! cargo run --example dependency_graph -- [file.conllu]

use std::path::PathBuf;

use ndarray::Array2;
use saecon::context::{Aggregation, SgcnLayer};
use saecon::encode::{build_graph, load_conllu, parse_conllu, LabelVocab};
use saecon::nn::{ParamStore, Tape};

const SAMPLE: &str = "# sent_id = demo
# text = rust compiles faster than go
1\trust\t_\t_\t_\t_\t2\tnsubj\t_\t_
2\tcompiles\t_\t_\t_\t_\t0\troot\t_\t_
3\tfaster\t_\t_\t_\t_\t2\tadvmod\t_\t_
4\tthan\t_\t_\t_\t_\t5\tcase\t_\t_
5\tgo\t_\t_\t_\t_\t3\tobl\t_\t_
";

fn main() -> saecon::Result<()> {
    let parses = match std::env::args().nth(1) {
        Some(p) => load_conllu(&PathBuf::from(p))?,
        None => parse_conllu(SAMPLE, &PathBuf::from("<sample>"))?,
    };
    let parse = &parses[0];
    let mut vocab = LabelVocab::new();
    let graph = build_graph(&parse.tokens, &parse.edges, &mut vocab)?;
    println!("{} tokens, {} edges, {} edge labels", graph.n, graph.edges.len(), vocab.len());
    for e in &graph.edges {
        println!(
            "  {:>10} -> {:<10} {}:{}",
            parse.tokens.tokens[e.source],
            parse.tokens.tokens[e.target],
            e.direction,
            e.dep_type
        );
    }

    let mut store = ParamStore::<f64>::new(0);
    let layer = SgcnLayer::new(&mut store, "sgcn", 8, 4, vocab.len(), Aggregation::Sum, true, true);
    let h = Array2::from_shape_fn((graph.n, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
    let edges = graph.index(&vocab);
    let mut tape = Tape::new(&store);
    let x = tape.constant(h);
    let y = layer.forward(&mut tape, x, &edges);
    println!("layer output:\n{:.3}", tape.value(y));
    Ok(())
}
