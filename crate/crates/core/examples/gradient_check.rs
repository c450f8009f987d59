//! Central-difference gradient checks of the main building blocks in f64.
//!
//! cargo run --release --example gradient_check -- [epsilon] [tolerance]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saecon::context::{Aggregation, SgcnLayer};
use saecon::encode::{DependencyGraph, LabelVocab, RawEdge, TokenSpan};
use saecon::nn::{grad_check, BiLstm, GradCheckReport, ParamStore};
use saecon::senti::{DomainClassifier, SentimentAnalyzer};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let eps = args.first().copied().unwrap_or(1e-3);
    let tol = args.get(1).copied().unwrap_or(1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rand = |r, c| Array2::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0));
    let mut reports: Vec<(&str, GradCheckReport)> = Vec::new();

    let mut store = ParamStore::<f64>::new(1);
    let bi = BiLstm::new(&mut store, "bi", 3, 4);
    let x = rand(5, 3);
    reports.push((
        "bilstm",
        grad_check(&mut store, eps, tol, 500, |t| {
            let v = t.constant(x.clone());
            let (f, b) = bi.forward(t, v);
            let cat = t.concat_cols(&[f, b]);
            t.sum_squares(cat)
        }),
    ));

    let raw = [
        RawEdge { head: 1, dependent: 0, deprel: "nsubj".into() },
        RawEdge { head: 1, dependent: 2, deprel: "obj".into() },
        RawEdge { head: 2, dependent: 3, deprel: "amod".into() },
    ];
    let g = DependencyGraph::from_raw(4, &raw).expect("valid arcs");
    let mut vocab = LabelVocab::new();
    vocab.observe(&g);
    let edges = g.index(&vocab);
    let mut store = ParamStore::<f64>::new(2);
    let layer = SgcnLayer::new(&mut store, "l", 3, 4, vocab.len(), Aggregation::Sum, true, true);
    let h = rand(4, 3);
    reports.push((
        "gated sgcn layer",
        grad_check(&mut store, eps, tol, 500, |t| {
            let v = t.constant(h.clone());
            let y = layer.forward(t, v, &edges);
            t.sum_squares(y)
        }),
    ));

    let mut store = ParamStore::<f64>::new(3);
    let analyzer = SentimentAnalyzer::new(&mut store, "a", 3, 2, 4, 1);
    let s0 = rand(6, 3);
    reports.push((
        "sentiment analyzer",
        grad_check(&mut store, eps, tol, 500, |t| {
            let v = t.constant(s0.clone());
            let hs = analyzer.analyze(t, v, None, &[TokenSpan::new(0, 1), TokenSpan::new(4, 4)]).expect("spans");
            let cat = t.concat_cols(&hs);
            t.sum_squares(cat)
        }),
    ));

    let mut store = ParamStore::<f64>::new(4);
    let dc = DomainClassifier::new(&mut store, "dc", 4, 3);
    let v0 = rand(1, 4);
    reports.push((
        "domain classifier",
        grad_check(&mut store, eps, tol, 500, |t| {
            let v = t.constant(v0.clone());
            let z = dc.logits(t, v, 1.0);
            t.softmax_cross_entropy(z, 1, 1.0)
        }),
    ));

    for (name, r) in &reports {
        println!("{name:<20} max rel err {:.2e}  {}", r.max_rel_error(), if r.pass { "ok" } else { "FAIL" });
    }
}
