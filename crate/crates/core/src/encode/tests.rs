use std::io::Write;
use std::path::Path;

use ndarray::{array, Array2};
use proptest::prelude::*;

use super::*;
use crate::corpus::EntitySpan;

fn span_of(sentence: &str, text: &str) -> EntitySpan {
    let byte = sentence.find(text).unwrap();
    let start = sentence[..byte].chars().count();
    EntitySpan {
        text: text.into(),
        start,
        end: start + text.chars().count(),
    }
}

fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn tokenizer_splits_punctuation_and_records_spans() {
    let t = tokenize("Python's fine, really.");
    assert_eq!(t.tokens, ["Python", "'", "s", "fine", ",", "really", "."]);
    assert_eq!(t.char_spans[0], (0, 6));
    assert_eq!(t.char_spans[3], (9, 13));
    for w in t.char_spans.windows(2) {
        assert!(w[0].1 <= w[1].0);
    }
}

#[test]
fn multi_token_entity_span() {
    let s = "And from my experience the ticks are much worse in Mid Missouri than they are in \
             South Georgia which is much warmer year round.";
    let toks = tokenize(s);
    let spans = resolve_entities("s2", &toks, &[span_of(s, "Mid Missouri"), span_of(s, "South Georgia")]).unwrap();
    assert_eq!(spans[0], TokenSpan::new(10, 11));
    assert_eq!(spans[1], TokenSpan::new(16, 17));
    assert_eq!(toks.tokens[16], "South");
    assert_eq!(toks.tokens[17], "Georgia");
}

#[test]
fn entity_partially_covering_a_token_takes_the_whole_token() {
    let toks = tokenize("the USB-C port");
    let span = EntitySpan {
        text: "US".into(),
        start: 4,
        end: 6,
    };
    assert_eq!(toks.token_range(&span), Some((1, 1)));
}

#[test]
fn entity_outside_all_tokens_names_the_instance() {
    let toks = tokenize("a b");
    let span = EntitySpan {
        text: " ".into(),
        start: 1,
        end: 2,
    };
    let err = resolve_entities("inst-7", &toks, &[span]).unwrap_err();
    assert!(err.to_string().contains("inst-7"), "{err}");
}

fn table() -> EmbeddingTable {
    EmbeddingTable::from_pairs(
        3,
        vec![
            ("python".to_string(), vec![1.0, 2.0, 3.0]),
            ("is".to_string(), vec![0.5, 0.25, -1.0]),
            ("fast".to_string(), vec![0.1, 0.2, 0.3]),
        ],
    )
    .unwrap()
}

#[test]
fn embedding_rows_match_the_table_exactly() {
    let t = table();
    let toks = tokenize("Python is fast");
    let e = embed_sentence("x", &toks, &t, &[]).unwrap();
    assert_eq!(e.vectors.dim(), (3, 3));
    for (i, tok) in ["python", "is", "fast"].iter().enumerate() {
        let row = t.get(tok).unwrap();
        for (a, b) in e.vectors.row(i).iter().zip(row.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    assert_eq!(e.oov, [false, false, false]);
}

#[test]
fn oov_token_is_zero_row_with_flag() {
    let e = embed_sentence("x", &tokenize("zyzzyva"), &table(), &[]).unwrap();
    assert_eq!(e.vectors, Array2::<f32>::zeros((1, 3)));
    assert_eq!(e.oov, [true]);
    assert_eq!(table().lookup("nope"), (vec![0.0; 3], true));
}

#[test]
fn two_line_embedding_file() {
    let f = write_tmp("Better 0.1 0.2\nworse -0.3 0.4\n", ".txt");
    let t = load_static_embeddings(f.path()).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t.dim(), 2);
    assert_eq!(t.get("BETTER").unwrap().to_vec(), vec![0.1f32, 0.2]);
}

#[test]
fn embedding_header_line_is_skipped() {
    let f = write_tmp("2 2\na 1 2\nb 3 4\n", ".txt");
    assert_eq!(load_static_embeddings(f.path()).unwrap().len(), 2);
}

#[test]
fn ragged_embedding_row_reports_line() {
    let f = write_tmp("a 1 2 3\nb 1 2\n", ".txt");
    let err = load_static_embeddings(f.path()).unwrap_err();
    match err {
        crate::Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn pooling_means_pieces() {
    let pieces = array![[9.0f32, 9.0], [1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [9.0, 9.0]];
    let align = [None, Some(0), Some(0), Some(1), None];
    let words = pool_wordpieces(&pieces, &align, 2).unwrap();
    assert_eq!(words, array![[2.0f32, 3.0], [5.0, 6.0]]);
}

#[test]
fn word_without_pieces_is_an_error() {
    let pieces = array![[1.0f32], [2.0]];
    assert!(pool_wordpieces(&pieces, &[Some(0), Some(0)], 2).is_err());
}

#[test]
fn conllu_two_tokens_one_arc() {
    let text = "# sent_id = s1\n# text = Python rocks\n\
                1\tPython\t_\tPROPN\t_\t_\t2\tnsubj\t_\t_\n\
                2\trocks\t_\tVERB\t_\t_\t0\troot\t_\t_\n";
    let parsed = parse_conllu(text, Path::new("t.conllu")).unwrap();
    assert_eq!(parsed.len(), 1);
    let s = &parsed[0];
    assert_eq!(s.sent_id.as_deref(), Some("s1"));
    assert_eq!(s.tokens.tokens, ["Python", "rocks"]);
    assert_eq!(s.tokens.char_spans, [(0, 6), (7, 12)]);
    assert_eq!(
        s.edges,
        [RawEdge {
            head: 1,
            dependent: 0,
            deprel: "nsubj".into()
        }]
    );
}

#[test]
fn conllu_root_only_and_multiple_blocks() {
    let text = "1\tHi\t_\t_\t_\t_\t0\troot\t_\t_\n\n\
                1\tA\t_\t_\t_\t_\t0\troot\t_\t_\n\
                1-2\tAB\t_\t_\t_\t_\t_\t_\t_\t_\n\
                2\tB\t_\t_\t_\t_\t1\tdep\t_\t_\n\n\n\
                1\tC\t_\t_\t_\t_\t0\troot\t_\t_\n";
    let f = write_tmp(text, ".conllu");
    let parsed = load_conllu(f.path()).unwrap();
    assert_eq!(parsed.len(), 3);
    assert!(parsed[0].edges.is_empty());
    assert_eq!(parsed[1].tokens.len(), 2);
    assert_eq!(parsed[1].edges.len(), 1);
}

#[test]
fn conllu_bad_head_reports_line() {
    let text = "1\tA\t_\t_\t_\t_\t0\troot\t_\t_\n2\tB\t_\t_\t_\t_\tx\tdep\t_\t_\n";
    match parse_conllu(text, Path::new("p.conllu")).unwrap_err() {
        crate::Error::Parse { line, field, .. } => {
            assert_eq!(line, 2);
            assert_eq!(field, "HEAD");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn conllu_head_out_of_range() {
    let text = "1\tA\t_\t_\t_\t_\t5\tdep\t_\t_\n";
    assert!(parse_conllu(text, Path::new("p.conllu")).is_err());
}

#[test]
fn graph_of_one_arc() {
    let toks = tokenize("Python rocks");
    let raw = [RawEdge {
        head: 1,
        dependent: 0,
        deprel: "nsubj".into(),
    }];
    let mut vocab = LabelVocab::new();
    let g = build_graph(&toks, &raw, &mut vocab).unwrap();
    assert_eq!(g.edges.len(), 4);
    assert!(vocab.contains(Direction::Out, "nsubj"));
    assert!(vocab.contains(Direction::Inv, "nsubj"));
    assert!(vocab.contains(Direction::SelfLoop, SELF_LABEL));
    let idx = g.index(&vocab);
    assert_eq!(idx.sources, [1, 0, 0, 1]);
    assert_eq!(idx.targets, [0, 1, 0, 1]);
    assert_eq!(idx.directions, [0, 1, 2, 2]);
    assert_eq!(idx.in_degrees(), [2, 2]);
}

#[test]
fn graph_of_single_token() {
    let mut vocab = LabelVocab::new();
    let g = build_graph(&tokenize("Hi"), &[], &mut vocab).unwrap();
    assert_eq!(g.edges.len(), 1);
    assert_eq!(g.edges[0].direction, Direction::SelfLoop);
    assert_eq!(g.edges[0].dep_type, SELF_LABEL);
}

#[test]
fn dangling_edge_is_rejected() {
    let raw = [RawEdge {
        head: 0,
        dependent: 3,
        deprel: "obj".into(),
    }];
    assert!(build_graph(&tokenize("a b"), &raw, &mut LabelVocab::new()).is_err());
}

#[test]
fn unseen_label_maps_to_unk_but_keeps_direction() {
    let mut vocab = LabelVocab::new();
    let g = DependencyGraph::from_raw(
        2,
        &[RawEdge {
            head: 0,
            dependent: 1,
            deprel: "amod".into(),
        }],
    )
    .unwrap();
    let idx = g.index(&vocab);
    assert_eq!(idx.labels[0], LabelVocab::UNK);
    assert_eq!(idx.directions[0], Direction::Out.index());
    vocab.observe(&g);
    assert_ne!(g.index(&vocab).labels[0], LabelVocab::UNK);
}

#[test]
fn label_vocab_ids_are_dense_and_round_trip() {
    let mut vocab = LabelVocab::new();
    vocab.insert(Direction::Out, "nsubj");
    vocab.insert(Direction::Inv, "nsubj");
    vocab.insert(Direction::Out, "nsubj");
    assert_eq!(vocab.len(), 4);
    let json = serde_json::to_string(&vocab).unwrap();
    let back: LabelVocab = serde_json::from_str(&json).unwrap();
    assert_eq!(back, vocab);
    assert_eq!(back.id(Direction::Inv, "nsubj"), 3);
}

#[test]
fn chain_graph_links_neighbours() {
    let g = DependencyGraph::chain(3);
    assert_eq!(g.edges.len(), 2 * 2 + 3);
}

#[test]
fn sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("ctx");
    let a = array![[1.0f32, -2.5], [3.0, 0.125]];
    let b = array![[7.0f32, 8.0, 9.0]];
    let mut w = SidecarWriter::create(&prefix).unwrap();
    w.push("a", &a).unwrap();
    w.push("b", &b).unwrap();
    assert!(w.push("a", &a).is_err());
    w.finish().unwrap();
    let r = ContextualSidecar::open(&prefix).unwrap();
    assert_eq!(r.len(), 2);
    assert_eq!(r.get("a").unwrap(), a);
    assert_eq!(r.get("b").unwrap(), b);
    assert_eq!(r.entry("b").unwrap(), SidecarEntry { offset: 16, n: 1, d0: 3 });
    assert!(r.get("c").is_err());
}

fn raw_edges(n: usize) -> impl Strategy<Value = Vec<RawEdge>> {
    prop::collection::vec((0..n, 0..n, 0usize..4), 0..12).prop_map(|v| {
        v.into_iter()
            .map(|(h, d, t)| RawEdge {
                head: h,
                dependent: d,
                deprel: ["nsubj", "obj", "amod", "advmod"][t].into(),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn graph_is_symmetric_and_counted(n in 1usize..8, seed in 0u64..1000) {
        let mut rng = seed;
        let mut raw = Vec::new();
        for _ in 0..(seed % 9) {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            raw.push(RawEdge {
                head: (rng >> 33) as usize % n,
                dependent: (rng >> 17) as usize % n,
                deprel: if rng & 1 == 0 { "nsubj".into() } else { "obj".into() },
            });
        }
        let g = DependencyGraph::from_raw(n, &raw).unwrap();
        prop_assert_eq!(g.edges.len(), 2 * raw.len() + n);
        for e in g.edges.iter().filter(|e| e.direction == Direction::Out) {
            let twin = g.edges.iter().any(|f| f.direction == Direction::Inv
                && f.source == e.target && f.target == e.source && f.dep_type == e.dep_type);
            prop_assert!(twin);
        }
        for v in 0..n {
            let loops = g.edges.iter().filter(|e| e.direction == Direction::SelfLoop && e.source == v).count();
            prop_assert_eq!(loops, 1);
        }
    }

    #[test]
    fn graph_edges_stay_in_range(raw in raw_edges(6)) {
        let g = DependencyGraph::from_raw(6, &raw).unwrap();
        prop_assert!(g.edges.iter().all(|e| e.source < 6 && e.target < 6));
        let inv = g.edges.iter().filter(|e| e.direction == Direction::Inv).count();
        let out = g.edges.iter().filter(|e| e.direction == Direction::Out).count();
        prop_assert_eq!(inv, out);
    }

    #[test]
    fn pooling_ignores_piece_order(values in prop::collection::vec(-100i32..100, 8), swap in any::<bool>()) {
        let pieces = Array2::from_shape_vec((4, 2), values.iter().map(|&v| v as f32 / 4.0).collect()).unwrap();
        let align = [Some(0), Some(0), Some(0), Some(1)];
        let a = pool_wordpieces(&pieces, &align, 2).unwrap();
        let mut permuted = pieces.clone();
        let order = if swap { [2, 0, 1, 3] } else { [1, 2, 0, 3] };
        for (dst, &src) in order.iter().enumerate() {
            permuted.row_mut(dst).assign(&pieces.row(src));
        }
        let b = pool_wordpieces(&permuted, &align, 2).unwrap();
        prop_assert_eq!(a, b);
    }
}
