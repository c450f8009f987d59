use std::io::Write;

use proptest::prelude::*;

use super::*;

fn inst(id: &str, label: CpcLabel) -> CpcInstance {
    let sentence = "Alpha is compared with Beta here".to_string();
    CpcInstance {
        id: id.into(),
        sentence,
        entity_a: EntitySpan::new("Alpha", 0, 5),
        entity_b: EntitySpan::new("Beta", 23, 27),
        label,
        swapped: false,
    }
}

fn corpus(b: usize, w: usize, n: usize) -> Vec<CpcInstance> {
    let mut out = Vec::new();
    for (label, count) in [(CpcLabel::Better, b), (CpcLabel::Worse, w), (CpcLabel::None, n)] {
        for k in 0..count {
            out.push(inst(&format!("{label}-{k}"), label));
        }
    }
    out
}

fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn fixture_instance_is_valid() {
    inst("x", CpcLabel::None).validate().unwrap();
}

#[test]
fn load_three_rows_one_per_label() {
    let rows = [
        r#"{"id":"1","sentence":"Alpha beats Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Beta","start":12,"end":16},"label":"BETTER"}"#,
        r#"{"id":"2","sentence":"Alpha loses to Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Beta","start":15,"end":19},"label":"WORSE"}"#,
        r#"{"id":"3","sentence":"Alpha and Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Beta","start":10,"end":14},"label":"NONE"}"#,
    ];
    let f = write_tmp(&rows.join("\n"), ".jsonl");
    let data = load_cpc(f.path(), CpcFormat::Jsonl).unwrap();
    assert_eq!(count_triple(&data), (1, 1, 1));
    assert_eq!(data.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
}

#[test]
fn empty_file_loads_empty() {
    let f = write_tmp("", ".jsonl");
    let data = load_cpc(f.path(), CpcFormat::Jsonl).unwrap();
    assert!(data.is_empty());
    assert_eq!(count_triple(&data), (0, 0, 0));
    let g = write_tmp("\n", ".jsonl");
    assert!(load_absa(g.path()).unwrap().is_empty());
}

#[test]
fn malformed_row_names_line_and_field() {
    let rows = [
        r#"{"id":"1","sentence":"Alpha and Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Beta","start":10,"end":14},"label":"NONE"}"#,
        r#"{"id":"2","sentence":"Alpha and Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Beta","start":10},"label":"NONE"}"#,
    ];
    let f = write_tmp(&rows.join("\n"), ".jsonl");
    match load_cpc(f.path(), CpcFormat::Jsonl).unwrap_err() {
        Error::Parse { line, field, .. } => {
            assert_eq!(line, 2);
            assert_eq!(field, "entity_b.end");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn span_mismatch_lists_id() {
    let row = r#"{"id":"bad-7","sentence":"Alpha and Beta","entity_a":{"text":"Alpha","start":0,"end":5},"entity_b":{"text":"Gamma","start":10,"end":14},"label":"NONE"}"#;
    let f = write_tmp(row, ".jsonl");
    match load_cpc(f.path(), CpcFormat::Jsonl).unwrap_err() {
        Error::Validation { id, .. } => assert_eq!(id, "bad-7"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn csv_layout_locates_entities() {
    let csv = "sentence,object_a,object_b,most_frequent_label\n\
               \"Python is better than MATLAB for this\",python,matlab,BETTER\n\
               \"MATLAB loses to Python\",python,matlab,BETTER\n";
    let f = write_tmp(csv, ".csv");
    let data = load_cpc(f.path(), CpcFormat::Csv).unwrap();
    assert_eq!(data[0].entity_a, EntitySpan::new("Python", 0, 6));
    assert_eq!(data[0].entity_b, EntitySpan::new("MATLAB", 22, 28));
    assert_eq!(data[0].label, CpcLabel::Better);
    // object_a appears second, so the stored order and label are flipped
    assert_eq!(data[1].entity_a.text, "MATLAB");
    assert_eq!(data[1].label, CpcLabel::Worse);
    assert_eq!(data[1].id, "row-2");
}

#[test]
fn absa_fixture_with_food_span() {
    let row = r#"{"id":"a1","sentence":"I liked the food a lot","aspect":{"text":"food","start":12,"end":16},"sentiment":"POS"}"#;
    let f = write_tmp(row, ".jsonl");
    let data = load_absa(f.path()).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].domain, DomainLabel::AbsaDomain);
    assert_eq!(data[0].sentiment, SentiLabel::Pos);
}

#[test]
fn unknown_sentiment_reports_value() {
    let row = r#"{"id":"a1","sentence":"I liked the food","aspect":{"text":"food","start":12,"end":16},"sentiment":"HAPPY"}"#;
    let f = write_tmp(row, ".jsonl");
    let msg = load_absa(f.path()).unwrap_err().to_string();
    assert!(msg.contains("HAPPY"), "{msg}");
}

#[test]
fn ten_none_instances_split_8_2_with_dev_2() {
    let data = corpus(0, 0, 10);
    let split = make_splits(&data, 3).unwrap();
    assert_eq!(split.test.len(), 2);
    assert_eq!(split.train.len() + split.dev.len(), 8);
    assert_eq!(split.dev.len(), 2);
}

#[test]
fn splits_are_deterministic_and_disjoint() {
    let data = corpus(30, 12, 80);
    let a = make_splits(&data, 42).unwrap();
    let b = make_splits(&data, 42).unwrap();
    let ids = |v: &[CpcInstance]| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&a.train), ids(&b.train));
    assert_eq!(ids(&a.dev), ids(&b.dev));
    assert_eq!(ids(&a.test), ids(&b.test));
    let total = a.train.len() + a.dev.len() + a.test.len();
    assert_eq!(total, data.len());
    let c = make_splits(&data, 43).unwrap();
    assert_ne!(ids(&a.test), ids(&c.test));
}

#[test]
fn dev_carving_matches_published_per_label_counts() {
    // train+dev portion of the published split: 1091 / 474 / 4194
    let data = corpus(1091, 474, 4194);
    let (train, dev) = carve_dev(&data, 1);
    assert_eq!(count_triple(&dev), (219, 95, 839));
    assert_eq!(count_triple(&train), (872, 379, 3355));
}

#[test]
fn presplit_passthrough_rejects_shared_ids() {
    let a = corpus(1, 0, 0);
    assert!(SplitBundle::from_presplit(a.clone(), a, vec![]).is_err());
}

#[test]
fn flipping_published_counts() {
    let out = flip_augment(&corpus(872, 379, 3355));
    assert_eq!(count_triple(&out), (1251, 1251, 3355));
    assert_eq!(out.len(), 5857);
}

#[test]
fn flipping_single_better() {
    let out = flip_augment(&[inst("s", CpcLabel::Better)]);
    assert_eq!(out.len(), 2);
    let copy = &out[1];
    assert_eq!(copy.label, CpcLabel::Worse);
    assert!(copy.swapped);
    let (e1, e2) = copy.query_order();
    assert_eq!((e1.text.as_str(), e2.text.as_str()), ("Beta", "Alpha"));
    // stored span order still has the earlier entity first
    assert!(copy.entity_a.start < copy.entity_b.start);
}

#[test]
fn flipping_all_none_is_identity_and_flip_is_idempotent() {
    let none = corpus(0, 0, 5);
    assert_eq!(flip_augment(&none), none);
    let once = flip_augment(&corpus(3, 2, 4));
    assert_eq!(flip_augment(&once), once);
}

#[test]
fn upsampling_published_counts() {
    let out = upsample(&corpus(872, 379, 3355)).unwrap();
    assert_eq!(count_triple(&out), (3355, 3355, 3355));
    assert_eq!(out.len(), 10065);
}

#[test]
fn upsampling_cycles_in_file_order() {
    let data = corpus(2, 1, 4);
    let out = upsample(&data).unwrap();
    assert_eq!(count_triple(&out), (4, 4, 4));
    let worse: Vec<_> = out.iter().filter(|i| i.label == CpcLabel::Worse).collect();
    assert!(worse.iter().all(|i| i.id.starts_with("WORSE-0")));
    let better_sources: Vec<_> = out
        .iter()
        .filter(|i| i.label == CpcLabel::Better)
        .map(|i| i.id.split('#').next().unwrap().to_string())
        .collect();
    assert_eq!(better_sources, ["BETTER-0", "BETTER-1", "BETTER-0", "BETTER-1"]);
}

#[test]
fn upsampling_balanced_is_identity_and_empty_class_errors() {
    let bal = corpus(3, 3, 3);
    assert_eq!(upsample(&bal).unwrap(), bal);
    assert!(upsample(&corpus(2, 0, 4)).is_err());
}

#[test]
fn class_weight_modes() {
    let counts = class_counts(&corpus(872, 379, 3355));
    let cfg = ClassWeights::default();
    assert_eq!(
        class_weights(WeightMode::Configured, Some(&cfg), &counts).unwrap().as_triple(),
        (2.0, 4.0, 1.0)
    );
    assert!(class_weights(WeightMode::Configured, None, &counts).is_err());
    assert_eq!(
        class_weights(WeightMode::Uniform, None, &counts).unwrap().as_triple(),
        (1.0, 1.0, 1.0)
    );
    let inv = class_weights(WeightMode::InverseFrequency, None, &counts).unwrap();
    let (b, w, n) = inv.as_triple();
    let raw = [1.0 / 872.0, 1.0 / 379.0, 1.0 / 3355.0];
    let mean = raw.iter().sum::<f64>() / 3.0;
    assert!((b - raw[0] / mean).abs() < 1e-12);
    assert!((w - raw[1] / mean).abs() < 1e-12);
    assert!((n - raw[2] / mean).abs() < 1e-12);
    assert!(((b + w + n) / 3.0 - 1.0).abs() < 1e-12);
    let zero = class_counts(&corpus(0, 1, 1));
    assert!(class_weights(WeightMode::InverseFrequency, None, &zero).is_err());
}

#[test]
fn split_to_two_targets_each_entity() {
    let s = "This is all done via the gigabit Ethernet interface, rather than the much slower USB interface.";
    let eth = s.find("Ethernet").unwrap();
    let usb = s.find("USB").unwrap();
    let inst = CpcInstance {
        id: "s1".into(),
        sentence: s.into(),
        entity_a: EntitySpan::new("Ethernet", eth, eth + 8),
        entity_b: EntitySpan::new("USB", usb, usb + 3),
        label: CpcLabel::Better,
        swapped: false,
    };
    inst.validate().unwrap();
    let (q1, q2) = split_to_two(&inst);
    assert_eq!(q1.aspect.text, "Ethernet");
    assert_eq!(q2.aspect.text, "USB");
    assert_eq!(q1.sentence, q2.sentence);
    assert_eq!(q1.domain, DomainLabel::CpcDomain);
    assert_eq!((q2.aspect.start, q2.aspect.end), (usb, usb + 3));
}

#[test]
fn split_to_two_preserves_offsets_and_handles_degenerate() {
    let sentence = "0123456789abcdef0123456789abcdABCDEF".to_string();
    let inst = CpcInstance {
        id: "f".into(),
        entity_a: EntitySpan::new("abcdef", 10, 16),
        entity_b: EntitySpan::new("ABCDEF", 30, 36),
        sentence,
        label: CpcLabel::None,
        swapped: false,
    };
    let (q1, q2) = split_to_two(&inst);
    assert_eq!((q1.aspect.start, q1.aspect.end), (10, 16));
    assert_eq!((q2.aspect.start, q2.aspect.end), (30, 36));

    let mut same = inst.clone();
    same.entity_b = same.entity_a.clone();
    let (a, b) = split_to_two(&same);
    assert_eq!(a.aspect, b.aspect);
    assert_eq!(a.sentence, b.sentence);
}

proptest! {
    #[test]
    fn loaded_spans_cover_their_text(
        words in prop::collection::vec("[a-zA-Zé]{1,8}", 3..12),
        i in 0usize..100,
        j in 0usize..100,
    ) {
        let sentence = words.join(" ");
        let n = words.len();
        let (a, b) = (i % n, j % n);
        prop_assume!(a != b);
        let (a, b) = (a.min(b), a.max(b));
        let start_of = |k: usize| words[..k].iter().map(|w| w.chars().count() + 1).sum::<usize>();
        let span = |k: usize| EntitySpan::new(words[k].clone(), start_of(k), start_of(k) + words[k].chars().count());
        let row = serde_json::json!({
            "id": "p", "sentence": sentence,
            "entity_a": span(a), "entity_b": span(b), "label": "NONE"
        });
        let f = write_tmp(&row.to_string(), ".jsonl");
        let data = load_cpc(f.path(), CpcFormat::Jsonl).unwrap();
        for s in [&data[0].entity_a, &data[0].entity_b] {
            let covered: String = data[0].sentence.chars().skip(s.start).take(s.end - s.start).collect();
            prop_assert_eq!(&covered, &s.text);
        }
    }

    #[test]
    fn flip_count_identity(b in 0usize..20, w in 0usize..20, n in 0usize..20) {
        let out = flip_augment(&corpus(b, w, n));
        let (ob, ow, on) = count_triple(&out);
        prop_assert_eq!(ob, b + w);
        prop_assert_eq!(ow, b + w);
        prop_assert_eq!(on, n);
    }

    #[test]
    fn upsample_equalizes_to_none(b in 1usize..15, w in 1usize..15, extra in 0usize..10) {
        let n = b.max(w) + extra;
        let (ob, ow, on) = count_triple(&upsample(&corpus(b, w, n)).unwrap());
        prop_assert_eq!((ob, ow, on), (n, n, n));
    }
}
