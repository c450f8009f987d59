//! Compares the three ways of handling the skewed label distribution:
//! label flipping, upsampling and per-class loss weights.
//!
//! cargo run --example class_imbalance -- [better] [worse] [none]

use saecon::corpus::{
    class_counts, class_weights, count_triple, flip_augment, upsample, ClassWeights, CpcInstance, CpcLabel,
    EntitySpan, WeightMode,
};

fn synthetic(b: usize, w: usize, n: usize) -> Vec<CpcInstance> {
    let labels = [(CpcLabel::Better, b), (CpcLabel::Worse, w), (CpcLabel::None, n)];
    labels
        .iter()
        .flat_map(|&(label, k)| std::iter::repeat(label).take(k))
        .enumerate()
        .map(|(i, label)| CpcInstance {
            id: format!("s{i}"),
            sentence: "python is faster than ruby".into(),
            entity_a: EntitySpan::new("python", 0, 6),
            entity_b: EntitySpan::new("ruby", 22, 26),
            label,
            swapped: false,
        })
        .collect()
}

fn main() -> saecon::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (b, w, n) = match args[..] {
        [b, w, n] => (b, w, n),
        _ => (872, 379, 3355),
    };
    let train = synthetic(b, w, n);
    println!("original   {:?}", count_triple(&train));

    let flipped = flip_augment(&train);
    println!("flip       {:?}", count_triple(&flipped));
    let swapped = flipped.iter().find(|i| i.swapped).expect("at least one flipped copy");
    let (first, second) = swapped.query_order();
    println!("  e.g. {} asks ({}, {}) as {}", swapped.id, first.text, second.text, swapped.label);

    println!("upsample   {:?}", count_triple(&upsample(&train)?));

    let counts = class_counts(&train);
    for (name, mode) in [
        ("configured", WeightMode::Configured),
        ("uniform", WeightMode::Uniform),
        ("inv-freq", WeightMode::InverseFrequency),
    ] {
        let cw = class_weights(mode, Some(&ClassWeights::default()), &counts)?;
        let (wb, ww, wn) = cw.as_triple();
        println!("weights {name:<10} B {wb:.3}  W {ww:.3}  N {wn:.3}");
    }
    Ok(())
}
