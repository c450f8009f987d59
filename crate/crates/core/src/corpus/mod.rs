//! CPC and ABSA corpora: loading, validation, splitting, rebalancing, and the
//! alternating two-task batch schedule.

mod io;
mod schedule;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_absa, load_cpc, load_cpc_unlabeled, write_absa_jsonl, write_cpc_jsonl, CpcFormat};
pub use schedule::{AltBatches, BatchSchedule, ScheduledBatch, Task};

/// Character-offset span of an entity inside its sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            text: text.into(),
            start,
            end,
        }
    }

    /// Checks `0 <= start < end <= len` and that the covered characters equal
    /// `text`.
    pub fn validate(&self, sentence: &str) -> std::result::Result<(), String> {
        let len = sentence.chars().count();
        if self.start >= self.end || self.end > len {
            return Err(format!(
                "span ({}, {}) out of bounds for sentence of {len} characters",
                self.start, self.end
            ));
        }
        let covered: String = sentence
            .chars()
            .skip(self.start)
            .take(self.end - self.start)
            .collect();
        if covered != self.text {
            return Err(format!(
                "span ({}, {}) covers {covered:?}, expected {:?}",
                self.start, self.end, self.text
            ));
        }
        Ok(())
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CpcLabel {
    Better,
    Worse,
    None,
}

impl CpcLabel {
    pub const ALL: [CpcLabel; 3] = [CpcLabel::Better, CpcLabel::Worse, CpcLabel::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CpcLabel::Better => "BETTER",
            CpcLabel::Worse => "WORSE",
            CpcLabel::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BETTER" => Some(CpcLabel::Better),
            "WORSE" => Some(CpcLabel::Worse),
            "NONE" => Some(CpcLabel::None),
            _ => None,
        }
    }

    /// The label seen when the two entities are queried in reverse order.
    pub fn flipped(self) -> Self {
        match self {
            CpcLabel::Better => CpcLabel::Worse,
            CpcLabel::Worse => CpcLabel::Better,
            CpcLabel::None => CpcLabel::None,
        }
    }
}

impl fmt::Display for CpcLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SentiLabel {
    Pos,
    Neu,
    Neg,
}

impl SentiLabel {
    pub const ALL: [SentiLabel; 3] = [SentiLabel::Pos, SentiLabel::Neu, SentiLabel::Neg];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentiLabel::Pos => "POS",
            SentiLabel::Neu => "NEU",
            SentiLabel::Neg => "NEG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "POS" => Some(SentiLabel::Pos),
            "NEU" => Some(SentiLabel::Neu),
            "NEG" => Some(SentiLabel::Neg),
            _ => None,
        }
    }

    /// POS → +1, NEU → 0, NEG → −1.
    pub fn polarity(self) -> i32 {
        match self {
            SentiLabel::Pos => 1,
            SentiLabel::Neu => 0,
            SentiLabel::Neg => -1,
        }
    }
}

impl fmt::Display for SentiLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source corpus of an instance: CPC is 0, ABSA is 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainLabel {
    CpcDomain = 0,
    AbsaDomain = 1,
}

impl DomainLabel {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpcInstance {
    pub id: String,
    pub sentence: String,
    /// The earlier-appearing entity.
    pub entity_a: EntitySpan,
    pub entity_b: EntitySpan,
    pub label: CpcLabel,
    /// When set, the instance is queried as `(entity_b, entity_a)` and
    /// `label` is relative to that order.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub swapped: bool,
}

impl CpcInstance {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Validation {
            id: self.id.clone(),
            message,
        };
        self.entity_a
            .validate(&self.sentence)
            .map_err(|m| fail(format!("entity_a: {m}")))?;
        self.entity_b
            .validate(&self.sentence)
            .map_err(|m| fail(format!("entity_b: {m}")))?;
        if self.entity_a.start >= self.entity_b.start {
            return Err(fail("entity_a must appear before entity_b".into()));
        }
        if self.entity_a.overlaps(&self.entity_b) {
            return Err(fail("entity spans overlap".into()));
        }
        Ok(())
    }

    /// Entities in query order: `(e1, e2)`.
    pub fn query_order(&self) -> (&EntitySpan, &EntitySpan) {
        if self.swapped {
            (&self.entity_b, &self.entity_a)
        } else {
            (&self.entity_a, &self.entity_b)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsaInstance {
    pub id: String,
    pub sentence: String,
    pub aspect: EntitySpan,
    pub sentiment: SentiLabel,
    pub domain: DomainLabel,
}

/// One aspect-targeted view of a CPC sentence fed to the sentiment analyzer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbsaQuery {
    pub id: String,
    pub sentence: String,
    pub aspect: EntitySpan,
    pub domain: DomainLabel,
}

/// The two aspect queries of a CPC instance, first entity first.
pub fn split_to_two(inst: &CpcInstance) -> (AbsaQuery, AbsaQuery) {
    let (first, second) = inst.query_order();
    let query = |span: &EntitySpan, tag: &str| AbsaQuery {
        id: format!("{}#{tag}", inst.id),
        sentence: inst.sentence.clone(),
        aspect: span.clone(),
        domain: DomainLabel::CpcDomain,
    };
    (query(first, "e1"), query(second, "e2"))
}

pub type ClassCounts = BTreeMap<CpcLabel, usize>;

pub fn class_counts(data: &[CpcInstance]) -> ClassCounts {
    let mut counts: ClassCounts = CpcLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for inst in data {
        *counts.entry(inst.label).or_default() += 1;
    }
    counts
}

/// `(BETTER, WORSE, NONE)` counts as a tuple.
pub fn count_triple(data: &[CpcInstance]) -> (usize, usize, usize) {
    let c = class_counts(data);
    (c[&CpcLabel::Better], c[&CpcLabel::Worse], c[&CpcLabel::None])
}

#[derive(Clone, Debug)]
pub struct SplitBundle {
    pub train: Vec<CpcInstance>,
    pub dev: Vec<CpcInstance>,
    pub test: Vec<CpcInstance>,
}

impl SplitBundle {
    /// Pre-split corpora pass through unchanged once checked for id overlap.
    pub fn from_presplit(
        train: Vec<CpcInstance>,
        dev: Vec<CpcInstance>,
        test: Vec<CpcInstance>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in train.iter().chain(&dev).chain(&test) {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Validation {
                    id: inst.id.clone(),
                    message: "id appears in more than one split".into(),
                });
            }
        }
        Ok(Self { train, dev, test })
    }

    pub fn counts(&self) -> [(&'static str, ClassCounts); 3] {
        [
            ("train", class_counts(&self.train)),
            ("dev", class_counts(&self.dev)),
            ("test", class_counts(&self.test)),
        ]
    }
}

fn by_label(data: &[CpcInstance]) -> BTreeMap<CpcLabel, Vec<CpcInstance>> {
    let mut groups: BTreeMap<CpcLabel, Vec<CpcInstance>> = BTreeMap::new();
    for inst in data {
        groups.entry(inst.label).or_default().push(inst.clone());
    }
    groups
}

fn restore_order(mut part: Vec<CpcInstance>, order: &std::collections::HashMap<&str, usize>) -> Vec<CpcInstance> {
    part.sort_by_key(|i| order[i.id.as_str()]);
    part
}

/// Stratified-random dev carve-out: `ceil(20%)` of each label's training
/// instances, drawn with `seed`. Returns `(train, dev)` in file order.
pub fn carve_dev(train: &[CpcInstance], seed: u64) -> (Vec<CpcInstance>, Vec<CpcInstance>) {
    let order: std::collections::HashMap<&str, usize> =
        train.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DEV_STREAM);
    let mut keep = Vec::new();
    let mut dev = Vec::new();
    for (label, mut group) in by_label(train) {
        let n_dev = (group.len() as f64 * 0.2).ceil() as usize;
        if group.len() - n_dev < 5 {
            log::warn!(
                "label {label} has {} training instances; dev receives {n_dev}",
                group.len()
            );
        }
        group.shuffle(&mut rng);
        let rest = group.split_off(n_dev);
        dev.extend(group);
        keep.extend(rest);
    }
    (restore_order(keep, &order), restore_order(dev, &order))
}

// Keeps the dev and test draws on unrelated streams for the same seed.
const DEV_STREAM: u64 = 0x5eed_0000_0000_0dec;

/// Splits an unsplit corpus into 80% train and 20% test (stratified per
/// label, rounded), then carves dev from train with [`carve_dev`].
pub fn make_splits(data: &[CpcInstance], seed: u64) -> Result<SplitBundle> {
    if data.is_empty() {
        return Err(Error::Data("cannot split an empty corpus".into()));
    }
    let order: std::collections::HashMap<&str, usize> =
        data.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut group) in by_label(data) {
        let n_test = (group.len() as f64 * 0.2).round() as usize;
        group.shuffle(&mut rng);
        let rest = group.split_off(n_test);
        test.extend(group);
        train.extend(rest);
    }
    let train = restore_order(train, &order);
    let test = restore_order(test, &order);
    let (train, dev) = carve_dev(&train, seed);
    SplitBundle::from_presplit(train, dev, test)
}

const FLIP_SUFFIX: &str = "#flip";

/// Appends a label-flipped copy of every BETTER and WORSE instance that does
/// not already have one. The copy queries the entities in reverse order.
pub fn flip_augment(train: &[CpcInstance]) -> Vec<CpcInstance> {
    let ids: HashSet<&str> = train.iter().map(|i| i.id.as_str()).collect();
    let mut out = train.to_vec();
    for inst in train {
        if inst.label == CpcLabel::None {
            continue;
        }
        let is_copy = inst.id.ends_with(FLIP_SUFFIX);
        let twin_present = if is_copy {
            ids.contains(&inst.id[..inst.id.len() - FLIP_SUFFIX.len()])
        } else {
            ids.contains(format!("{}{FLIP_SUFFIX}", inst.id).as_str())
        };
        if twin_present {
            continue;
        }
        let mut copy = inst.clone();
        copy.id = format!("{}{FLIP_SUFFIX}", inst.id);
        copy.swapped = !inst.swapped;
        copy.label = inst.label.flipped();
        out.push(copy);
    }
    out
}

/// Duplicates BETTER and WORSE instances, cycling through each class in file
/// order, until both match the NONE count.
pub fn upsample(train: &[CpcInstance]) -> Result<Vec<CpcInstance>> {
    let (b, w, n) = count_triple(train);
    if b > n || w > n {
        return Err(Error::Data(format!(
            "upsampling requires NONE to be the majority class, counts are ({b}, {w}, {n})"
        )));
    }
    let mut out = train.to_vec();
    for label in [CpcLabel::Better, CpcLabel::Worse] {
        let members: Vec<&CpcInstance> = train.iter().filter(|i| i.label == label).collect();
        if members.is_empty() {
            if n == 0 {
                continue;
            }
            return Err(Error::Data(format!("cannot upsample {label}: no instances")));
        }
        for k in 0..(n - members.len()) {
            let src = members[k % members.len()];
            let mut copy = src.clone();
            copy.id = format!("{}#dup{}", src.id, k / members.len() + 1);
            out.push(copy);
        }
    }
    Ok(out)
}

/// Per-class loss weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: BTreeMap<CpcLabel, f64>,
}

impl ClassWeights {
    pub fn new(better: f64, worse: f64, none: f64) -> Result<Self> {
        let w = Self {
            weights: [
                (CpcLabel::Better, better),
                (CpcLabel::Worse, worse),
                (CpcLabel::None, none),
            ]
            .into_iter()
            .collect(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn uniform() -> Self {
        Self::new(1.0, 1.0, 1.0).expect("positive")
    }

    pub fn get(&self, label: CpcLabel) -> f64 {
        self.weights.get(&label).copied().unwrap_or(1.0)
    }

    pub fn as_triple(&self) -> (f64, f64, f64) {
        (
            self.get(CpcLabel::Better),
            self.get(CpcLabel::Worse),
            self.get(CpcLabel::None),
        )
    }

    fn validate(&self) -> Result<()> {
        for (label, w) in &self.weights {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("class weight for {label} must be > 0, got {w}")));
            }
        }
        Ok(())
    }
}

impl Default for ClassWeights {
    /// 2 : 4 : 1 for BETTER : WORSE : NONE.
    fn default() -> Self {
        Self::new(2.0, 4.0, 1.0).expect("positive")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    Configured,
    Uniform,
    InverseFrequency,
}

pub fn class_weights(
    mode: WeightMode,
    config: Option<&ClassWeights>,
    counts: &ClassCounts,
) -> Result<ClassWeights> {
    match mode {
        WeightMode::Configured => {
            let cfg = config.ok_or_else(|| {
                Error::Config("configured class weights requested but none supplied".into())
            })?;
            cfg.validate()?;
            Ok(cfg.clone())
        }
        WeightMode::Uniform => Ok(ClassWeights::uniform()),
        WeightMode::InverseFrequency => {
            let mut inv = Vec::new();
            for label in CpcLabel::ALL {
                let c = counts.get(&label).copied().unwrap_or(0);
                if c == 0 {
                    return Err(Error::Data(format!(
                        "inverse-frequency weights need a nonzero count for {label}"
                    )));
                }
                inv.push(1.0 / c as f64);
            }
            let mean = inv.iter().sum::<f64>() / inv.len() as f64;
            ClassWeights::new(inv[0] / mean, inv[1] / mean, inv[2] / mean)
        }
    }
}

#[cfg(test)]
mod tests;
