//! Per-class and micro F1, the majority baseline, sentiment distance and
//! case-study reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{CpcInstance, CpcLabel, SentiLabel};
use crate::model::{CpcExample, SaeconModel};
use crate::nn::Float;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Indexed by [`CpcLabel::index`].
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
    pub micro_f1: f64,
    /// `confusion[gold][pred]`.
    pub confusion: [[usize; 3]; 3],
    pub support: [usize; 3],
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.support.iter().sum()
    }

    pub fn f1_of(&self, label: CpcLabel) -> f64 {
        self.f1[label.index()]
    }

    /// Aligned plain-text table, one row per class plus a micro row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<8} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support").unwrap();
        for l in CpcLabel::ALL {
            let i = l.index();
            writeln!(
                s,
                "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                l.as_str(),
                self.precision[i],
                self.recall[i],
                self.f1[i],
                self.support[i]
            )
            .unwrap();
        }
        writeln!(s, "{:<8} {:>9} {:>9} {:>9.4} {:>8}", "micro", "", "", self.micro_f1, self.total()).unwrap();
        s
    }

    /// `metric,value` rows: micro F1, per-class F1/precision/recall, support.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        w.write_record(["metric", "value"])?;
        w.write_record(["micro_f1", &self.micro_f1.to_string()])?;
        for l in CpcLabel::ALL {
            let i = l.index();
            let tag = l.as_str().to_ascii_lowercase();
            w.write_record([format!("f1_{tag}"), self.f1[i].to_string()])?;
            w.write_record([format!("precision_{tag}"), self.precision[i].to_string()])?;
            w.write_record([format!("recall_{tag}"), self.recall[i].to_string()])?;
            w.write_record([format!("support_{tag}"), self.support[i].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 (0 when `P + R = 0`) and micro F1
/// from pooled counts.
pub fn f1_report(preds: &[CpcLabel], golds: &[CpcLabel]) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::shape(
            format!("{} predictions", golds.len()),
            preds.len().to_string(),
        ));
    }
    if preds.is_empty() {
        return Err(Error::Data("no predictions to score".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, g) in preds.iter().zip(golds) {
        confusion[g.index()][p.index()] += 1;
    }
    let mut precision = [0.0; 3];
    let mut recall = [0.0; 3];
    let mut f1 = [0.0; 3];
    let mut support = [0; 3];
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..3 {
        let tp = confusion[c][c];
        let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        support[c] = actual;
        precision[c] = ratio(tp, predicted);
        recall[c] = ratio(tp, actual);
        // 2PR/(P+R) written over counts, so the value is exact.
        f1[c] = ratio(2 * tp, predicted + actual);
        tp_all += tp;
        fp_all += predicted - tp;
        fn_all += actual - tp;
    }
    let micro_f1 = ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all);
    Ok(EvalReport {
        precision,
        recall,
        f1,
        micro_f1,
        confusion,
        support,
    })
}

/// Most frequent training label; ties go to the lowest ordinal
/// (BETTER < WORSE < NONE).
pub fn majority_label(train: &[CpcLabel]) -> Result<CpcLabel> {
    if train.is_empty() {
        return Err(Error::Data("majority baseline needs training labels".into()));
    }
    let mut counts = [0usize; 3];
    for l in train {
        counts[l.index()] += 1;
    }
    let best = (0..3).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    Ok(CpcLabel::from_index(best).expect("three classes"))
}

pub fn majority_baseline(train: &[CpcLabel], test: &[CpcLabel]) -> Result<EvalReport> {
    let label = majority_label(train)?;
    f1_report(&vec![label; test.len()], test)
}

/// `polarity(p1) − polarity(p2)` with POS, NEU, NEG mapped to +1, 0, −1.
pub fn sentiment_distance(p1: SentiLabel, p2: SentiLabel) -> i32 {
    p1.polarity() - p2.polarity()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseStudyRow {
    pub id: String,
    pub sentence: String,
    pub entity_1: String,
    pub entity_2: String,
    pub senti_1: SentiLabel,
    pub senti_2: SentiLabel,
    pub delta: i32,
    pub pred: CpcLabel,
    pub gold: CpcLabel,
}

impl CaseStudyRow {
    /// `sentence | e1: TAG | e2: TAG | Δ | label` in the case-study layout.
    pub fn render(&self) -> String {
        format!(
            "{} | {}: {} | {}: {} | {:+} | {}",
            self.sentence,
            self.entity_1,
            self.senti_1,
            self.entity_2,
            self.senti_2,
            self.delta,
            title_case(self.gold.as_str())
        )
    }
}

fn title_case(s: &str) -> String {
    let lower = s.to_ascii_lowercase();
    let mut c = lower.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

/// Analyzer sentiment per entity (in query order), their distance, and the
/// CPC prediction for every instance.
pub fn case_study<T: Float>(
    model: &SaeconModel<T>,
    instances: &[CpcInstance],
    examples: &[CpcExample],
) -> Result<Vec<CaseStudyRow>> {
    if instances.len() != examples.len() {
        return Err(Error::shape(
            format!("{} encoded examples", instances.len()),
            examples.len().to_string(),
        ));
    }
    if model.senti_head.is_none() {
        return Err(Error::Config("case studies need the sentiment analyzer".into()));
    }
    instances
        .iter()
        .zip(examples)
        .map(|(inst, ex)| {
            let p = model.cpc_forward(&ex.input)?;
            let s = p.entity_sentiments();
            let (e1, e2) = inst.query_order();
            Ok(CaseStudyRow {
                id: inst.id.clone(),
                sentence: inst.sentence.clone(),
                entity_1: e1.text.clone(),
                entity_2: e2.text.clone(),
                senti_1: s[0],
                senti_2: s[1],
                delta: sentiment_distance(s[0], s[1]),
                pred: p.label(),
                gold: inst.label,
            })
        })
        .collect()
}

pub fn write_case_study_csv(rows: &[CaseStudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Predicted labels for every example.
pub fn predict_cpc<T: Float>(model: &SaeconModel<T>, examples: &[CpcExample]) -> Result<Vec<CpcLabel>> {
    examples
        .iter()
        .map(|ex| model.cpc_forward(&ex.input).map(|p| p.label()))
        .collect()
}

pub fn evaluate_cpc<T: Float>(model: &SaeconModel<T>, examples: &[CpcExample]) -> Result<EvalReport> {
    let preds = predict_cpc(model, examples)?;
    let golds: Vec<CpcLabel> = examples.iter().map(|e| e.label).collect();
    f1_report(&preds, &golds)
}

/// Binary logistic regression fitted by full-batch gradient descent on
/// standardized features.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LinearProbe {
    pub fn fit(features: &[Vec<f64>], labels: &[bool], iterations: usize, lr: f64) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Data("probe needs one label per non-empty feature row".into()));
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for f in features {
            for ((s, v), m) in scale.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-12 { 1.0 / s.sqrt() } else { 0.0 };
        }
        let mut probe = Self {
            mean,
            scale,
            weights: vec![0.0; d],
            bias: 0.0,
        };
        let xs: Vec<Vec<f64>> = features.iter().map(|f| probe.standardize(f)).collect();
        for _ in 0..iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(labels) {
                let p = crate::nn::sigmoid(probe.score(x));
                let err = p - if y { 1.0 } else { 0.0 };
                for (g, v) in gw.iter_mut().zip(x) {
                    *g += err * v / n;
                }
                gb += err / n;
            }
            for (w, g) in probe.weights.iter_mut().zip(&gw) {
                *w -= lr * g;
            }
            probe.bias -= lr * gb;
        }
        Ok(probe)
    }

    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    fn score(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, f: &[f64]) -> bool {
        self.score(&self.standardize(f)) > 0.0
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[bool]) -> f64 {
        let hits = features
            .iter()
            .zip(labels)
            .filter(|(f, &y)| self.predict(f) == y)
            .count();
        ratio(hits, features.len())
    }
}

/// Held-out domain accuracy of a linear probe on frozen analyzer outputs.
/// CPC rows contribute the first entity's `h_s`, ABSA rows the aspect's. The
/// probe is fitted on the even-indexed rows and scored on the odd ones.
pub fn domain_probe_accuracy<T: Float>(
    model: &SaeconModel<T>,
    cpc: &[CpcExample],
    absa: &[crate::model::AbsaExample],
) -> Result<f64> {
    if model.analyzer.is_none() {
        return Err(Error::Config("the domain probe reads the sentiment analyzer".into()));
    }
    let mut rows = Vec::with_capacity(cpc.len() + absa.len());
    for ex in cpc {
        rows.push((model.cpc_forward(&ex.input)?.h_s[0].clone(), false));
    }
    for ex in absa {
        rows.push((model.absa_forward(&ex.input)?.h_s, true));
    }
    let split = |parity: usize| -> (Vec<Vec<f64>>, Vec<bool>) {
        rows.iter().skip(parity).step_by(2).cloned().unzip()
    };
    let (fit_x, fit_y) = split(0);
    let (ev_x, ev_y) = split(1);
    let probe = LinearProbe::fit(&fit_x, &fit_y, 500, 0.5)?;
    Ok(probe.accuracy(&ev_x, &ev_y))
}
