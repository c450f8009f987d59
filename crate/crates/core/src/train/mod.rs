//! Alternating two-task training, learning-rate decay, dev selection.

pub mod checkpoint;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AltBatches, BatchSchedule, ClassWeights, Task};
use crate::eval::{evaluate_cpc, EvalReport};
use crate::model::{add_l2_grad, l2_reg, AbsaExample, CpcExample, LossBundle, LossWeights, SaeconModel};
use crate::nn::{to_f64, Adam, GradStore, StepLr};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, TensorEntry};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    DevMicroF1,
    DevMacroF1,
    /// Keep the parameters of the final epoch.
    LastEpoch,
}

impl SelectionMetric {
    pub fn score(self, r: &EvalReport) -> f64 {
        match self {
            SelectionMetric::DevMicroF1 => r.micro_f1,
            SelectionMetric::DevMacroF1 => r.f1.iter().sum::<f64>() / 3.0,
            SelectionMetric::LastEpoch => r.micro_f1,
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dev_micro_f1" | "micro" => Ok(Self::DevMicroF1),
            "dev_macro_f1" | "macro" => Ok(Self::DevMacroF1),
            "last_epoch" | "last" => Ok(Self::LastEpoch),
            other => Err(Error::Config(format!(
                "unknown selection metric {other:?} (dev_micro_f1|dev_macro_f1|last_epoch)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub loss: LossWeights,
    pub class_weights: ClassWeights,
    pub schedule: BatchSchedule,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    pub selection: SelectionMetric,
    /// Stop after the first epoch whose selection score reaches this value.
    #[serde(default)]
    pub stop_at: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            loss: LossWeights::default(),
            class_weights: ClassWeights::default(),
            schedule: BatchSchedule::default(),
            epochs: 15,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            lr_step_epochs: 3,
            lr_gamma: 0.8,
            selection: SelectionMetric::DevMicroF1,
            stop_at: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        let l = self.loss;
        if [l.lambda, l.lambda_s, l.lambda_d].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("loss coefficients must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam moment coefficients must lie in [0, 1)".into());
        }
        if self.lr_step_epochs == 0 || !(self.lr_gamma > 0.0) {
            return bad("learning-rate decay needs a positive step and factor".into());
        }
        self.schedule.validate()
    }

    pub fn lr_schedule(&self) -> StepLr {
        StepLr {
            base: self.lr,
            step_epochs: self.lr_step_epochs,
            gamma: self.lr_gamma,
        }
    }
}

/// One row of the metric log. Loss columns are batch means over the epoch;
/// absent components are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub task: String,
    pub lr: f64,
    pub loss_c: Option<f64>,
    pub loss_s: Option<f64>,
    pub loss_d: Option<f64>,
    pub dev_micro_f1: f64,
    pub dev_f1_b: f64,
    pub dev_f1_w: f64,
    pub dev_f1_n: f64,
}

pub fn write_metric_log(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_metric_log(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?)
}

/// 1-based epoch with the highest score; the earliest wins ties.
pub fn select_best(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Data("cannot select from an empty log".into()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

pub struct TrainData<'a> {
    pub cpc_train: &'a [CpcExample],
    pub absa_train: &'a [AbsaExample],
    pub cpc_dev: &'a [CpcExample],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<MetricRow>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub best_report: EvalReport,
    /// Task of every optimization step, in order.
    pub tasks: Vec<Task>,
    /// Total loss of every optimization step, in order.
    pub batch_losses: Vec<f64>,
}

#[derive(Default)]
struct EpochSums {
    main: f64,
    domain: f64,
    batches: usize,
    domain_batches: usize,
}

impl EpochSums {
    fn add(&mut self, main: f64, domain: Option<f64>) {
        self.main += main;
        self.batches += 1;
        if let Some(d) = domain {
            self.domain += d;
            self.domain_batches += 1;
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.batches > 0).then(|| self.main / self.batches as f64)
    }

    fn domain_mean(&self) -> Option<f64> {
        (self.domain_batches > 0).then(|| self.domain / self.domain_batches as f64)
    }
}

/// One optimization step on `indices`. Returns the batch loss bundle.
#[allow(clippy::too_many_arguments)]
fn step(
    model: &mut SaeconModel<f32>,
    adam: &mut Adam<f32>,
    grads: &mut GradStore<f32>,
    task: Task,
    indices: &[usize],
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    lr: f64,
    label: &str,
) -> Result<LossBundle> {
    grads.zero();
    let inv = 1.0 / indices.len() as f64;
    let (mut main, mut domain, mut has_domain) = (0.0, 0.0, false);
    for &i in indices {
        let mut tape = crate::nn::Tape::new(&model.store);
        let (loss, m, d) = match task {
            Task::Cpc => {
                let ex = &data.cpc_train[i];
                model.cpc_loss(&mut tape, ex, cfg.class_weights.get(ex.label), &cfg.loss)?
            }
            Task::Absa => model.absa_loss(&mut tape, &data.absa_train[i], &cfg.loss)?,
        };
        if !to_f64(tape.scalar(loss)).is_finite() {
            return Err(Error::NonFiniteLoss { batch: label.to_string() });
        }
        main += m * inv;
        if let Some(d) = d {
            domain += d * inv;
            has_domain = true;
        }
        tape.backward(loss).accumulate_into(grads, inv);
    }
    let reg = if cfg.loss.lambda > 0.0 { l2_reg(&model.store) } else { 0.0 };
    add_l2_grad(&model.store, grads, cfg.loss.lambda);
    let domain = has_domain.then_some(domain);
    let bundle = match task {
        Task::Cpc => LossBundle::combine(task, Some(main), None, domain, reg, cfg.loss),
        Task::Absa => LossBundle::combine(task, None, Some(main), domain, reg, cfg.loss),
    };
    if !bundle.total.is_finite() || !grads.all_finite() {
        return Err(Error::NonFiniteLoss { batch: label.to_string() });
    }
    adam.step(&mut model.store, grads, lr);
    Ok(bundle)
}

/// Runs the alternating schedule for `cfg.epochs` CPC passes, evaluating
/// the dev set after each and leaving the best parameters in `model`.
pub fn train(model: &mut SaeconModel<f32>, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.cpc_train.is_empty() || data.cpc_dev.is_empty() {
        return Err(Error::Data("training needs nonempty CPC train and dev sets".into()));
    }
    let use_absa = model.analyzer.is_some() && !data.absa_train.is_empty();
    let n_absa = if use_absa {
        data.absa_train.len()
    } else {
        data.cpc_train.len()
    };
    let batches = AltBatches::new(data.cpc_train.len(), n_absa, cfg.schedule, cfg.seed)?;
    let mut adam = Adam::new(&model.store, cfg.beta1, cfg.beta2);
    let mut grads = GradStore::zeros_like(&model.store);
    let lr_schedule = cfg.lr_schedule();

    let mut log = Vec::new();
    let mut tasks = Vec::new();
    let mut batch_losses = Vec::new();
    let mut best: Option<(usize, f64, EvalReport, crate::nn::ParamStore<f32>)> = None;
    let mut epoch = 1;
    let mut sums = [EpochSums::default(), EpochSums::default()];
    for (k, batch) in batches.enumerate() {
        if batch.task == Task::Absa && !use_absa {
            continue;
        }
        let lr = lr_schedule.lr(epoch - 1);
        let label = format!("epoch {epoch} batch {k} ({})", batch.task.as_str());
        let bundle = step(model, &mut adam, &mut grads, batch.task, &batch.indices, data, cfg, lr, &label)?;
        let slot = usize::from(batch.task == Task::Absa);
        sums[slot].add(bundle.l_c.or(bundle.l_s).unwrap_or(0.0), bundle.l_d);
        tasks.push(batch.task);
        batch_losses.push(bundle.total);
        if !batch.ends_epoch {
            continue;
        }

        let report = evaluate_cpc(model, data.cpc_dev)?;
        let score = cfg.selection.score(&report);
        log::info!(
            "epoch {epoch}: lr {lr:.3e} loss_c {:.4} dev micro-F1 {:.4}",
            sums[0].mean().unwrap_or(f64::NAN),
            report.micro_f1
        );
        let row = |task: Task, s: &EpochSums| MetricRow {
            epoch,
            task: task.as_str().to_string(),
            lr,
            loss_c: if task == Task::Cpc { s.mean() } else { None },
            loss_s: if task == Task::Absa { s.mean() } else { None },
            loss_d: s.domain_mean(),
            dev_micro_f1: report.micro_f1,
            dev_f1_b: report.f1[0],
            dev_f1_w: report.f1[1],
            dev_f1_n: report.f1[2],
        };
        log.push(row(Task::Cpc, &sums[0]));
        if use_absa {
            log.push(row(Task::Absa, &sums[1]));
        }
        sums = [EpochSums::default(), EpochSums::default()];
        let keep = cfg.selection == SelectionMetric::LastEpoch;
        if keep || best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((epoch, score, report, model.store.clone()));
        }
        if epoch == cfg.epochs || cfg.stop_at.is_some_and(|t| score >= t) {
            break;
        }
        epoch += 1;
    }
    let (best_epoch, best_score, best_report, params) = best.expect("at least one epoch ran");
    model.store = params;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_score,
        best_report,
        tasks,
        batch_losses,
    })
}

#[cfg(test)]
mod tests;
