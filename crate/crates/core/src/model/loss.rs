use serde::{Deserialize, Serialize};

use crate::corpus::{ClassWeights, CpcLabel, DomainLabel, Task};
use crate::nn::{cast, Float, GradStore, ParamKind, ParamStore};
use crate::{Error, Result};

/// The λ-set of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// L2 coefficient.
    pub lambda: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            lambda_s: 1.0,
            lambda_d: 1.0,
        }
    }
}

/// Loss components of one batch. Components that the task does not use are
/// `None` and contribute nothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub task: Task,
    pub l_c: Option<f64>,
    pub l_s: Option<f64>,
    pub l_d: Option<f64>,
    pub reg: f64,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossBundle {
    /// `L_c + λ_s L_s + λ_d L_d + λ reg` over the present components.
    pub fn combine(task: Task, l_c: Option<f64>, l_s: Option<f64>, l_d: Option<f64>, reg: f64, weights: LossWeights) -> Self {
        let mut total = 0.0;
        if let Some(c) = l_c {
            total += c;
        }
        if let Some(s) = l_s {
            total += weights.lambda_s * s;
        }
        if let Some(d) = l_d {
            total += weights.lambda_d * d;
        }
        total += weights.lambda * reg;
        Self {
            task,
            l_c,
            l_s,
            l_d,
            reg,
            weights,
            total,
        }
    }

    /// Recomputes the total from the stored components.
    pub fn recomputed(&self) -> f64 {
        Self::combine(self.task, self.l_c, self.l_s, self.l_d, self.reg, self.weights).total
    }
}

/// Batch objective from head probabilities.
///
/// `probs[k]` is the task distribution for instance `k` (over CPC labels or
/// sentiments), `domain[k]` its domain predictions (two per CPC instance, one
/// per ABSA instance, empty when the domain branch is off). Class weights
/// apply to CPC only. Each term is the mean over the batch.
pub fn total_loss(
    task: Task,
    probs: &[[f64; 3]],
    golds: &[Option<usize>],
    domain: &[Vec<[f64; 2]>],
    domain_gold: DomainLabel,
    class_weights: &ClassWeights,
    weights: LossWeights,
    reg: f64,
) -> Result<LossBundle> {
    if probs.len() != golds.len() || (!domain.is_empty() && domain.len() != probs.len()) {
        return Err(Error::shape(
            format!("{} golds and domain rows", probs.len()),
            format!("{} golds, {} domain rows", golds.len(), domain.len()),
        ));
    }
    if probs.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let n = probs.len() as f64;
    let mut task_loss = 0.0;
    for (k, (p, g)) in probs.iter().zip(golds).enumerate() {
        let g = g.ok_or_else(|| Error::Data(format!("instance {k} has no gold label")))?;
        if g >= 3 {
            return Err(Error::Data(format!("gold class {g} out of range")));
        }
        let w = match task {
            Task::Cpc => class_weights.get(CpcLabel::from_index(g).expect("checked")),
            Task::Absa => 1.0,
        };
        task_loss -= w * p[g].ln();
    }
    task_loss /= n;
    let l_d = (!domain.is_empty() && domain.iter().all(|d| !d.is_empty())).then(|| {
        domain
            .iter()
            .map(|d| d.iter().map(|p| -p[domain_gold.index()].ln()).sum::<f64>() / d.len() as f64)
            .sum::<f64>()
            / n
    });
    let bundle = match task {
        Task::Cpc => LossBundle::combine(task, Some(task_loss), None, l_d, reg, weights),
        Task::Absa => LossBundle::combine(task, None, Some(task_loss), l_d, reg, weights),
    };
    if task == Task::Absa && weights.lambda_s == 0.0 && weights.lambda_d == 0.0 && weights.lambda == 0.0 {
        log::warn!("all loss coefficients are zero for the ABSA task; the batch has no effect");
    }
    Ok(bundle)
}

/// Sum of squares over trainable weight matrices (biases excluded).
pub fn l2_reg<T: Float>(store: &ParamStore<T>) -> f64 {
    store
        .iter()
        .filter(|(_, p)| p.trainable && p.kind == ParamKind::Weight)
        .map(|(_, p)| p.value.iter().map(|&v| crate::nn::to_f64(v * v)).sum::<f64>())
        .sum()
}

/// Adds the gradient of `lambda · l2_reg` to `grads`.
pub fn add_l2_grad<T: Float>(store: &ParamStore<T>, grads: &mut GradStore<T>, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let k = cast::<T>(2.0 * lambda);
    for (id, p) in store.iter() {
        if p.trainable && p.kind == ParamKind::Weight {
            grads.get_mut(id).scaled_add(k, &p.value);
        }
    }
}
