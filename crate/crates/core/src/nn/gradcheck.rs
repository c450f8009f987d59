use ndarray::Array2;

use super::params::ParamStore;
use super::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub epsilon: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Set when an analytic gradient was not finite.
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate(store: &ParamStore<f64>, f: &impl Fn(&mut Tape<'_, f64>) -> Var) -> f64 {
    let mut tape = Tape::new(store);
    let loss = f(&mut tape);
    tape.scalar(loss)
}

/// Compares reverse-mode parameter gradients of the scalar built by `f`
/// against central differences `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// Parameters with more than `max_entries` scalars are checked on an evenly
/// strided subset of that size.
pub fn grad_check(
    store: &mut ParamStore<f64>,
    epsilon: f64,
    tolerance: f64,
    max_entries: usize,
    f: impl Fn(&mut Tape<'_, f64>) -> Var,
) -> GradCheckReport {
    let analytic: Vec<Option<Array2<f64>>> = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape);
        let grads = tape.backward(loss);
        store.ids().map(|id| grads.param(id).cloned()).collect()
    };

    let mut report = GradCheckReport {
        params: Vec::new(),
        epsilon,
        tolerance,
        pass: true,
        failure: None,
    };

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).trainable {
            continue;
        }
        let name = store.get(id).name.clone();
        let dim = store.value(id).dim();
        let grad = analytic[id.index()]
            .clone()
            .unwrap_or_else(|| Array2::zeros(dim));
        if let Some(bad) = grad.iter().find(|v| !v.is_finite()) {
            report.pass = false;
            report.failure = Some(format!("{name}: analytic gradient {bad}"));
            continue;
        }

        let total = dim.0 * dim.1;
        let stride = total.div_ceil(max_entries.max(1)).max(1);
        let mut check = ParamCheck {
            name,
            max_rel_error: 0.0,
            entries_checked: 0,
        };
        for flat in (0..total).step_by(stride) {
            let idx = (flat / dim.1, flat % dim.1);
            let original = store.value(id)[idx];
            store.get_mut(id).value[idx] = original + epsilon;
            let plus = evaluate(store, &f);
            store.get_mut(id).value[idx] = original - epsilon;
            let minus = evaluate(store, &f);
            store.get_mut(id).value[idx] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(grad[idx], numeric);
            check.max_rel_error = check.max_rel_error.max(err);
            check.entries_checked += 1;
        }
        if !(check.max_rel_error < tolerance) {
            report.pass = false;
        }
        report.params.push(check);
    }
    report
}

/// Central-difference gradient of the scalar `f(x)` with respect to the input
/// matrix `x`, paired with the reverse-mode gradient. Returns
/// `(analytic, numeric)`.
pub fn input_gradients(
    store: &ParamStore<f64>,
    x: &Array2<f64>,
    epsilon: f64,
    f: impl Fn(&mut Tape<'_, f64>, Var) -> Var,
) -> (Array2<f64>, Array2<f64>) {
    let analytic = {
        let mut tape = Tape::new(store);
        let xv = tape.variable(x.clone());
        let loss = f(&mut tape, xv);
        let grads = tape.backward(loss);
        grads
            .wrt(xv)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(x.dim()))
    };
    let eval = |x: Array2<f64>| {
        let mut tape = Tape::new(store);
        let xv = tape.variable(x);
        let loss = f(&mut tape, xv);
        tape.scalar(loss)
    };
    let mut numeric = Array2::zeros(x.dim());
    for idx in ndarray::indices(x.dim()) {
        let mut plus = x.clone();
        plus[idx] += epsilon;
        let mut minus = x.clone();
        minus[idx] -= epsilon;
        numeric[idx] = (eval(plus) - eval(minus)) / (2.0 * epsilon);
    }
    (analytic, numeric)
}
