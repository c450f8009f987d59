//! Auxiliary sentiment analyzer, gradient reversal and the domain classifier.

use ndarray::Array2;

use crate::encode::{EdgeIndex, TokenSpan};
use crate::nn::{cast, softmax, Activation, BiLstm, Float, Linear, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Default analyzer: a BiLSTM over `S0` read at two scales. The global view
/// averages every position; the local view averages positions within
/// `window` tokens of the aspect. Both are concatenated and projected to
/// `d_s` through a rectified linear layer.
#[derive(Clone, Debug)]
pub struct SentimentAnalyzer {
    pub bilstm: BiLstm,
    pub project: Linear,
    pub window: usize,
}

impl SentimentAnalyzer {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, d0: usize, hidden: usize, d_s: usize, window: usize) -> Self {
        Self {
            bilstm: BiLstm::new(store, &format!("{name}.bilstm"), d0, hidden),
            project: Linear::new(store, &format!("{name}.project"), 4 * hidden, d_s, Activation::Relu),
            window,
        }
    }

    pub fn width(&self) -> usize {
        self.project.out_dim()
    }

    /// One `1 × d_s` row per aspect. A CPC sentence is read twice, once per
    /// entity; an ABSA sentence once. The graph is accepted for interface
    /// compatibility and unused by this analyzer.
    pub fn analyze<T: Float>(
        &self,
        tape: &mut Tape<'_, T>,
        s0: Var,
        _edges: Option<&EdgeIndex>,
        aspects: &[TokenSpan],
    ) -> Result<Vec<Var>> {
        if !(1..=2).contains(&aspects.len()) {
            return Err(Error::Data(format!(
                "the analyzer takes one or two aspects, got {}",
                aspects.len()
            )));
        }
        let n = tape.value(s0).nrows();
        if let Some(a) = aspects.iter().find(|a| a.first > a.last || a.last >= n) {
            return Err(Error::Data(format!(
                "aspect span ({}, {}) outside a {n}-token sentence",
                a.first, a.last
            )));
        }
        let (f, b) = self.bilstm.forward(tape, s0);
        let states = tape.concat_cols(&[f, b]);
        let all: Vec<usize> = (0..n).collect();
        let global = tape.mean_rows(states, &all);
        Ok(aspects
            .iter()
            .map(|a| {
                let lo = a.first.saturating_sub(self.window);
                let hi = (a.last + self.window).min(n - 1);
                let near: Vec<usize> = (lo..=hi).collect();
                let local = tape.mean_rows(states, &near);
                let both = tape.concat_cols(&[global, local]);
                self.project.forward(tape, both)
            })
            .collect())
    }
}

/// Identity in the forward direction.
pub fn grl_forward<T: Float>(x: &Array2<T>, _alpha: f64) -> Array2<T> {
    x.clone()
}

/// `-alpha` times the upstream gradient.
pub fn grl_backward<T: Float>(upstream: &Array2<T>, alpha: f64) -> Array2<T> {
    let k = cast::<T>(-alpha);
    upstream.mapv(|g| g * k)
}

/// `F_d`: a rectified hidden layer and a 2-way affine output, reached from
/// the analyzer only through gradient reversal.
#[derive(Clone, Debug)]
pub struct DomainClassifier {
    pub hidden: Linear,
    pub output: Linear,
}

impl DomainClassifier {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, d_s: usize, hidden: usize) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), d_s, hidden, Activation::Relu),
            output: Linear::new(store, &format!("{name}.output"), hidden, 2, Activation::Identity),
        }
    }

    /// Domain logits `F_d(GRL(h_s))`, `1 × 2`.
    pub fn logits<T: Float>(&self, tape: &mut Tape<'_, T>, h_s: Var, alpha: f64) -> Var {
        let r = tape.grl(h_s, alpha);
        let z = self.hidden.forward(tape, r);
        self.output.forward(tape, z)
    }

    /// `softmax(F_d(h_s))` as probabilities over (CPC domain, ABSA domain).
    pub fn predict<T: Float>(&self, store: &ParamStore<T>, h_s: &Array2<T>) -> [f64; 2] {
        let mut tape = Tape::new(store);
        let x = tape.constant(h_s.clone());
        let z = self.logits(&mut tape, x, 0.0);
        let p = softmax(tape.value(z).row(0));
        [p[0], p[1]]
    }
}
