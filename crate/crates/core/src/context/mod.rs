//! Global (BiLSTM) and local (syntactic GCN) context features.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::encode::{Direction, EdgeIndex, TokenSpan};
use crate::nn::{cast, BiLstm, Float, ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

/// How incoming messages are combined before the rectifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown aggregation {other:?} (sum|mean)"))),
        }
    }
}

fn span_rows(span: &TokenSpan, n: usize) -> Result<Vec<usize>> {
    if span.first > span.last || span.last >= n {
        return Err(Error::Data(format!(
            "entity span ({}, {}) outside a {n}-token sentence",
            span.first, span.last
        )));
    }
    Ok(span.positions())
}

/// BiLSTM over `S0`; an entity's global context is the average of its
/// forward and backward states.
#[derive(Clone, Debug)]
pub struct GlobalExtractor {
    pub bilstm: BiLstm,
}

impl GlobalExtractor {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, d0: usize, d_g: usize) -> Self {
        Self {
            bilstm: BiLstm::new(store, name, d0, d_g),
        }
    }

    pub fn width(&self) -> usize {
        self.bilstm.hidden()
    }

    /// `½(forward + backward)` for every position, `n × d_g`.
    pub fn states<T: Float>(&self, tape: &mut Tape<'_, T>, s0: Var) -> Var {
        let (f, b) = self.bilstm.forward(tape, s0);
        let sum = tape.add(f, b);
        tape.scale(sum, 0.5)
    }

    /// One `1 × d_g` row per entity; multi-token entities average their span.
    pub fn global_context<T: Float>(
        &self,
        tape: &mut Tape<'_, T>,
        s0: Var,
        entities: &[TokenSpan],
    ) -> Result<Vec<Var>> {
        let n = tape.value(s0).nrows();
        let rows = entities
            .iter()
            .map(|e| span_rows(e, n))
            .collect::<Result<Vec<_>>>()?;
        let states = self.states(tape, s0);
        Ok(rows.iter().map(|r| tape.mean_rows(states, r)).collect())
    }
}

/// One syntactic GCN layer with per-direction weights and gate vectors and
/// per-label biases and gate offsets.
#[derive(Clone, Debug)]
pub struct SgcnLayer {
    /// Indexed by [`Direction::index`]; all three alias one matrix when the
    /// layer is undirected.
    pub weights: [ParamId; 3],
    pub gate_vectors: [ParamId; 3],
    /// `labels × d_out`.
    pub label_bias: ParamId,
    /// `labels × 1`.
    pub label_gate: ParamId,
    pub aggregation: Aggregation,
    pub gated: bool,
    pub d_in: usize,
    pub d_out: usize,
}

impl SgcnLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        n_labels: usize,
        aggregation: Aggregation,
        gated: bool,
        directed: bool,
    ) -> Self {
        let (weights, gate_vectors) = if directed {
            let w = Direction::ALL.map(|d| store.weight(&format!("{name}.w.{d}"), d_out, d_in));
            let g = Direction::ALL.map(|d| store.weight(&format!("{name}.gate.{d}"), 1, d_in));
            (w, g)
        } else {
            let w = store.weight(&format!("{name}.w.shared"), d_out, d_in);
            let g = store.weight(&format!("{name}.gate.shared"), 1, d_in);
            ([w; 3], [g; 3])
        };
        Self {
            weights,
            gate_vectors,
            label_bias: store.bias(&format!("{name}.label_bias"), n_labels, d_out),
            label_gate: store.bias(&format!("{name}.label_gate"), n_labels, 1),
            aggregation,
            gated,
            d_in,
            d_out,
        }
    }

    /// `σ(h_u · β_direction + γ_label)`, or 1 for an ungated layer.
    pub fn edge_gate<T: Float>(&self, store: &ParamStore<T>, h_u: ArrayView1<T>, direction: Direction, label: usize) -> T {
        if !self.gated {
            return T::one();
        }
        let beta = store.value(self.gate_vectors[direction.index()]);
        let gamma = store.value(self.label_gate)[[label, 0]];
        let z = h_u.dot(&beta.row(0)) + gamma;
        T::one() / (T::one() + (-z).exp())
    }

    /// `h' = ρ(Σ_{u→v} g_uv (W_dir h_u + b_label))` over every edge into `v`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, h: Var, edges: &EdgeIndex) -> Var {
        let n = tape.value(h).nrows();
        assert_eq!(n, edges.n, "sgcn: {n} rows for a {}-vertex graph", edges.n);
        let bias_table = tape.param(self.label_bias);
        let gate_table = tape.param(self.label_gate);
        let mut parts = Vec::with_capacity(3);
        for d in Direction::ALL {
            let sel: Vec<usize> = (0..edges.len())
                .filter(|&k| edges.directions[k] == d.index())
                .collect();
            if sel.is_empty() {
                continue;
            }
            let sources: Vec<usize> = sel.iter().map(|&k| edges.sources[k]).collect();
            let targets: Vec<usize> = sel.iter().map(|&k| edges.targets[k]).collect();
            let labels: Vec<usize> = sel.iter().map(|&k| edges.labels[k]).collect();

            let w = tape.param(self.weights[d.index()]);
            let projected = tape.linear(h, w, None);
            let from = tape.gather_rows(projected, &sources);
            let bias = tape.gather_rows(bias_table, &labels);
            let mut msg = tape.add(from, bias);
            if self.gated {
                let beta = tape.param(self.gate_vectors[d.index()]);
                let scores = tape.linear(h, beta, None);
                let src_scores = tape.gather_rows(scores, &sources);
                let offsets = tape.gather_rows(gate_table, &labels);
                let z = tape.add(src_scores, offsets);
                let g = tape.sigmoid(z);
                msg = tape.scale_rows(msg, g);
            }
            parts.push(tape.scatter_add_rows(msg, &targets, n));
        }
        let mut total = if parts.is_empty() {
            tape.constant(Array2::zeros((n, self.d_out)))
        } else {
            tape.add_n(&parts)
        };
        if self.aggregation == Aggregation::Mean {
            let deg = edges.in_degrees();
            let inv: Array2<T> = Array2::from_shape_fn((n, 1), |(v, _)| cast::<T>(1.0 / deg[v].max(1) as f64));
            let inv = tape.constant(inv);
            total = tape.scale_rows(total, inv);
        }
        tape.relu(total)
    }
}

/// Stacked SGCN layers; the first input width is `d0`.
#[derive(Clone, Debug)]
pub struct SgcnStack {
    pub layers: Vec<SgcnLayer>,
}

impl SgcnStack {
    /// `widths` lists every layer boundary, e.g. `[768, 256, 240]` for two
    /// layers.
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        widths: &[usize],
        n_labels: usize,
        aggregation: Aggregation,
        gated: bool,
        directed: bool,
    ) -> Self {
        assert!(widths.len() >= 2, "an SGCN stack needs at least one layer");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                SgcnLayer::new(
                    store,
                    &format!("{name}.{j}"),
                    w[0],
                    w[1],
                    n_labels,
                    aggregation,
                    gated,
                    directed,
                )
            })
            .collect();
        Self { layers }
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn width(&self) -> usize {
        self.layers.last().expect("non-empty stack").d_out
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Last layer's vertex states, `n × d_l`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, s0: Var, edges: &EdgeIndex) -> Var {
        self.layers
            .iter()
            .fold(s0, |h, layer| layer.forward(tape, h, edges))
    }

    /// One `1 × d_l` row per entity, averaged over its span vertices.
    pub fn local_context<T: Float>(
        &self,
        tape: &mut Tape<'_, T>,
        s0: Var,
        edges: &EdgeIndex,
        entities: &[TokenSpan],
    ) -> Result<Vec<Var>> {
        let n = tape.value(s0).nrows();
        if tape.value(s0).ncols() != self.d_in() {
            return Err(Error::shape(
                format!("input width {}", self.d_in()),
                tape.value(s0).ncols().to_string(),
            ));
        }
        if edges.n != n || edges.sources.iter().chain(&edges.targets).any(|&v| v >= n) {
            return Err(Error::shape(format!("graph over {n} vertices"), format!("{} vertices", edges.n)));
        }
        let n_labels = tape.params().get(self.layers[0].label_bias).value.nrows();
        if let Some(&l) = edges.labels.iter().find(|&&l| l >= n_labels) {
            return Err(Error::shape(format!("label ids below {n_labels}"), format!("label id {l}")));
        }
        if edges.n != n || edges.sources.iter().chain(&edges.targets).any(|&v| v >= n) {
            return Err(Error::shape(format!("graph over {n} vertices"), format!("{} vertices", edges.n)));
        }
        let n_labels = tape.params().get(self.layers[0].label_bias).value.nrows();
        if let Some(&l) = edges.labels.iter().find(|&&l| l >= n_labels) {
            return Err(Error::shape(format!("label ids below {n_labels}"), format!("label id {l}")));
        }
        let rows = entities
            .iter()
            .map(|e| span_rows(e, n))
            .collect::<Result<Vec<_>>>()?;
        let h = self.forward(tape, s0, edges);
        Ok(rows.iter().map(|r| tape.mean_rows(h, r)).collect())
    }
}
