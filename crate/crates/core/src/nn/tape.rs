use std::borrow::Cow;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use super::params::{GradStore, ParamId, ParamStore};
use super::{cast, to_f64, Float};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[allow(dead_code)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    AddRow(Var, Var),
    AddN(Vec<Var>),
    Mul(Var, Var),
    Scale(Var, T),
    ScaleRows(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    MeanRows(Var, Vec<usize>),
    RowDot(Var, Var),
    SumSquares(Var),
    SumAll(Var),
    SoftmaxCe { logits: Var, gold: usize, weight: T, probs: Vec<T> },
    Grl(Var, T),
}

struct Node<'a, T: Float> {
    value: Cow<'a, Array2<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a computation for one reverse sweep.
pub struct Tape<'a, T: Float> {
    params: &'a ParamStore<T>,
    nodes: Vec<Node<'a, T>>,
    bound: Vec<Option<Var>>,
}

fn shape_str<T>(a: &Array2<T>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

impl<'a, T: Float> Tape<'a, T> {
    pub fn new(params: &'a ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            bound: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'a ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        let a = self.value(v);
        debug_assert_eq!(a.dim(), (1, 1));
        a[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Grads::wrt`].
    pub fn variable(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let p = self.params.get(id);
        self.nodes.push(Node {
            value: Cow::Borrowed(&p.value),
            op: Op::Param(id),
            needs_grad: p.trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound[id.index()] = Some(v);
        v
    }

    /// `x · Wᵀ (+ b)` for `x: n × in`, `W: out × in`, `b: 1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(
            xv.ncols(),
            wv.ncols(),
            "linear: input {} does not match weight {}",
            shape_str(xv),
            shape_str(wv)
        );
        let mut y = Array2::zeros((xv.nrows(), wv.nrows()));
        general_mat_mul(T::one(), xv, &wv.t(), T::zero(), &mut y);
        if let Some(b) = b {
            let bv = self.value(b);
            assert_eq!(bv.dim(), (1, wv.nrows()), "linear: bias shape");
            y += bv;
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let ng = self.needs(&deps);
        self.push(y, Op::Linear { x, w, b }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add: shapes differ");
        let y = self.value(a) + self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(y, Op::Add(a, b), ng)
    }

    /// Adds the `1 × d` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        assert_eq!(self.value(r).nrows(), 1, "add_row: not a row");
        let y = self.value(a) + self.value(r);
        let ng = self.needs(&[a, r]);
        self.push(y, Op::AddRow(a, r), ng)
    }

    pub fn add_n(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let mut y = self.value(vars[0]).clone();
        for v in &vars[1..] {
            y += self.value(*v);
        }
        let ng = self.needs(vars);
        self.push(y, Op::AddN(vars.to_vec()), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul: shapes differ");
        let y = self.value(a) * self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(y, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = cast::<T>(c);
        let y = self.value(a).mapv(|v| v * c);
        let ng = self.needs(&[a]);
        self.push(y, Op::Scale(a, c), ng)
    }

    /// Multiplies row `i` of `a` by `s[i, 0]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let av = self.value(a);
        let sv = self.value(s);
        assert_eq!(sv.dim(), (av.nrows(), 1), "scale_rows: factor shape");
        let y = av * sv;
        let ng = self.needs(&[a, s]);
        self.push(y, Op::ScaleRows(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self
            .value(a)
            .mapv(|v| T::one() / (T::one() + (-v).exp()));
        let ng = self.needs(&[a]);
        self.push(y, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(|v| v.tanh());
        let ng = self.needs(&[a]);
        self.push(y, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.needs(&[a]);
        self.push(y, Op::Relu(a), ng)
    }

    pub fn concat_cols(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        if vars.len() == 1 {
            return vars[0];
        }
        let views: Vec<_> = vars.iter().map(|v| self.value(*v).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        let ng = self.needs(vars);
        self.push(y, Op::ConcatCols(vars.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        if vars.len() == 1 {
            return vars[0];
        }
        let views: Vec<_> = vars.iter().map(|v| self.value(*v).view()).collect();
        let y = ndarray::concatenate(Axis(0), &views).expect("concat_rows: widths differ");
        let ng = self.needs(vars);
        self.push(y, Op::ConcatRows(vars.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let y = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.needs(&[a]);
        self.push(y, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let y = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.needs(&[a]);
        self.push(y, Op::SliceRows(a, start), ng)
    }

    /// Row `k` of the result is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut y = Array2::zeros((idx.len(), av.ncols()));
        for (k, &i) in idx.iter().enumerate() {
            y.row_mut(k).assign(&av.row(i));
        }
        let ng = self.needs(&[a]);
        self.push(y, Op::Gather(a, idx.to_vec()), ng)
    }

    /// Sums row `k` of `a` into row `targets[k]` of an `n`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, targets: &[usize], n: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), targets.len(), "scatter_add_rows: target count");
        let mut y = Array2::zeros((n, av.ncols()));
        for (k, &t) in targets.iter().enumerate() {
            let mut row = y.row_mut(t);
            row += &av.row(k);
        }
        let ng = self.needs(&[a]);
        self.push(y, Op::ScatterAdd(a, targets.to_vec()), ng)
    }

    /// Mean of the listed rows as a `1 × d` row.
    pub fn mean_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "mean_rows: empty row set");
        let av = self.value(a);
        let mut y = Array2::zeros((1, av.ncols()));
        for &r in rows {
            let mut out = y.row_mut(0);
            out += &av.row(r);
        }
        let inv = cast::<T>(1.0 / rows.len() as f64);
        y.mapv_inplace(|v| v * inv);
        let ng = self.needs(&[a]);
        self.push(y, Op::MeanRows(a, rows.to_vec()), ng)
    }

    /// Per-row inner product, `n × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.dim(), bv.dim(), "row_dot: shapes differ");
        let y = (av * bv).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(&[a, b]);
        self.push(y, Op::RowDot(a, b), ng)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().fold(T::zero(), |acc, &v| acc + v * v);
        let ng = self.needs(&[a]);
        self.push(Array2::from_elem((1, 1), total), Op::SumSquares(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        let ng = self.needs(&[a]);
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a), ng)
    }

    /// `-weight · ln softmax(logits)[gold]` for a `1 × k` logit row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: usize, weight: f64) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), 1, "softmax_cross_entropy: expects one row");
        assert!(gold < lv.ncols(), "softmax_cross_entropy: gold out of range");
        let max = lv.iter().cloned().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = lv.iter().map(|&v| (v - max).exp()).collect();
        let total = exps.iter().cloned().fold(T::zero(), |a, b| a + b);
        let probs: Vec<T> = exps.iter().map(|&e| e / total).collect();
        let w = cast::<T>(weight);
        let loss = -w * (lv[[0, gold]] - max - total.ln());
        let ng = self.needs(&[logits]);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCe {
                logits,
                gold,
                weight: w,
                probs,
            },
            ng,
        )
    }

    /// Gradient reversal: identity forward, `-alpha` times the upstream
    /// gradient backward.
    pub fn grl(&mut self, a: Var, alpha: f64) -> Var {
        let y = self.value(a).clone();
        let ng = self.needs(&[a]);
        self.push(y, Op::Grl(a, cast::<T>(alpha)), ng)
    }

    /// Reverse sweep from the `1 × 1` node `loss`.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward: loss must be 1x1");
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads {
            nodes: grads,
            bound: self.bound.clone(),
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Array2<T>>], v: Var) -> Option<&'g mut Array2<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let dim = self.nodes[v.0].value.dim();
        Some(grads[v.0].get_or_insert_with(|| Array2::zeros(dim)))
    }

    fn propagate(&self, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                if let Some(gx) = self.slot(grads, *x) {
                    general_mat_mul(T::one(), g, wv, T::one(), gx);
                }
                if let Some(gw) = self.slot(grads, *w) {
                    general_mat_mul(T::one(), &g.t(), xv, T::one(), gw);
                }
                if let Some(b) = b {
                    if let Some(gb) = self.slot(grads, *b) {
                        *gb += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    *ga += g;
                }
                if let Some(gb) = self.slot(grads, *b) {
                    *gb += g;
                }
            }
            Op::AddRow(a, r) => {
                if let Some(ga) = self.slot(grads, *a) {
                    *ga += g;
                }
                if let Some(gr) = self.slot(grads, *r) {
                    *gr += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
                }
            }
            Op::AddN(vars) => {
                for v in vars {
                    if let Some(gv) = self.slot(grads, *v) {
                        *gv += g;
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if let Some(ga) = self.slot(grads, *a) {
                    ndarray::Zip::from(ga).and(g).and(bv).for_each(|d, &u, &o| *d += u * o);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    ndarray::Zip::from(gb).and(g).and(av).for_each(|d, &u, &o| *d += u * o);
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.scaled_add(*c, g);
                }
            }
            Op::ScaleRows(a, s) => {
                let av = self.value(*a);
                let sv = self.value(*s);
                if let Some(ga) = self.slot(grads, *a) {
                    *ga += &(g * sv);
                }
                if let Some(gs) = self.slot(grads, *s) {
                    *gs += &(g * av).sum_axis(Axis(1)).insert_axis(Axis(1));
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, *a) {
                    ndarray::Zip::from(ga)
                        .and(g)
                        .and(y.as_ref())
                        .for_each(|d, &u, &y| *d += u * y * (T::one() - y));
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, *a) {
                    ndarray::Zip::from(ga)
                        .and(g)
                        .and(y.as_ref())
                        .for_each(|d, &u, &y| *d += u * (T::one() - y * y));
                }
            }
            Op::Relu(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, *a) {
                    ndarray::Zip::from(ga).and(g).and(y.as_ref()).for_each(|d, &u, &y| {
                        if y > T::zero() {
                            *d += u
                        }
                    });
                }
            }
            Op::ConcatCols(vars) => {
                let mut off = 0;
                for v in vars {
                    let w = self.value(*v).ncols();
                    if let Some(gv) = self.slot(grads, *v) {
                        *gv += &g.slice(s![.., off..off + w]);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(vars) => {
                let mut off = 0;
                for v in vars {
                    let h = self.value(*v).nrows();
                    if let Some(gv) = self.slot(grads, *v) {
                        *gv += &g.slice(s![off..off + h, ..]);
                    }
                    off += h;
                }
            }
            Op::SliceCols(a, start) => {
                let w = g.ncols();
                if let Some(ga) = self.slot(grads, *a) {
                    let mut view = ga.slice_mut(s![.., *start..*start + w]);
                    view += g;
                }
            }
            Op::SliceRows(a, start) => {
                let h = g.nrows();
                if let Some(ga) = self.slot(grads, *a) {
                    let mut view = ga.slice_mut(s![*start..*start + h, ..]);
                    view += g;
                }
            }
            Op::Gather(a, idx) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, &r) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(r);
                        row += &g.row(k);
                    }
                }
            }
            Op::ScatterAdd(a, targets) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, &t) in targets.iter().enumerate() {
                        let mut row = ga.row_mut(k);
                        row += &g.row(t);
                    }
                }
            }
            Op::MeanRows(a, rows) => {
                let inv = cast::<T>(1.0 / rows.len() as f64);
                if let Some(ga) = self.slot(grads, *a) {
                    for &r in rows {
                        ga.row_mut(r).scaled_add(inv, &g.row(0));
                    }
                }
            }
            Op::RowDot(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if let Some(ga) = self.slot(grads, *a) {
                    *ga += &(bv * g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    *gb += &(av * g);
                }
            }
            Op::SumSquares(a) => {
                let av = self.value(*a);
                let two_g = g[[0, 0]] + g[[0, 0]];
                if let Some(ga) = self.slot(grads, *a) {
                    ga.scaled_add(two_g, av);
                }
            }
            Op::SumAll(a) => {
                let u = g[[0, 0]];
                if let Some(ga) = self.slot(grads, *a) {
                    ga.mapv_inplace(|d| d + u);
                }
            }
            Op::SoftmaxCe {
                logits,
                gold,
                weight,
                probs,
            } => {
                let u = g[[0, 0]] * *weight;
                if let Some(gl) = self.slot(grads, *logits) {
                    for (k, &p) in probs.iter().enumerate() {
                        let target = if k == *gold { T::one() } else { T::zero() };
                        gl[[0, k]] += u * (p - target);
                    }
                }
            }
            Op::Grl(a, alpha) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.scaled_add(-*alpha, g);
                }
            }
        }
    }
}

/// Result of a reverse sweep.
pub struct Grads<T> {
    nodes: Vec<Option<Array2<T>>>,
    bound: Vec<Option<Var>>,
}

impl<T: Float> Grads<T> {
    /// Gradient with respect to a recorded node, if it received one.
    pub fn wrt(&self, v: Var) -> Option<&Array2<T>> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<T>> {
        self.bound[id.index()].and_then(|v| self.nodes[v.0].as_ref())
    }

    /// `store += factor · grads` for every parameter touched by the sweep.
    pub fn accumulate_into(&self, store: &mut GradStore<T>, factor: f64) {
        let f = cast::<T>(factor);
        for (i, v) in self.bound.iter().enumerate() {
            if let Some(g) = v.and_then(|v| self.nodes[v.0].as_ref()) {
                store.get_mut(ParamId(i)).scaled_add(f, g);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes
            .iter()
            .flatten()
            .flat_map(|a| a.iter())
            .map(|&v| to_f64(v).abs())
            .fold(0.0, f64::max)
    }
}
