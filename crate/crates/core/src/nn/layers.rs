use ndarray::{Array1, Array2, ArrayView1};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Float;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, x)`.
    Relu,
    /// No activation; used for final classifier layers whose softmax is
    /// applied by the loss.
    Identity,
}

/// Dense layer `activation(W x + b)` over one vector, outside any tape.
pub fn linear_forward<T: Float>(
    x: ArrayView1<'_, T>,
    weight: &Array2<T>,
    bias: ArrayView1<'_, T>,
    activation: Activation,
) -> Result<Array1<T>> {
    if weight.ncols() != x.len() || weight.nrows() != bias.len() {
        return Err(Error::shape(
            format!("weight {}x{} with bias {}", weight.nrows(), x.len(), weight.nrows()),
            format!(
                "weight {}x{} with input {} and bias {}",
                weight.nrows(),
                weight.ncols(),
                x.len(),
                bias.len()
            ),
        ));
    }
    let y = weight.dot(&x) + bias;
    Ok(match activation {
        Activation::Relu => y.mapv(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Identity => y,
    })
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        Self {
            weight: store.weight(&format!("{name}.weight"), out_dim, in_dim),
            bias: store.bias(&format!("{name}.bias"), 1, out_dim),
            activation,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Applies the layer to each row of `x`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.linear(x, w, Some(b));
        match self.activation {
            Activation::Relu => tape.relu(y),
            Activation::Identity => y,
        }
    }
}

/// One LSTM direction. Gate blocks are ordered input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    hidden: usize,
}

impl Lstm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, in_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: store.weight(&format!("{name}.w_ih"), 4 * hidden, in_dim),
            w_hh: store.weight(&format!("{name}.w_hh"), 4 * hidden, hidden),
            bias: store.bias(&format!("{name}.bias"), 1, 4 * hidden),
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs over the rows of `x` (`n × in`), left to right unless `reverse`.
    /// Returns the hidden state at each position, in position order.
    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, x: Var, reverse: bool) -> Vec<Var> {
        let n = tape.value(x).nrows();
        let h = self.hidden;
        let w_ih = tape.param(self.w_ih);
        let w_hh = tape.param(self.w_hh);
        let b = tape.param(self.bias);
        let projected = tape.linear(x, w_ih, Some(b));

        let mut states: Vec<Option<Var>> = vec![None; n];
        let mut prev: Option<(Var, Var)> = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let mut pre = tape.slice_rows(projected, t, 1);
            if let Some((h_prev, _)) = prev {
                let rec = tape.linear(h_prev, w_hh, None);
                pre = tape.add(pre, rec);
            }
            let i_pre = tape.slice_cols(pre, 0, h);
            let f_pre = tape.slice_cols(pre, h, h);
            let g_pre = tape.slice_cols(pre, 2 * h, h);
            let o_pre = tape.slice_cols(pre, 3 * h, h);
            let i = tape.sigmoid(i_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let mut c = tape.mul(i, g);
            if let Some((_, c_prev)) = prev {
                let f = tape.sigmoid(f_pre);
                let kept = tape.mul(f, c_prev);
                c = tape.add(kept, c);
            }
            let c_act = tape.tanh(c);
            let h_t = tape.mul(o, c_act);
            states[t] = Some(h_t);
            prev = Some((h_t, c));
        }
        states.into_iter().map(|s| s.expect("every position visited")).collect()
    }
}

/// Two independent LSTM directions over the same sequence.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, in_dim: usize, hidden: usize) -> Self {
        Self {
            forward: Lstm::new(store, &format!("{name}.fwd"), in_dim, hidden),
            backward: Lstm::new(store, &format!("{name}.bwd"), in_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    /// Forward and backward hidden states, each `n × hidden`.
    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, x: Var) -> (Var, Var) {
        let f = self.forward.forward(tape, x, false);
        let b = self.backward.forward(tape, x, true);
        let f = tape.concat_rows(&f);
        let b = tape.concat_rows(&b);
        (f, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sigmoid, ParamStore};
    use ndarray::{arr1, arr2};

    #[test]
    fn linear_forward_examples() {
        let z = linear_forward(
            arr1(&[1.0f64, 2.0]).view(),
            &Array2::zeros((3, 2)),
            Array1::zeros(3).view(),
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(z, arr1(&[0.0, 0.0, 0.0]));

        let y = linear_forward(
            arr1(&[-2.0f64, 3.0]).view(),
            &arr2(&[[1.0, 0.0], [0.0, 1.0]]),
            Array1::zeros(2).view(),
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(y, arr1(&[0.0, 3.0]));
    }

    #[test]
    fn linear_forward_names_both_shapes() {
        let err = linear_forward(
            arr1(&[1.0f64, 2.0, 3.0]).view(),
            &Array2::zeros((2, 2)),
            Array1::zeros(2).view(),
            Activation::Identity,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x2") && msg.contains("input 3"), "{msg}");
    }

    #[test]
    fn zero_lstm_gives_zero_states() {
        let mut store = ParamStore::<f64>::new(0);
        let lstm = BiLstm::new(&mut store, "l", 3, 4);
        store.zero_all();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Array2::zeros((5, 3)));
        let (f, b) = lstm.forward(&mut tape, x);
        assert!(tape.value(f).iter().chain(tape.value(b).iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_matches_closed_form() {
        let mut store = ParamStore::<f64>::new(0);
        let lstm = Lstm::new(&mut store, "l", 1, 1);
        // gates i, f, g, o with scalar weights on a scalar input
        store.get_mut(lstm.w_ih).value = arr2(&[[0.5], [0.0], [-1.0], [2.0]]);
        store.get_mut(lstm.bias).value = arr2(&[[0.1, 0.0, 0.3, -0.2]]);
        let x = 0.8;
        let i = sigmoid(0.5 * x + 0.1);
        let g = (-1.0f64 * x + 0.3).tanh();
        let o = sigmoid(2.0 * x - 0.2);
        let expected = o * (i * g).tanh();

        let mut tape = Tape::new(&store);
        let xv = tape.constant(arr2(&[[x]]));
        let h = lstm.forward(&mut tape, xv, false);
        assert!((tape.value(h[0])[[0, 0]] - expected).abs() < 1e-14);
    }

    #[test]
    fn backward_direction_is_forward_on_reversed_input() {
        let mut store = ParamStore::<f64>::new(3);
        let lstm = Lstm::new(&mut store, "l", 2, 3);
        let x = arr2(&[[0.1, -0.4], [0.7, 0.2], [-0.3, 0.9], [0.5, 0.5]]);
        let mut rev = x.clone();
        rev.invert_axis(ndarray::Axis(0));

        let mut tape = Tape::new(&store);
        let xv = tape.constant(x);
        let rv = tape.constant(rev);
        let backward = lstm.forward(&mut tape, xv, true);
        let forward_on_rev = lstm.forward(&mut tape, rv, false);
        for t in 0..4 {
            assert_eq!(tape.value(backward[t]), tape.value(forward_on_rev[3 - t]));
        }
    }
}
