//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! Every value on a [`Tape`] is a 2-D array; vectors are `1 × d` rows and a
//! sequence of `n` vectors is an `n × d` matrix. Parameters live in a
//! [`ParamStore`] and are bound to a tape on first use, so a parameter used at
//! several places (an LSTM recurrence, say) accumulates one gradient.
//!
//! Training runs in `f32`. Gradient verification runs the same code in `f64`.

mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{Array2, ArrayView1, LinalgScalar, ScalarOperand};
use num_traits::{FromPrimitive, ToPrimitive};

pub use gradcheck::{grad_check, input_gradients, GradCheckReport, ParamCheck};
pub use layers::{linear_forward, Activation, BiLstm, Linear, Lstm};
pub use optim::{Adam, StepLr};
pub use params::{GradStore, Param, ParamId, ParamKind, ParamStore};
pub use tape::{Grads, Tape, Var};

/// Scalar type usable for parameters and activations.
pub trait Float:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

#[inline]
pub fn cast<T: Float>(x: f64) -> T {
    T::from_f64(x).expect("finite conversion")
}

#[inline]
pub fn to_f64<T: Float>(x: T) -> f64 {
    x.to_f64().expect("finite conversion")
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax of a row of logits, in `f64`.
pub fn softmax<T: Float>(logits: ArrayView1<'_, T>) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|&v| to_f64(v)).collect();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln softmax(logits)[i]` for every `i`, stable for large margins.
pub fn log_softmax<T: Float>(logits: ArrayView1<'_, T>) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|&v| to_f64(v)).collect();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    xs.into_iter().map(|v| v - lse).collect()
}

/// Class-weighted cross entropy of one prediction:
/// `-weight * ln softmax(logits)[gold]`.
pub fn softmax_cross_entropy<T: Float>(
    logits: ArrayView1<'_, T>,
    gold: usize,
    class_weight: f64,
) -> crate::Result<f64> {
    if logits.len() < 2 {
        return Err(crate::Error::shape("at least 2 logits", logits.len().to_string()));
    }
    if gold >= logits.len() {
        return Err(crate::Error::Data(format!(
            "gold class {gold} out of range for {} classes",
            logits.len()
        )));
    }
    if class_weight <= 0.0 {
        return Err(crate::Error::Data(format!(
            "class weight must be positive, got {class_weight}"
        )));
    }
    Ok(-class_weight * log_softmax(logits)[gold])
}

/// Index of the largest entry; the earliest index wins ties.
pub fn argmax<T: Float>(row: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn cast_array<A: Float, B: Float>(a: &Array2<A>) -> Array2<B> {
    a.mapv(|v| cast::<B>(to_f64(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn uniform_logits_give_ln3() {
        let l = softmax_cross_entropy(arr1(&[0.0f64, 0.0, 0.0]).view(), 1, 1.0).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let w = softmax_cross_entropy(arr1(&[0.0f64, 0.0, 0.0]).view(), 1, 4.0).unwrap();
        assert!((w - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 100.0, 1000.0] {
            let l = softmax_cross_entropy(arr1(&[margin, 0.0, 0.0f64]).view(), 0, 1.0).unwrap();
            assert!(l <= prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn gold_out_of_range_is_rejected() {
        assert!(softmax_cross_entropy(arr1(&[0.0f64, 1.0]).view(), 2, 1.0).is_err());
        assert!(softmax_cross_entropy(arr1(&[0.0f64]).view(), 0, 1.0).is_err());
    }

    #[test]
    fn argmax_prefers_first_on_tie() {
        assert_eq!(argmax(arr1(&[1.0f32, 3.0, 3.0]).view()), 1);
    }
}
