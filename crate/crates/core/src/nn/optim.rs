use ndarray::{Array2, Zip};

use super::params::{GradStore, ParamStore};
use super::{cast, Float};

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64) -> Self {
        let zeros = || -> Vec<Array2<T>> {
            store.iter().map(|(_, p)| Array2::zeros(p.value.dim())).collect()
        };
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &GradStore<T>, lr: f64) {
        self.step += 1;
        let b1 = cast::<T>(self.beta1);
        let b2 = cast::<T>(self.beta2);
        let one = T::one();
        let c1 = cast::<T>(1.0 - self.beta1.powi(self.step as i32));
        let c2 = cast::<T>(1.0 - self.beta2.powi(self.step as i32));
        let lr = cast::<T>(lr);
        let eps = cast::<T>(self.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let i = id.index();
            Zip::from(&mut p.value)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(grads.get(id))
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Multiplies the learning rate by `gamma` every `step_epochs` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLr {
    pub base: f64,
    pub step_epochs: usize,
    pub gamma: f64,
}

impl StepLr {
    /// Learning rate in effect after `completed_epochs` epochs.
    pub fn lr(&self, completed_epochs: usize) -> f64 {
        self.base * self.gamma.powi((completed_epochs / self.step_epochs.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_lr_trace() {
        let s = StepLr {
            base: 5e-4,
            step_epochs: 3,
            gamma: 0.8,
        };
        let trace: Vec<f64> = (0..7).map(|e| s.lr(e)).collect();
        for (e, lr) in trace.iter().enumerate() {
            let expected = 5e-4 * 0.8f64.powi((e / 3) as i32);
            assert!((lr - expected).abs() < 1e-18);
        }
        assert_eq!(trace[2], 5e-4);
        assert!((trace[3] - 4e-4).abs() < 1e-18);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new(0);
        let w = store.bias("w", 1, 2);
        let mut grads = GradStore::zeros_like(&store);
        grads.get_mut(w)[[0, 0]] = 3.0;
        grads.get_mut(w)[[0, 1]] = -0.01;
        let mut adam = Adam::new(&store, 0.9, 0.999);
        adam.step(&mut store, &grads, 0.1);
        let v = store.value(w);
        assert!((v[[0, 0]] + 0.1).abs() < 1e-6);
        assert!((v[[0, 1]] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::<f32>::new(0);
        let w = store.weight("w", 3, 3);
        let before = store.value(w).clone();
        let grads = GradStore::zeros_like(&store);
        let mut adam = Adam::new(&store, 0.9, 0.999);
        for _ in 0..5 {
            adam.step(&mut store, &grads, 1e-2);
        }
        assert_eq!(store.value(w), &before);
    }
}
