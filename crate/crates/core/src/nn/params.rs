use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cast, Float};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Weights take part in L2 regularization, biases do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Array2<T>,
    pub kind: ParamKind,
    pub trainable: bool,
}

impl<T: Float> Param<T> {
    pub fn shape(&self) -> [usize; 2] {
        [self.value.nrows(), self.value.ncols()]
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
    }
}

/// Ordered, named parameter collection.
///
/// Initialization draws from a generator keyed on `(seed, name)`, so adding or
/// removing one parameter never changes the initial values of the others.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    seed: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl<T: Float> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn insert(&mut self, name: &str, value: Array2<T>, kind: ParamKind) -> ParamId {
        assert!(
            self.find(name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Param {
            name: name.to_string(),
            value,
            kind,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform weight of shape `rows × cols`.
    pub fn weight(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()));
        let value = Array2::from_shape_simple_fn((rows, cols), || {
            cast::<T>(rng.gen_range(-bound..bound))
        });
        self.insert(name, value, ParamKind::Weight)
    }

    pub fn bias(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Array2::zeros((rows, cols)), ParamKind::Bias)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Overwrite every value with zero. Used by tests of degenerate models.
    pub fn zero_all(&mut self) {
        for p in &mut self.params {
            p.value.fill(T::zero());
        }
    }

    /// Copy values from `other`, which must have identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::shape(
                format!("{} parameters", self.params.len()),
                format!("{} parameters", other.params.len()),
            ));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.dim() != src.value.dim() {
                return Err(Error::shape(
                    format!("{} {:?}", dst.name, dst.value.dim()),
                    format!("{} {:?}", src.name, src.value.dim()),
                ));
            }
            dst.value.assign(&src.value);
        }
        Ok(())
    }
}

/// Dense gradient buffer shaped like a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GradStore<T> {
    grads: Vec<Array2<T>>,
}

impl<T: Float> GradStore<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: store.params.iter().map(|p| Array2::zeros(p.value.dim())).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.grads[id.0]
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
