//! Dense rank-2 tensors with reverse-mode differentiation, an Adam
//! optimizer, finite-difference gradient checking, and a bit-exact text
//! checkpoint format.
//!
//! The graph is define-by-run: a [`Graph`] is built per example or batch,
//! records every operation on a tape, and replays it in reverse on
//! [`Graph::backward`].  Parameters live in a [`ParamStore`] behind `Arc`s,
//! so importing them into a graph copies nothing; their gradients
//! accumulate in the store across graphs until the optimizer consumes them.
//!
//! Vectors are column matrices (n x 1), scalars are 1 x 1.  Shape
//! mismatches are programming errors and panic with the op name and both
//! shapes; recoverable failures (checkpoint I/O, missing gradients,
//! non-scalar losses) return errors.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod params;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, read_meta, write_checkpoint, CheckpointError, Meta};
pub use gradcheck::{gradcheck, GradCheckReport};
pub(crate) use graph::logsumexp_slice;
pub use graph::{Graph, Var};
pub use params::ParamStore;

use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use std::str::FromStr;
use thiserror::Error;

/// Element type of every tensor: f32 for training speed, f64 for gradient
/// checks and theorem audits.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + SampleUniform
    + FromStr
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

/// Shorthand for pulling f64 literals into the element type.
pub fn real<T: Real>(v: f64) -> T {
    T::from(v).expect("f64 literal representable")
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("backward requires a scalar loss, got shape {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("no gradient accumulated for parameter `{0}` since the last optimizer step")]
    MissingGradient(String),
    #[error("parameter `{0}` already registered")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> TensorData<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor: {rows}x{cols} needs {} values", rows * cols);
        TensorData { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TensorData { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn scalar(v: T) -> Self {
        TensorData { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(data: Vec<T>) -> Self {
        TensorData { rows: data.len(), cols: 1, data }
    }

    /// Entries drawn uniformly from [-bound, bound].
    pub fn uniform(rows: usize, cols: usize, bound: T, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        TensorData { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item: shape {}x{} is not scalar", self.rows, self.cols);
        self.data[0]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        TensorData {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// self += other, elementwise.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign: {:?} vs {:?}", self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_of_squares(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
