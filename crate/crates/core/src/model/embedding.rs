use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{xavier_init, AdamConfig, AdamState};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Gradients for the embedding rows a batch touched, keyed by global row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowGrads<T> {
    width: usize,
    rows: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> RowGrads<T> {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<&[T]> {
        self.rows.get(&row).map(Vec::as_slice)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.rows.contains_key(&row)
    }

    /// Adds `grad` into the row, creating it at zero first.
    pub fn accumulate(&mut self, row: usize, grad: &[T]) {
        debug_assert_eq!(grad.len(), self.width);
        let entry = self
            .rows
            .entry(row)
            .or_insert_with(|| vec![T::zero(); grad.len()]);
        for (e, &g) in entry.iter_mut().zip(grad) {
            *e += g;
        }
    }

    pub fn insert(&mut self, row: usize, grad: Vec<T>) {
        debug_assert_eq!(grad.len(), self.width);
        self.rows.insert(row, grad);
    }

    /// Rows in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.rows.iter().map(|(&r, g)| (r, g.as_slice()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (usize, &mut Vec<T>)> {
        self.rows.iter_mut().map(|(&r, g)| (r, g))
    }
}

/// The `|f| x D` embedding matrix and its lazily updated Adam moments.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T> {
    pub weights: Matrix<T>,
    adam: AdamState<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(rows: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding table needs rows and D >= 1".into(),
            ));
        }
        Ok(Self::from_weights(xavier_init(rows, dim, rng)))
    }

    pub fn from_weights(weights: Matrix<T>) -> Self {
        let adam = AdamState::for_param(&weights);
        Self { weights, adam }
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Lazy Adam on the touched rows only.
    pub fn apply(&mut self, cfg: &AdamConfig, grads: &RowGrads<T>) -> Result<()> {
        self.adam.step_rows(cfg, &mut self.weights, grads.iter())
    }
}
