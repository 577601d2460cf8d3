//! Binary row mask and field-wise dimension mask over the embedding table.

use std::fmt;
use std::str::FromStr;

use crate::data::FieldSchema;
use crate::error::{Error, Result};

/// One keep/prune flag per embedding row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmbeddingMask {
    keep: Vec<bool>,
}

impl EmbeddingMask {
    pub fn ones(rows: usize) -> Self {
        Self {
            keep: vec![true; rows],
        }
    }

    pub fn zeros(rows: usize) -> Self {
        Self {
            keep: vec![false; rows],
        }
    }

    pub fn from_bools(keep: Vec<bool>) -> Self {
        Self { keep }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    #[inline]
    pub fn is_kept(&self, row: usize) -> bool {
        self.keep[row]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    pub fn set(&mut self, row: usize, keep: bool) {
        self.keep[row] = keep;
    }
}

/// Per-field count `d_i` of leading embedding columns kept, `1 <= d_i <= D`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DimensionMask {
    dims: Vec<usize>,
    max_dim: usize,
}

impl DimensionMask {
    pub fn new(dims: Vec<usize>, max_dim: usize) -> Result<Self> {
        if max_dim == 0 {
            return Err(Error::InvalidArgument(
                "max dimension must be at least 1".into(),
            ));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d == 0 || d > max_dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension {bad} outside [1, {max_dim}]"
            )));
        }
        Ok(Self { dims, max_dim })
    }

    /// Every field keeps all `D` columns.
    pub fn full(n_fields: usize, max_dim: usize) -> Self {
        Self {
            dims: vec![max_dim; n_fields],
            max_dim,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim
    }

    pub fn n_fields(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn dim(&self, field: usize) -> usize {
        self.dims[field]
    }

    pub fn is_full(&self) -> bool {
        self.dims.iter().all(|&d| d == self.max_dim)
    }

    pub fn mean_dim(&self) -> f64 {
        if self.dims.is_empty() {
            return 0.0;
        }
        self.dims.iter().sum::<usize>() as f64 / self.dims.len() as f64
    }

    /// Binary `D x n` expansion: column `i` has `d_i` leading ones.
    pub fn expand(&self) -> Vec<Vec<u8>> {
        (0..self.max_dim)
            .map(|r| self.dims.iter().map(|&d| (r < d) as u8).collect())
            .collect()
    }

    pub fn check_schema(&self, schema: &FieldSchema) -> Result<()> {
        if self.dims.len() != schema.n_fields() {
            return Err(Error::Length {
                what: "dimension mask",
                expected: schema.n_fields(),
                found: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Parses the comma-joined form produced by `Display`.
    pub fn parse(text: &str, max_dim: usize) -> Result<Self> {
        let dims = text
            .split(',')
            .map(|s| {
                usize::from_str(s.trim())
                    .map_err(|_| Error::InvalidArgument(format!("bad dimension {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, max_dim)
    }
}

impl fmt::Display for DimensionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}
