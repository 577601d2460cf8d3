use crate::data::FieldSchema;
use crate::error::{shape_err, Error, Result};
use crate::mask::{DimensionMask, EmbeddingMask};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// The effective table `E ⊙ m_e ⊙ m_d` fed to the interaction network.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedEmbedding<T> {
    pub table: Matrix<T>,
    pub dims: DimensionMask,
    /// Some row was pruned by the embedding mask.
    pub rows_masked: bool,
    /// Some field keeps fewer than `D` columns.
    pub dims_masked: bool,
}

impl<T: Scalar> MaskedEmbedding<T> {
    /// A table used as-is, with no mask in effect.
    pub fn unmasked(table: Matrix<T>, n_fields: usize) -> Self {
        let dims = DimensionMask::full(n_fields, table.cols());
        Self {
            table,
            dims,
            rows_masked: false,
            dims_masked: false,
        }
    }
}

/// Elementwise `E ⊙ m_e ⊙ m_d`: rows with `m_e = 0` are zeroed, and within
/// field `i` columns `>= d_i` are zeroed.
pub fn apply_masks<T: Scalar>(
    table: &Matrix<T>,
    m_e: &EmbeddingMask,
    m_d: &DimensionMask,
    schema: &FieldSchema,
) -> Result<MaskedEmbedding<T>> {
    if table.rows() != schema.total_rows() {
        return Err(shape_err(
            table.shape_str(),
            format!("schema with {} rows", schema.total_rows()),
        ));
    }
    if m_e.len() != table.rows() {
        return Err(Error::Length {
            what: "embedding mask",
            expected: table.rows(),
            found: m_e.len(),
        });
    }
    m_d.check_schema(schema)?;
    if m_d.max_dim() != table.cols() {
        return Err(Error::Length {
            what: "dimension mask width",
            expected: table.cols(),
            found: m_d.max_dim(),
        });
    }
    let mut out = table.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if !m_e.is_kept(r) {
            row.fill(T::zero());
        } else {
            row[m_d.dim(schema.field_of(r))..].fill(T::zero());
        }
    }
    Ok(MaskedEmbedding {
        table: out,
        dims: m_d.clone(),
        rows_masked: !m_e.is_all_ones(),
        dims_masked: !m_d.is_full(),
    })
}
