//! AUC, log loss and embedding-table sparsity.

use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::mask::{DimensionMask, EmbeddingMask};
use crate::nn::clamp_probability;

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Tied scores share their average rank, which counts each tied
/// positive/negative pair as one half.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Length {
            what: "scores",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (doubled) ranks of positives; doubling keeps tie averages integral.
    let mut pos_rank2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, average doubled = i + j + 2
        let avg2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        pos_rank2 += avg2 * pos_in_group;
        i = j + 1;
    }
    let np = n_pos as u128;
    let u2 = pos_rank2 - np * (np + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean negative log-likelihood with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn logloss(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Length {
            what: "scores",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = labels
        .iter()
        .zip(scores)
        .map(|(&y, &p)| {
            let p = clamp_probability(p);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(-total / labels.len() as f64)
}

/// Parameters kept by the masks: `sum over kept rows j of d_field(j)`.
pub fn remaining_params(m_e: &EmbeddingMask, m_d: &DimensionMask, schema: &FieldSchema) -> usize {
    (0..m_e.len())
        .filter(|&j| m_e.is_kept(j))
        .map(|j| m_d.dim(schema.field_of(j)))
        .sum()
}

/// `1 - remaining / (|f| D)`.
pub fn sparsity(
    m_e: &EmbeddingMask,
    m_d: &DimensionMask,
    schema: &FieldSchema,
    max_dim: usize,
) -> Result<f64> {
    if m_e.len() != schema.total_rows() {
        return Err(Error::Length {
            what: "embedding mask",
            expected: schema.total_rows(),
            found: m_e.len(),
        });
    }
    m_d.check_schema(schema)?;
    let total = (schema.total_rows() * max_dim) as f64;
    Ok(1.0 - remaining_params(m_e, m_d, schema) as f64 / total)
}
