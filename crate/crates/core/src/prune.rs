//! Learnable field-wise thresholds that prune embedding rows by L1 norm.
//!
//! A row `j` of field `k` survives when `L1(e_j) - t_k > 0`. The unit step has
//! no useful derivative, so training uses the long-tail surrogate `H`, which
//! lets pruned rows keep receiving a structure gradient and come back.

use std::fmt::Write as _;

use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::mask::EmbeddingMask;
use crate::matrix::Matrix;
use crate::model::RowGrads;
use crate::nn::{AdamConfig, AdamState};
use crate::scalar::{sign0, Scalar};

/// Per-row L1 norm `sum_i |E[j, i]|`.
pub fn l1_norms<T: Scalar>(table: &Matrix<T>) -> Vec<T> {
    (0..table.rows()).map(|r| l1(table.row(r))).collect()
}

#[inline]
fn l1<T: Scalar>(row: &[T]) -> T {
    row.iter().map(|x| x.abs()).sum()
}

/// 1 iff `x > 0`.
#[inline]
pub fn unit_step<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// Long-tail surrogate for the derivative of the unit step.
#[inline]
pub fn longtail_h<T: Scalar>(x: T) -> T {
    let a = x.abs();
    // H is continuous at 0.4; taking the constant branch there avoids 2 - 1.6 rounding below 0.4
    if a < T::of(0.4) {
        T::of(2.0) - T::of(4.0) * a
    } else if a <= T::one() {
        T::of(0.4)
    } else {
        T::zero()
    }
}

/// `m_e[j] = S(L1(e_j) - t[field(j)])`.
pub fn gen_embedding_mask<T: Scalar>(
    table: &Matrix<T>,
    thresholds: &[T],
    schema: &FieldSchema,
) -> Result<EmbeddingMask> {
    check_shapes(table, thresholds, schema)?;
    Ok(EmbeddingMask::from_bools(
        (0..table.rows())
            .map(|r| unit_step(l1(table.row(r)) - thresholds[schema.field_of(r)]) == T::one())
            .collect(),
    ))
}

fn check_shapes<T: Scalar>(
    table: &Matrix<T>,
    thresholds: &[T],
    schema: &FieldSchema,
) -> Result<()> {
    if table.rows() != schema.total_rows() {
        return Err(Error::Length {
            what: "embedding rows",
            expected: schema.total_rows(),
            found: table.rows(),
        });
    }
    if thresholds.len() != schema.n_fields() {
        return Err(Error::Length {
            what: "thresholds",
            expected: schema.n_fields(),
            found: thresholds.len(),
        });
    }
    Ok(())
}

/// Splits `dÊ` into the embedding gradient and the threshold gradient.
///
/// For a touched row `j` of field `k`, with `h = H(L1(e_j) - t_k)`:
///
/// ```text
/// dE[j] = dÊ[j] * m_e[j]  +  dÊ[j] ⊙ E[j] * h ⊙ sign(E[j])
///         (performance)      (structure)
/// dt[k] -= sum_i dÊ[j, i] * E[j, i] * h
/// ```
///
/// The threshold term follows from `d(L1 - t)/dt = -1` under the same surrogate.
pub fn masked_embed_grads<T: Scalar>(
    d_masked: &RowGrads<T>,
    table: &Matrix<T>,
    m_e: &EmbeddingMask,
    thresholds: &[T],
    schema: &FieldSchema,
) -> Result<(RowGrads<T>, Vec<T>)> {
    check_shapes(table, thresholds, schema)?;
    if m_e.len() != table.rows() {
        return Err(Error::Length {
            what: "embedding mask",
            expected: table.rows(),
            found: m_e.len(),
        });
    }
    if d_masked.width() != table.cols() {
        return Err(Error::Length {
            what: "embedding gradient width",
            expected: table.cols(),
            found: d_masked.width(),
        });
    }
    let mut de = RowGrads::new(table.cols());
    let mut dt = vec![T::zero(); thresholds.len()];
    for (j, g) in d_masked.iter() {
        let e = table.row(j);
        let field = schema.field_of(j);
        let h = longtail_h(l1(e) - thresholds[field]);
        let keep = if m_e.is_kept(j) { T::one() } else { T::zero() };
        let mut row = Vec::with_capacity(g.len());
        let mut dot = T::zero();
        for (&gi, &ei) in g.iter().zip(e) {
            let ge = gi * ei;
            row.push(gi * keep + ge * h * sign0(ei));
            dot += ge;
        }
        dt[field] -= dot * h;
        de.insert(j, row);
    }
    Ok((de, dt))
}

/// Exponential sparsity regularizer `L_s = sum_i exp(-t_i)` and its gradient.
pub fn sparse_reg<T: Scalar>(thresholds: &[T]) -> (T, Vec<T>) {
    let terms: Vec<T> = thresholds.iter().map(|&t| (-t).exp()).collect();
    let value = terms.iter().copied().sum();
    (value, terms.into_iter().map(|e| -e).collect())
}

/// Trainable field-wise pruning thresholds with their own Adam state.
#[derive(Debug, Clone)]
pub struct ThresholdVector<T> {
    values: Matrix<T>,
    adam: AdamState<T>,
    cfg: AdamConfig,
}

impl<T: Scalar> ThresholdVector<T> {
    pub fn new(n_fields: usize, init: f64, lr: f64) -> Self {
        Self::from_values(vec![T::of(init); n_fields], lr)
    }

    pub fn from_values(values: Vec<T>, lr: f64) -> Self {
        let values = Matrix::row_vector(values);
        Self {
            adam: AdamState::for_param(&values),
            values,
            cfg: AdamConfig::new(lr, 0.0),
        }
    }

    pub fn values(&self) -> &[T] {
        self.values.data()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One Adam step on `dt + alpha * dL_s/dt`.
    pub fn step(&mut self, dt: &[T], alpha: f64) -> Result<()> {
        if dt.len() != self.len() {
            return Err(Error::Length {
                what: "threshold gradient",
                expected: self.len(),
                found: dt.len(),
            });
        }
        let (_, dreg) = sparse_reg(self.values.data());
        let a = T::of(alpha);
        let grad = Matrix::row_vector(dt.iter().zip(&dreg).map(|(&g, &r)| g + a * r).collect());
        self.adam.step(&self.cfg, &mut self.values, &grad)
    }
}

/// One embedding row in the norm/frequency scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub field: usize,
    pub feature: usize,
    pub frequency: u64,
    pub l1_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldCorrelation {
    pub field: usize,
    pub n_points: usize,
    /// Pearson correlation between frequency and L1 norm; 0 when degenerate.
    pub correlation: f64,
    /// True when either variable is constant over the field.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormFrequencyReport {
    pub points: Vec<ScatterPoint>,
    pub fields: Vec<FieldCorrelation>,
}

impl NormFrequencyReport {
    /// Tab-separated `field, feature_id, frequency, l1_norm` with a header.
    pub fn scatter_tsv(&self) -> String {
        let mut out = String::from("field\tfeature_id\tfrequency\tl1_norm\n");
        for p in &self.points {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                p.field, p.feature, p.frequency, p.l1_norm
            )
            .unwrap();
        }
        out
    }
}

/// Per-field scatter of feature frequency against embedding L1 norm, with the
/// Pearson correlation of frequency and norm.
pub fn norm_frequency_report<T: Scalar>(
    table: &Matrix<T>,
    frequencies: &[u64],
    schema: &FieldSchema,
) -> Result<NormFrequencyReport> {
    if frequencies.len() != table.rows() || table.rows() != schema.total_rows() {
        return Err(Error::Length {
            what: "feature frequencies",
            expected: table.rows(),
            found: frequencies.len(),
        });
    }
    let norms = l1_norms(table);
    let points: Vec<ScatterPoint> = (0..table.rows())
        .map(|j| ScatterPoint {
            field: schema.field_of(j),
            feature: j,
            frequency: frequencies[j],
            l1_norm: norms[j].as_f64(),
        })
        .collect();
    let fields = schema
        .fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let pts = &points[f.range()];
            let xs: Vec<f64> = pts.iter().map(|p| p.frequency as f64).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.l1_norm).collect();
            let (correlation, degenerate) = match pearson(&xs, &ys) {
                Some(c) => (c, false),
                None => (0.0, true),
            };
            FieldCorrelation {
                field: k,
                n_points: pts.len(),
                correlation,
                degenerate,
            }
        })
        .collect();
    Ok(NormFrequencyReport { points, fields })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        let m = Matrix::from_rows(&[vec![1.0f64, -2.0, 3.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(l1_norms(&m), vec![6.0, 0.0]);
    }

    #[test]
    fn step_is_strict() {
        assert_eq!(unit_step(0.5f64), 1.0);
        assert_eq!(unit_step(0.0f64), 0.0);
        assert_eq!(unit_step(-1e-12f64), 0.0);
    }

    #[test]
    fn longtail_branches() {
        assert_eq!(longtail_h(0.0f64), 2.0);
        assert!((longtail_h(0.4f64) - 0.4).abs() < 1e-15);
        assert_eq!(longtail_h(-0.7f64), 0.4);
        assert_eq!(longtail_h(1.5f64), 0.0);
        assert_eq!(longtail_h(1.0f64), 0.4);
    }

    #[test]
    fn mask_extremes_and_example() {
        let schema = FieldSchema::with_cardinalities(&[2]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![0.5, -0.5]]).unwrap();
        assert!(gen_embedding_mask(&e, &[-1e300], &schema)
            .unwrap()
            .is_all_ones());
        assert_eq!(
            gen_embedding_mask(&e, &[1e300], &schema)
                .unwrap()
                .kept_count(),
            0
        );
        let m = gen_embedding_mask(&e, &[2.0], &schema).unwrap();
        assert_eq!(m.as_slice(), &[true, false]);
    }

    #[test]
    fn hand_worked_single_row() {
        let schema = FieldSchema::with_cardinalities(&[1]).unwrap();
        let e = Matrix::from_rows(&[vec![0.2f64, -0.1]]).unwrap();
        let mut g = RowGrads::new(2);
        g.insert(0, vec![1.0, 1.0]);
        let m = gen_embedding_mask(&e, &[0.25], &schema).unwrap();
        assert!(m.is_kept(0));
        let (de, dt) = masked_embed_grads(&g, &e, &m, &[0.25], &schema).unwrap();
        let row = de.get(0).unwrap();
        assert!((row[0] - 1.36).abs() < 1e-12, "{row:?}");
        assert!((row[1] - 1.18).abs() < 1e-12, "{row:?}");
        assert!((dt[0] + 0.18).abs() < 1e-12, "{dt:?}");
    }

    #[test]
    fn far_from_threshold_is_plain_masked_gradient() {
        let schema = FieldSchema::with_cardinalities(&[2]).unwrap();
        let e = Matrix::from_rows(&[vec![3.0f64, 1.0], vec![0.1, 0.0]]).unwrap();
        let t = [-1.5];
        let m = gen_embedding_mask(&e, &t, &schema).unwrap();
        let mut g = RowGrads::new(2);
        g.insert(0, vec![0.3, -0.7]);
        let (de, dt) = masked_embed_grads(&g, &e, &m, &t, &schema).unwrap();
        assert_eq!(de.get(0).unwrap(), &[0.3, -0.7]);
        assert_eq!(dt, vec![0.0]);
    }

    #[test]
    fn pruned_row_still_gets_structure_gradient() {
        let schema = FieldSchema::with_cardinalities(&[1]).unwrap();
        let e = Matrix::from_rows(&[vec![0.2f64, 0.1]]).unwrap();
        let t = [0.5];
        let m = gen_embedding_mask(&e, &t, &schema).unwrap();
        assert!(!m.is_kept(0));
        let mut g = RowGrads::new(2);
        g.insert(0, vec![1.0, -1.0]);
        let (de, _) = masked_embed_grads(&g, &e, &m, &t, &schema).unwrap();
        let row = de.get(0).unwrap();
        // gap -0.2, H = 1.2
        assert!(
            (row[0] - 0.24).abs() < 1e-12 && (row[1] + 0.12).abs() < 1e-12,
            "{row:?}"
        );
    }

    #[test]
    fn sparse_reg_examples() {
        let (v, g) = sparse_reg(&[0.0f64, 0.0, 0.0]);
        assert_eq!(v, 3.0);
        assert_eq!(g, vec![-1.0; 3]);
        let (v, _) = sparse_reg(&[std::f64::consts::LN_2]);
        assert!((v - 0.5).abs() < 1e-15);
        let (v, _) = sparse_reg(&[800.0f64]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn regularizer_alone_raises_thresholds() {
        let mut t = ThresholdVector::<f64>::new(2, 0.0, 0.01);
        t.step(&[0.0, 0.0], 1e-4).unwrap();
        assert!(t.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn constant_table_correlation_is_degenerate() {
        let schema = FieldSchema::with_cardinalities(&[3]).unwrap();
        let e = Matrix::filled(3, 2, 0.5f64);
        let r = norm_frequency_report(&e, &[1, 5, 9], &schema).unwrap();
        assert!(r.fields[0].degenerate);
        assert_eq!(r.fields[0].correlation, 0.0);
        assert_eq!(r.points[0].l1_norm, r.points[2].l1_norm);
    }

    #[test]
    fn correlation_sign() {
        let schema = FieldSchema::with_cardinalities(&[3]).unwrap();
        let e = Matrix::from_rows(&[vec![0.1f64], vec![0.5], vec![0.9]]).unwrap();
        let r = norm_frequency_report(&e, &[1, 10, 100], &schema).unwrap();
        assert!(r.fields[0].correlation > 0.9);
        assert!(r
            .scatter_tsv()
            .starts_with("field\tfeature_id\tfrequency\tl1_norm\n0\t0\t1\t0.1\n"));
    }
}
