//! Reference implementations written directly from the closed forms, kept
//! separate from the library so tests compare two independent routes.
#![allow(dead_code)]

use embtab::data::{EncodedDataset, FieldSchema};
use embtab::Rng;

pub fn unit_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn longtail_h(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.4 {
        2.0 - 4.0 * a
    } else if a <= 1.0 {
        0.4
    } else {
        0.0
    }
}

/// `(sum exp(-t_i), [-exp(-t_i)])`.
pub fn sparse_reg(t: &[f64]) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = Vec::new();
    for &ti in t {
        total += (-ti).exp();
        grad.push(-(-ti).exp());
    }
    (total, grad)
}

/// Counts every kept parameter one at a time.
pub fn sparsity(keep: &[bool], dims: &[usize], field_of: &[usize], max_dim: usize) -> f64 {
    let mut remaining = 0usize;
    for (j, &k) in keep.iter().enumerate() {
        for c in 0..max_dim {
            if k && c < dims[field_of[j]] {
                remaining += 1;
            }
        }
    }
    1.0 - remaining as f64 / (keep.len() * max_dim) as f64
}

/// Dense `E ⊙ m_e ⊙ m_d` built entry by entry.
pub fn apply_masks(
    table: &[Vec<f64>],
    keep: &[bool],
    dims: &[usize],
    field_of: &[usize],
) -> Vec<Vec<f64>> {
    table
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(c, &v)| {
                    let me = if keep[j] { 1.0 } else { 0.0 };
                    let md = if c < dims[field_of[j]] { 1.0 } else { 0.0 };
                    v * me * md
                })
                .collect()
        })
        .collect()
}

pub fn crossover(a: &[usize], b: &[usize], cut: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..a.len() {
        out.push(if i < cut { a[i] } else { b[i] });
    }
    out
}

/// Fraction of positive/negative pairs ranked correctly, ties counted as half.
pub fn auc_pairwise(labels: &[u8], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..labels.len() {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..labels.len() {
            if labels[j] != 0 {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

pub fn logloss(labels: &[u8], probs: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&y, &p) in labels.iter().zip(probs) {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / labels.len() as f64
}

/// Embedding and threshold gradients for a single touched row, written out
/// from `dE = dÊ·m_e + dÊ⊙E·H(L1 − t)·sign(E)` and `dt = −Σ dÊ⊙E·H`.
pub fn masked_row_grads(d_hat: &[f64], e: &[f64], t: f64) -> (Vec<f64>, f64) {
    let l1: f64 = e.iter().map(|v| v.abs()).sum();
    let x = l1 - t;
    let me = unit_step(x);
    let h = longtail_h(x);
    let mut de = Vec::new();
    let mut dt = 0.0;
    for i in 0..e.len() {
        let sign = if e[i] > 0.0 {
            1.0
        } else if e[i] < 0.0 {
            -1.0
        } else {
            0.0
        };
        de.push(d_hat[i] * me + d_hat[i] * e[i] * h * sign);
        dt -= d_hat[i] * e[i] * h;
    }
    (de, dt)
}

/// Central finite difference `(f(x + h) − f(x − h)) / 2h`.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with a floor on the scale, so near-zero gradients are
/// compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn random_schema(rng: &mut Rng, max_fields: usize, max_card: usize) -> FieldSchema {
    let n = rng.int_inclusive(1, max_fields);
    let cards: Vec<usize> = (0..n).map(|_| rng.int_inclusive(1, max_card)).collect();
    FieldSchema::with_cardinalities(&cards).unwrap()
}

pub fn random_batch(rng: &mut Rng, schema: &FieldSchema, rows: usize) -> EncodedDataset {
    let mut ds = EncodedDataset::new(schema.n_fields());
    for r in 0..rows {
        let idx: Vec<u32> = schema
            .fields
            .iter()
            .map(|f| (f.offset + rng.index(f.cardinality())) as u32)
            .collect();
        // alternate labels so both classes are present
        ds.push((r % 2) as u8, &idx);
    }
    ds
}
pub mod suites;
