use crate::error::{Error, Result};
use crate::rng::Rng;

use super::schema::EncodedDataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: EncodedDataset,
    pub val: EncodedDataset,
    pub test: EncodedDataset,
}

/// Seeded shuffle then partition into `floor(r0 N)`, `floor(r1 N)` and the remainder.
pub fn split(ds: &EncodedDataset, ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be in [0, 1] and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = ds.len();
    if n < 10 {
        return Err(Error::TooSmallToSplit(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(seed, "split").shuffle(&mut order);
    // The epsilon keeps 0.1 * 30 = 2.9999... style products from flooring low.
    let n_train = (a * n as f64 + 1e-9).floor() as usize;
    let n_val = (b * n as f64 + 1e-9).floor() as usize;
    Ok(Split {
        train: ds.subset(&order[..n_train]),
        val: ds.subset(&order[n_train..n_train + n_val]),
        test: ds.subset(&order[n_train + n_val..]),
    })
}
