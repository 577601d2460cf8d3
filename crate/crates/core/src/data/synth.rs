use crate::error::{Error, Result};
use crate::nn::sigmoid_scalar;
use crate::rng::Rng;

use super::raw::{FieldKind, RawDataset};

/// Parameters of the planted-structure generator.
///
/// Field values follow a Zipf law (exponent `zipf_exponent`) so features span
/// a wide frequency range. The first `n_informative` fields carry hidden
/// per-value weights drawn from `N(0, weight_scale^2)`; labels are Bernoulli
/// draws from `sigmoid(bias + sum of informative weights + noise_level * N(0, 1))`.
/// The remaining fields are independent of the label.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_fields: usize,
    pub cardinalities: Vec<usize>,
    pub n_informative: usize,
    pub n_rows: usize,
    pub noise_level: f64,
    pub weight_scale: f64,
    pub bias: f64,
    pub zipf_exponent: f64,
}

impl SynthSpec {
    pub fn new(cardinalities: Vec<usize>, n_informative: usize, n_rows: usize) -> Self {
        Self {
            n_fields: cardinalities.len(),
            cardinalities,
            n_informative,
            n_rows,
            noise_level: 0.5,
            weight_scale: 0.8,
            bias: -0.5,
            zipf_exponent: 1.1,
        }
    }
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<RawDataset> {
    if spec.n_rows == 0 || spec.n_fields == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least one row and one field".into(),
        ));
    }
    if spec.cardinalities.len() != spec.n_fields {
        return Err(Error::Length {
            what: "synthetic cardinalities",
            expected: spec.n_fields,
            found: spec.cardinalities.len(),
        });
    }
    if spec.n_informative > spec.n_fields {
        return Err(Error::InvalidArgument(format!(
            "{} informative fields exceed {} fields",
            spec.n_informative, spec.n_fields
        )));
    }
    if spec.cardinalities.contains(&0) {
        return Err(Error::InvalidArgument(
            "cardinality must be at least 1".into(),
        ));
    }

    let mut rng = Rng::derive(seed, "synth");
    let weights: Vec<Vec<f64>> = spec
        .cardinalities
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if i < spec.n_informative {
                (0..c).map(|_| spec.weight_scale * rng.normal()).collect()
            } else {
                vec![0.0; c]
            }
        })
        .collect();
    let cdfs: Vec<Vec<f64>> = spec
        .cardinalities
        .iter()
        .map(|&c| zipf_cdf(c, spec.zipf_exponent))
        .collect();

    let names = (0..spec.n_fields).map(|i| format!("f{i}")).collect();
    let mut ds = RawDataset::new(names, vec![FieldKind::Categorical; spec.n_fields])?;
    for _ in 0..spec.n_rows {
        let mut logit = spec.bias;
        let mut values = Vec::with_capacity(spec.n_fields);
        for (cdf, w) in cdfs.iter().zip(&weights) {
            let u = rng.unit();
            let k = cdf.partition_point(|&p| p <= u).min(cdf.len() - 1);
            logit += w[k];
            values.push(format!("v{k}"));
        }
        logit += spec.noise_level * rng.normal();
        let label = rng.bernoulli(sigmoid_scalar(logit)) as u8;
        ds.push(label, values)?;
    }
    Ok(ds)
}

fn zipf_cdf(n: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (0..n)
        .map(|k| {
            acc += 1.0 / ((k + 1) as f64).powf(s);
            acc
        })
        .collect();
    cdf.iter_mut().for_each(|p| *p /= acc);
    cdf
}
