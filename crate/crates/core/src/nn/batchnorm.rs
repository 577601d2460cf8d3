use crate::error::{shape_err, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::Mode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Values kept from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T> {
    pub dx: Matrix<T>,
    pub dgamma: Matrix<T>,
    pub dbeta: Matrix<T>,
}

/// Batch normalization over the rows of `x`.
///
/// In train mode the batch statistics normalize `x` and the running
/// statistics move towards them with momentum 0.1 (the running variance uses
/// the unbiased estimate). In eval mode the running statistics are used and no
/// cache is produced.
pub fn batchnorm_forward<T: Scalar>(
    x: &Matrix<T>,
    gamma: &Matrix<T>,
    beta: &Matrix<T>,
    mode: Mode,
    running_mean: &mut [T],
    running_var: &mut [T],
) -> Result<(Matrix<T>, Option<BnCache<T>>)> {
    let (b, n) = x.shape();
    if gamma.shape() != (1, n) || beta.shape() != (1, n) {
        return Err(shape_err(x.shape_str(), gamma.shape_str()));
    }
    if running_mean.len() != n || running_var.len() != n {
        return Err(Error::Length {
            what: "batchnorm running statistics",
            expected: n,
            found: running_mean.len().min(running_var.len()),
        });
    }
    let eps = T::of(BN_EPS);
    match mode {
        Mode::Eval => {
            let mut out = x.clone();
            for r in 0..b {
                for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                    let xhat = (*v - running_mean[c]) / (running_var[c] + eps).sqrt();
                    *v = gamma[(0, c)] * xhat + beta[(0, c)];
                }
            }
            Ok((out, None))
        }
        Mode::Train => {
            if b < 2 {
                return Err(Error::BatchTooSmall(b));
            }
            let bt = T::of(b as f64);
            let mut mean = vec![T::zero(); n];
            for r in 0..b {
                for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= bt);
            let mut var = vec![T::zero(); n];
            for r in 0..b {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= bt);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

            let mut xhat = Matrix::zeros(b, n);
            let mut out = Matrix::zeros(b, n);
            for r in 0..b {
                for c in 0..n {
                    let h = (x[(r, c)] - mean[c]) * inv_std[c];
                    xhat[(r, c)] = h;
                    out[(r, c)] = gamma[(0, c)] * h + beta[(0, c)];
                }
            }

            let momentum = T::of(BN_MOMENTUM);
            let unbias = bt / (bt - T::one());
            for c in 0..n {
                running_mean[c] = (T::one() - momentum) * running_mean[c] + momentum * mean[c];
                running_var[c] =
                    (T::one() - momentum) * running_var[c] + momentum * var[c] * unbias;
            }
            Ok((out, Some(BnCache { xhat, inv_std })))
        }
    }
}

/// Analytic gradient of the train-mode batch normalization.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    gamma: &Matrix<T>,
    dout: &Matrix<T>,
) -> Result<BnGrads<T>> {
    let (b, n) = cache.xhat.shape();
    if dout.shape() != (b, n) {
        return Err(shape_err(dout.shape_str(), cache.xhat.shape_str()));
    }
    let bt = T::of(b as f64);
    let dbeta = dout.sum_rows();
    let dgamma = dout.zip_map(&cache.xhat, |g, h| g * h)?.sum_rows();
    let mut dx = Matrix::zeros(b, n);
    for c in 0..n {
        let k = gamma[(0, c)] * cache.inv_std[c] / bt;
        for r in 0..b {
            dx[(r, c)] =
                k * (bt * dout[(r, c)] - dbeta[(0, c)] - cache.xhat[(r, c)] * dgamma[(0, c)]);
        }
    }
    Ok(BnGrads { dx, dgamma, dbeta })
}

/// Batch normalization layer with learnable scale and shift.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Matrix<T>,
    pub beta: Matrix<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Matrix::filled(1, width, T::one()),
            beta: Matrix::zeros(1, width),
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Matrix<T>, mode: Mode) -> Result<Matrix<T>> {
        let (y, cache) = batchnorm_forward(
            x,
            &self.gamma,
            &self.beta,
            mode,
            &mut self.running_mean,
            &mut self.running_var,
        )?;
        self.cache = cache;
        Ok(y)
    }

    /// Eval-mode forward that leaves the layer untouched.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut mean = self.running_mean.clone();
        let mut var = self.running_var.clone();
        let (y, _) =
            batchnorm_forward(x, &self.gamma, &self.beta, Mode::Eval, &mut mean, &mut var)?;
        Ok(y)
    }

    pub fn backward(&mut self, dout: &Matrix<T>) -> Result<BnGrads<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        batchnorm_backward(&cache, &self.gamma, dout)
    }
}
