use crate::error::{shape_err, Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::init::xavier_init;

/// `y = x W + b` for `x: [B x in]`, `W: [in x out]`, `b: [1 x out]`.
pub fn affine_forward<T: Scalar>(
    x: &Matrix<T>,
    weight: &Matrix<T>,
    bias: &Matrix<T>,
) -> Result<Matrix<T>> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(shape_err(bias.shape_str(), weight.shape_str()));
    }
    let mut y = x.matmul(weight)?;
    let b = bias.row(0);
    for r in 0..y.rows() {
        for (v, &bj) in y.row_mut(r).iter_mut().zip(b) {
            *v += bj;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct AffineGrads<T> {
    pub dx: Matrix<T>,
    pub dweight: Matrix<T>,
    pub dbias: Matrix<T>,
}

/// Analytic gradients of [`affine_forward`] given the upstream gradient `dout`.
pub fn affine_backward<T: Scalar>(
    x: &Matrix<T>,
    weight: &Matrix<T>,
    dout: &Matrix<T>,
) -> Result<AffineGrads<T>> {
    if dout.rows() != x.rows() || dout.cols() != weight.cols() {
        return Err(shape_err(dout.shape_str(), weight.shape_str()));
    }
    Ok(AffineGrads {
        dx: dout.matmul_t(weight)?,
        dweight: x.t_matmul(dout)?,
        dbias: dout.sum_rows(),
    })
}

/// Fully connected layer that caches its input for the backward pass.
#[derive(Debug, Clone)]
pub struct Affine<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
    input: Option<Matrix<T>>,
}

impl<T: Scalar> Affine<T> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Self {
            weight: xavier_init(fan_in, fan_out, rng),
            bias: Matrix::zeros(1, fan_out),
            input: None,
        }
    }

    pub fn from_parts(weight: Matrix<T>, bias: Matrix<T>) -> Result<Self> {
        if bias.shape() != (1, weight.cols()) {
            return Err(shape_err(bias.shape_str(), weight.shape_str()));
        }
        Ok(Self {
            weight,
            bias,
            input: None,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&mut self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let y = affine_forward(x, &self.weight, &self.bias)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        affine_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&mut self, dout: &Matrix<T>) -> Result<AffineGrads<T>> {
        let x = self.input.take().ok_or(Error::NoForwardCache)?;
        affine_backward(&x, &self.weight, dout)
    }
}
