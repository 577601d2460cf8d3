use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient through ReLU given the pre-activation input; zero at `x <= 0`.
pub fn relu_backward<T: Scalar>(x: &Matrix<T>, dout: &Matrix<T>) -> Result<Matrix<T>> {
    x.zip_map(dout, |v, g| if v > T::zero() { g } else { T::zero() })
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid_scalar)
}

/// Gradient through the sigmoid given its output `y = sigmoid(x)`.
pub fn sigmoid_backward<T: Scalar>(y: &Matrix<T>, dout: &Matrix<T>) -> Result<Matrix<T>> {
    y.zip_map(dout, |s, g| g * s * (T::one() - s))
}
