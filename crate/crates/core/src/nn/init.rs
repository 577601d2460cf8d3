use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Xavier/Glorot uniform initialization on `[-a, a]`, `a = sqrt(6 / (rows + cols))`.
pub fn xavier_init<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.uniform(-bound, bound)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}
