use crate::error::{shape_err, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient, added to the gradient as `weight_decay * param`.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Matrix<T>,
    v: Matrix<T>,
    step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step_count: 0,
        }
    }

    pub fn for_param(param: &Matrix<T>) -> Self {
        Self::new(param.rows(), param.cols())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One dense Adam update with bias correction.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        param: &mut Matrix<T>,
        grad: &Matrix<T>,
    ) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(shape_err(param.shape_str(), grad.shape_str()));
        }
        self.step_count += 1;
        let (c1, c2) = self.corrections(cfg);
        let n = param.data().len();
        for i in 0..n {
            update(
                cfg,
                c1,
                c2,
                &mut param.data_mut()[i],
                grad.data()[i],
                &mut self.m.data_mut()[i],
                &mut self.v.data_mut()[i],
            );
        }
        Ok(())
    }

    /// Lazy Adam: advances the global step once, then updates only the listed rows.
    ///
    /// Untouched rows keep both their values and their moments.
    pub fn step_rows<'a, I>(
        &mut self,
        cfg: &AdamConfig,
        param: &mut Matrix<T>,
        rows: I,
    ) -> Result<()>
    where
        I: IntoIterator<Item = (usize, &'a [T])>,
    {
        if param.shape() != self.m.shape() {
            return Err(shape_err(param.shape_str(), self.m.shape_str()));
        }
        self.step_count += 1;
        let (c1, c2) = self.corrections(cfg);
        let cols = param.cols();
        for (r, g) in rows {
            if g.len() != cols {
                return Err(shape_err(format!("[1x{}]", g.len()), param.shape_str()));
            }
            let (p, m, v) = (param.row_mut(r), self.m.row_mut(r), self.v.row_mut(r));
            for c in 0..cols {
                let (mut pc, mut mc, mut vc) = (p[c], m[c], v[c]);
                update(cfg, c1, c2, &mut pc, g[c], &mut mc, &mut vc);
                p[c] = pc;
                m[c] = mc;
                v[c] = vc;
            }
        }
        Ok(())
    }

    fn corrections(&self, cfg: &AdamConfig) -> (T, T) {
        let t = self.step_count as i32;
        (
            T::of(1.0 - cfg.beta1.powi(t)),
            T::of(1.0 - cfg.beta2.powi(t)),
        )
    }
}

#[inline]
fn update<T: Scalar>(cfg: &AdamConfig, c1: T, c2: T, p: &mut T, g: T, m: &mut T, v: &mut T) {
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let g = g + T::of(cfg.weight_decay) * *p;
    *m = b1 * *m + (T::one() - b1) * g;
    *v = b2 * *v + (T::one() - b2) * g * g;
    let mhat = *m / c1;
    let vhat = *v / c2;
    *p -= T::of(cfg.lr) * mhat / (vhat.sqrt() + T::of(cfg.eps));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param() {
        let mut p = Matrix::from_rows(&[vec![1.0f64, -2.0]]).unwrap();
        let before = p.clone();
        let mut st = AdamState::for_param(&p);
        let cfg = AdamConfig::new(0.1, 0.0);
        for _ in 0..5 {
            st.step(&cfg, &mut p, &Matrix::zeros(1, 2)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Matrix::<f64>::zeros(1, 4);
        let g = Matrix::row_vector(vec![0.3, -2.0, 1e-3, -50.0]);
        let mut st = AdamState::for_param(&p);
        st.step(&AdamConfig::new(0.01, 0.0), &mut p, &g).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            // m_hat / sqrt(v_hat) = g / |g|
            let expected = -0.01 * gi.signum() * gi.abs() / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn lazy_rows_leave_others_untouched() {
        let mut p = Matrix::filled(3, 2, 1.0f64);
        let mut st = AdamState::for_param(&p);
        let g = [0.5, 0.5];
        st.step_rows(&AdamConfig::new(0.1, 0.0), &mut p, [(1usize, &g[..])])
            .unwrap();
        assert_eq!(p.row(0), &[1.0, 1.0]);
        assert_eq!(p.row(2), &[1.0, 1.0]);
        assert!(p[(1, 0)] < 1.0);
    }
}
