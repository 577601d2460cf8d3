use crate::scalar::Scalar;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn clamp_probability<T: Scalar>(p: T) -> T {
    let lo = T::of(PROB_CLAMP);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

/// Mean binary cross-entropy and its gradient with respect to each probability.
///
/// `loss = -mean(y ln p + (1 - y) ln(1 - p))`,
/// `dp_i = -(y_i / p_i - (1 - y_i) / (1 - p_i)) / B`, both on clamped `p`.
pub fn bce_loss<T: Scalar>(labels: &[T], probs: &[T]) -> (T, Vec<T>) {
    debug_assert_eq!(labels.len(), probs.len());
    let n = T::of(labels.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(labels.len());
    for (&y, &p) in labels.iter().zip(probs) {
        let p = clamp_probability(p);
        let q = T::one() - p;
        total += y * p.ln() + (T::one() - y) * q.ln();
        grad.push(-(y / p - (T::one() - y) / q) / n);
    }
    (-total / n, grad)
}
