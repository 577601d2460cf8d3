mod common;

use common::suites;

#[test]
fn layer_backward_passes_match_finite_differences() {
    suites::layer_gradients(3, 150).unwrap();
}

#[test]
fn unmasked_model_matches_finite_differences() {
    suites::model_gradients(4, 120).unwrap();
}
