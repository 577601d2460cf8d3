mod common;

use common::suites;

#[test]
fn mask_and_search_operators_match_closed_forms() {
    for seed in 0..3 {
        let summary = suites::formulas(seed).unwrap();
        assert!(summary.starts_with(char::is_numeric), "{summary}");
    }
}

#[test]
fn masked_embedding_gradients_match_symbolic_oracle() {
    suites::masked_grads(11, 500).unwrap();
}
