//! Deterministic reductions.
//!
//! Risk evaluators may compute per-example losses in parallel, but the
//! final sum always uses the pairwise tree reduction below, so results
//! are bit-identical regardless of thread count.

/// Pairwise tree sum. Deterministic and more accurate than a left fold.
pub fn tree_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    tree_sum(&values[..mid]) + tree_sum(&values[mid..])
}

/// Mean via [`tree_sum`]; zero on empty input.
pub fn tree_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        tree_sum(values) / values.len() as f64
    }
}
