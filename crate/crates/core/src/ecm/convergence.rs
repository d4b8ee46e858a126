use crate::linalg::quantile;

/// Relative change floor for parameters at or near zero.
pub const DELTA_FLOOR: f64 = 1e-4;
pub const MEDIAN_TOL: f64 = 1e-3;
pub const Q95_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub median: f64,
    pub q95: f64,
}

/// Compares two parameter vectors through the median and 95th percentile
/// of `|new - old| / max(|old|, 1e-4)`.
pub fn check_convergence(old: &[f64], new: &[f64]) -> Convergence {
    assert_eq!(old.len(), new.len(), "parameter vectors differ in length");
    let rel: Vec<f64> = old
        .iter()
        .zip(new)
        .map(|(o, n)| (n - o).abs() / o.abs().max(DELTA_FLOOR))
        .collect();
    if rel.is_empty() {
        return Convergence {
            converged: true,
            median: 0.0,
            q95: 0.0,
        };
    }
    let median = quantile(&rel, 0.5);
    let q95 = quantile(&rel, 0.95);
    Convergence {
        converged: median < MEDIAN_TOL && q95 < Q95_TOL,
        median,
        q95,
    }
}
