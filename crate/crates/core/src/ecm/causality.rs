use nalgebra::DVector;

use crate::linalg::companion_radius;
use crate::model::StateLayout;

/// Largest companion spectral radius allowed for a fitted AR block.
pub const MAX_RADIUS: f64 = 0.98;

/// Shrinks an AR polynomial so its companion spectral radius is at most
/// [`MAX_RADIUS`], scaling lag `k` by `f^k`. Scaling by `f` maps every
/// root `z` to `f z`, so `f = MAX_RADIUS / radius` lands on the bound up
/// to rounding; the final loop absorbs the rounding.
pub fn enforce_causality(coeffs: &[f64]) -> Vec<f64> {
    let radius = companion_radius(coeffs);
    if radius <= MAX_RADIUS {
        return coeffs.to_vec();
    }
    let scaled = |f: f64| -> Vec<f64> {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * f.powi(k as i32 + 1))
            .collect()
    };
    let mut f = MAX_RADIUS / radius;
    loop {
        let out = scaled(f);
        if companion_radius(&out) <= MAX_RADIUS {
            return out;
        }
        f *= 1.0 - 1e-12;
    }
}

/// Applies [`enforce_causality`] to each idiosyncratic AR(1) term and to
/// the cycle block of `pi`.
pub fn enforce_causality_pi(layout: &StateLayout, pi: &DVector<f64>) -> DVector<f64> {
    let mut out = pi.clone();
    for k in 0..layout.n_idio() {
        out[k] = enforce_causality(&[pi[k]])[0];
    }
    let n = layout.n_idio();
    let cycle: Vec<f64> = pi.iter().skip(n).copied().collect();
    for (j, v) in enforce_causality(&cycle).into_iter().enumerate() {
        out[n + j] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_examples() {
        assert_eq!(enforce_causality(&[0.5]), vec![0.5]);
        assert_eq!(enforce_causality(&[1.2]), vec![0.98]);
        assert_eq!(enforce_causality(&[-3.0]), vec![-0.98]);
    }

    #[test]
    fn idempotent_on_ar4() {
        // roots 1.05, 0.5, 0.3 and -0.2
        let roots: [f64; 4] = [1.05, 0.5, 0.3, -0.2];
        let mut poly = vec![1.0];
        for z in roots {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= z * c;
            }
            poly = next;
        }
        let coeffs: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
        assert!((companion_radius(&coeffs) - 1.05).abs() < 1e-9);
        let once = enforce_causality(&coeffs);
        assert!(companion_radius(&once) <= MAX_RADIUS);
        assert!(companion_radius(&once) > MAX_RADIUS - 1e-9);
        assert_eq!(enforce_causality(&once), once);
    }
}
