//! Small dense helpers shared by the smoother and the estimator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Replaces `a` by `(a + a') / 2` in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Cholesky factor with a cheap condition estimate `(max L_ii / min L_ii)^2`.
pub fn cholesky_with_condition(a: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..a.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    Some((chol, cond))
}

/// Solves `a x = b` for symmetric PSD `a`, falling back to the
/// pseudo-inverse when `a` is singular.
pub fn psd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some((chol, cond)) = cholesky_with_condition(a) {
        if cond < 1e14 {
            return chol.solve(b);
        }
    }
    pinv(a) * b
}

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * 1e-13 * (a.nrows().max(a.ncols()) as f64);
    svd.pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()))
}

/// Sample quantile with linear interpolation between order statistics
/// (position `h = (n - 1) * prob`). Returns NaN on empty input.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Companion matrix of `x_t = a_1 x_{t-1} + ... + a_p x_{t-p}`.
pub fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let p = coeffs.len();
    let mut m = DMatrix::zeros(p, p);
    for (j, &a) in coeffs.iter().enumerate() {
        m[(0, j)] = a;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// Spectral radius of the companion matrix of an AR polynomial.
pub fn companion_radius(coeffs: &[f64]) -> f64 {
    match coeffs.len() {
        0 => 0.0,
        1 => coeffs[0].abs(),
        _ => companion(coeffs)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// `x' a x` for symmetric `a`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * a * x)[(0, 0)]
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
