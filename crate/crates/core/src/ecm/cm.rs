use nalgebra::{DMatrix, DVector};

use super::estep::EcmWorkspace;
use crate::config::Hyperparameters;
use crate::error::{Error, Result};
use crate::model::{compact_measurement, transition_matrix, ParameterVector, StateLayout};

/// `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Elastic-net penalty on the idiosyncratic AR coefficients, the cycle AR
/// coefficients and the loadings. Lag `j` is weighted by `rho * beta^j`.
pub fn penalty(params: &ParameterVector, layout: &StateLayout, gamma: &Hyperparameters) -> f64 {
    let w = gamma.gamma_diag(layout.lags);
    let mut ridge = 0.0;
    let mut lasso = 0.0;
    let mut add = |c: f64, w: f64| {
        ridge += w * c * c;
        lasso += w * c.abs();
    };
    for k in 0..layout.n_idio() {
        add(params.pi[k], gamma.rho);
    }
    for j in 0..layout.lags {
        add(params.pi[layout.n_idio() + j], w[j]);
        for l in 0..layout.n_loading_rows() {
            add(params.lambda[(l, j)], w[j]);
        }
    }
    0.5 * (1.0 - gamma.alpha) * ridge + 0.5 * gamma.alpha * lasso
}

/// Initial conditions: `mu0 = Phi_0|s`, `Omega_0 = P_0|s` on the allowed
/// pattern.
pub fn cm_step_initial(ws: &EcmWorkspace, layout: &StateLayout) -> (DVector<f64>, DMatrix<f64>) {
    let q = layout.q();
    let omega = DMatrix::from_fn(q, q, |i, j| if layout.omega_allowed(i, j) { ws.p0[(i, j)] } else { 0.0 });
    (ws.phi0.clone(), omega)
}

/// Maximizer of `-(den/(2 sigma)) c^2 + (num/sigma) c - (1-alpha)/2 w c^2 - alpha/2 w |c|`.
pub fn transition_coordinate(num: f64, den: f64, sigma: f64, weight: f64, alpha: f64) -> Option<f64> {
    let d = den / sigma + (1.0 - alpha) * weight;
    if !(d > 0.0) {
        return None;
    }
    Some(soft_threshold(num / sigma, 0.5 * alpha * weight) / d)
}

/// Free transition coordinates `(row, col, weight)` in sweep order:
/// idiosyncratic AR(1) terms, then the cycle lags.
pub fn transition_coordinates(layout: &StateLayout, gamma: &Hyperparameters) -> Vec<(usize, usize, f64)> {
    let w = gamma.gamma_diag(layout.lags);
    let mut out: Vec<_> = (0..layout.n_idio())
        .map(|k| (layout.idio(k), layout.idio(k), gamma.rho))
        .collect();
    out.extend((0..layout.lags).map(|j| (layout.psi(0), layout.psi(j), w[j])));
    out
}

/// Coordinate-wise update of `pi` with `Sigma` held at `sigma`.
pub fn cm_step_transition(
    ws: &EcmWorkspace,
    layout: &StateLayout,
    pi: &DVector<f64>,
    sigma: &DVector<f64>,
    gamma: &Hyperparameters,
) -> Result<DVector<f64>> {
    let mut c = transition_matrix(layout, pi);
    let mut out = pi.clone();
    for (n, (i, j, w)) in transition_coordinates(layout, gamma).into_iter().enumerate() {
        let mut num = ws.e2[(i, j)];
        for l in 0..layout.q() {
            if l != j {
                num -= c[(i, l)] * ws.e3[(l, j)];
            }
        }
        let v = transition_coordinate(num, ws.e3[(j, j)], sigma[i], w, gamma.alpha).ok_or_else(|| {
            Error::DegenerateUpdate {
                coordinate: format!("C[{i},{j}]"),
            }
        })?;
        c[(i, j)] = v;
        out[n] = v;
    }
    Ok(out)
}

/// Innovation variances given the transition coefficients `pi`.
pub fn cm_step_innovations(ws: &EcmWorkspace, layout: &StateLayout, pi: &DVector<f64>) -> Result<DVector<f64>> {
    let r = layout.r();
    let c = transition_matrix(layout, pi);
    let mut out = DVector::zeros(r);
    for i in 0..r {
        let ci = c.row(i);
        let v = (ws.e1[(i, i)] - 2.0 * ci.dot(&ws.e2.row(i)) + (ci * &ws.e3 * ci.transpose())[(0, 0)])
            / ws.s as f64;
        if v < -1e-12 || !v.is_finite() {
            return Err(Error::Numerical {
                time: ws.s,
                detail: format!("innovation variance {i} is {v}"),
            });
        }
        out[i] = v.max(1e-12);
    }
    Ok(out)
}

/// Result of the loading step.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingUpdate {
    pub lambda: DMatrix<f64>,
    /// `(row, lag)` coordinates left unchanged for lack of information.
    pub flagged: Vec<(usize, usize)>,
}

/// Numerator and denominator of the unpenalized update of `Lambda[l, j]`
/// given the compact measurement matrix `b`.
pub fn loading_terms(ws: &EcmWorkspace, layout: &StateLayout, b: &DMatrix<f64>, l: usize, j: usize) -> (f64, f64) {
    let k = layout.loading_compact_row(l);
    let c = layout.psi(j);
    let h = &ws.h[k];
    let mut num = ws.g[(k, c)];
    for m in 0..layout.q() {
        if m != c {
            num -= h[(c, m)] * b[(k, m)];
        }
    }
    (num, h[(c, c)])
}

/// Column-major coordinate sweep over the loadings, each update using the
/// latest values of the others.
pub fn cm_step_loadings(
    ws: &EcmWorkspace,
    layout: &StateLayout,
    trend_map: &[Vec<u8>],
    lambda: &DMatrix<f64>,
    gamma: &Hyperparameters,
    epsilon: f64,
) -> LoadingUpdate {
    let w = gamma.gamma_diag(layout.lags);
    let mut b = compact_measurement(layout, trend_map, lambda);
    let mut out = lambda.clone();
    let mut flagged = Vec::new();
    for j in 0..layout.lags {
        for l in 0..layout.n_loading_rows() {
            let (num, den) = loading_terms(ws, layout, &b, l, j);
            let d = den + epsilon * (1.0 - gamma.alpha) * w[j];
            if !(d > 0.0) {
                flagged.push((l, j));
                continue;
            }
            let v = soft_threshold(num, 0.5 * epsilon * gamma.alpha * w[j]) / d;
            out[(l, j)] = v;
            b[(layout.loading_compact_row(l), layout.psi(j))] = v;
        }
    }
    LoadingUpdate { lambda: out, flagged }
}

/// Expected penalized complete-data log-likelihood at `params`, up to an
/// additive constant. The initial-condition term covers the states with
/// non-degenerate prior variance.
pub fn expected_objective(
    ws: &EcmWorkspace,
    layout: &StateLayout,
    trend_map: &[Vec<u8>],
    params: &ParameterVector,
    gamma: &Hyperparameters,
    epsilon: f64,
) -> f64 {
    let r = layout.r();
    let n0 = r - 1 + layout.lags;

    // initial conditions
    let omega = params.omega0.view((0, 0), (n0, n0)).into_owned();
    let dm = ws.phi0.rows(0, n0) - params.mu0.rows(0, n0);
    let s0 = ws.p0.view((0, 0), (n0, n0)) + &dm * dm.transpose();
    let init = match omega.clone().cholesky() {
        Some(chol) => {
            let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            -0.5 * logdet - 0.5 * chol.solve(&s0).trace()
        }
        None => f64::NEG_INFINITY,
    };

    // transition
    let c = transition_matrix(layout, &params.pi);
    let mut trans = 0.0;
    for i in 0..r {
        let ci = c.row(i);
        let v = ws.e1[(i, i)] - 2.0 * ci.dot(&ws.e2.row(i)) + (ci * &ws.e3 * ci.transpose())[(0, 0)];
        let sig = params.sigma[i];
        trans += -0.5 * ws.s as f64 * sig.ln() - 0.5 * v / sig;
    }

    // measurement
    let b = compact_measurement(layout, trend_map, &params.lambda);
    let mut quad = ws.yy;
    for k in 0..layout.n_compact() {
        let bk = b.row(k);
        quad -= 2.0 * bk.dot(&ws.g.row(k));
        quad += (bk * &ws.h[k] * bk.transpose())[(0, 0)];
    }
    let meas = -0.5 * quad / epsilon;

    init + trans + meas - penalty(params, layout, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    fn tiny_layout() -> StateLayout {
        StateLayout {
            n_macro: 2,
            n_income: 0,
            n_groups: 0,
            lags: 1,
        }
    }

    #[test]
    fn penalty_examples() {
        let l = tiny_layout();
        let mut p = ParameterVector::zeros(&l);
        p.lambda[(0, 0)] = 2.0;
        let g = Hyperparameters {
            rho: 1.0,
            alpha: 1.0,
            beta: 1.3,
        };
        assert_eq!(penalty(&p, &l, &g), 1.0);
        let g0 = Hyperparameters {
            rho: 0.0,
            ..g
        };
        assert_eq!(penalty(&p, &l, &g0), 0.0);
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transition_coordinate(2.0, 4.0, 1.0, 0.0, 0.5), Some(0.5));
        assert_eq!(transition_coordinate(0.0, 4.0, 0.3, 2.0, 0.5), Some(0.0));
        assert_eq!(transition_coordinate(1.0, 0.0, 1.0, 0.0, 0.5), None);
    }

    #[test]
    fn one_dimensional_argmax() {
        let (num, den, sigma, w, alpha) = (1.3, 2.0, 0.7, 1.0, 0.5);
        let obj = |c: f64| -0.5 * den / sigma * c * c + num / sigma * c - 0.5 * (1.0 - alpha) * w * c * c - 0.5 * alpha * w * c.abs();
        let best = transition_coordinate(num, den, sigma, w, alpha).unwrap();
        for k in -2000..=2000 {
            let c = k as f64 * 1e-3;
            assert!(obj(c) <= obj(best) + 1e-15);
        }
    }

    #[test]
    fn innovations_without_dynamics() {
        // single innovated state, all coefficients zero
        let l = StateLayout {
            n_macro: 1,
            n_income: 0,
            n_groups: 0,
            lags: 1,
        };
        let (q, r) = (l.q(), l.r());
        let mut e1 = DMatrix::zeros(r, r);
        for i in 0..r {
            e1[(i, i)] = 10.0;
        }
        let ws = EcmWorkspace {
            s: 5,
            e1,
            e2: DMatrix::zeros(r, q),
            e3: DMatrix::zeros(q, q),
            f: vec![],
            phi0: DVector::zeros(q),
            p0: DMatrix::zeros(q, q),
            g: DMatrix::zeros(1, q),
            counts: DMatrix::zeros(1, 5),
            h: vec![DMatrix::zeros(q, q)],
            yy: 0.0,
            times: vec![],
        };
        // trend row keeps its structural 2/-1 coefficients, which vanish on
        // zero cross moments
        let sigma = cm_step_innovations(&ws, &l, &DVector::zeros(l.n_pi())).unwrap();
        assert!(sigma.iter().all(|&s| s == 2.0));
    }
}
