//! Deterministic starting values.
//!
//! Micro rows are averaged per group and period; each resulting series is
//! split into a moving-average trend and a detrended remainder. The first
//! macro series loads one-for-one on the current cycle and nothing else,
//! so the starting cycle path is that series' remainder projected on
//! leads and lags of the leading principal component of all remainders.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::causality::{enforce_causality, enforce_causality_pi};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{ParameterVector, StateLayout};
use crate::panel::{PanelDataset, RowEntity};

const VAR_FLOOR: f64 = 1e-6;

/// Starting values plus the intermediate series they were built from.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub params: ParameterVector,
    /// Per-period means: macro series then groups, `None` where missing.
    pub series: Vec<Vec<Option<f64>>>,
    /// Trend paths for every trend state.
    pub trends: Vec<Vec<f64>>,
    /// Initial common cycle path.
    pub psi: Vec<f64>,
}

pub fn initialize(panel: &PanelDataset, cfg: &ModelConfig) -> Result<ParameterVector> {
    Ok(initialize_detailed(panel, cfg)?.params)
}

/// Per-period means of the observed rows of each macro series and group.
pub fn group_means(panel: &PanelDataset) -> Vec<Vec<Option<f64>>> {
    let m = panel.n_macro();
    let n = m + panel.n_groups();
    let horizon = panel.horizon();
    let mut sum = vec![vec![0.0; horizon]; n];
    let mut cnt = vec![vec![0usize; horizon]; n];
    for t in 1..=horizon {
        for &(row, v) in panel.observed(t) {
            let k = match panel.row_entity(row) {
                RowEntity::Macro(i) => i,
                RowEntity::Group(g) => m + g,
            };
            sum[k][t - 1] += v;
            cnt[k][t - 1] += 1;
        }
    }
    sum.into_iter()
        .zip(cnt)
        .map(|(s, c)| {
            s.into_iter()
                .zip(c)
                .map(|(s, c)| if c > 0 { Some(s / c as f64) } else { None })
                .collect()
        })
        .collect()
}

/// Centered moving average using the observed values within `half` periods.
/// Periods with no observation in reach copy the nearest defined value.
fn moving_average(x: &[Option<f64>], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut out: Vec<Option<f64>> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(n - 1);
            let vals: Vec<f64> = x[lo..=hi].iter().flatten().copied().collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect();
    let first = out.iter().position(Option::is_some).unwrap_or(0);
    let mut last = out[first].unwrap_or(0.0);
    for v in out.iter_mut() {
        match v {
            Some(x) => last = *x,
            None => *v = Some(last),
        }
    }
    out.into_iter().map(|v| v.unwrap()).collect()
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Least squares `y ~ x` over rows with an observed `y`.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.solve(y, tol).unwrap_or_else(|_| DVector::zeros(x.ncols()))
}

pub fn initialize_detailed(panel: &PanelDataset, cfg: &ModelConfig) -> Result<Initialization> {
    cfg.validate()?;
    let layout = StateLayout::from_config(cfg);
    if panel.n_macro() != layout.n_macro || panel.n_groups() != layout.n_groups {
        return Err(Error::Layout("panel does not match the configuration".into()));
    }
    let horizon = panel.horizon();
    let p = layout.lags;
    if horizon < p + 3 {
        return Err(Error::Dimension(format!(
            "need at least {} periods to initialize, got {horizon}",
            p + 3
        )));
    }
    let m = layout.n_macro;
    let n_series = layout.n_compact();
    let series = group_means(panel);
    for (k, s) in series.iter().enumerate() {
        if s.iter().flatten().count() < 2 {
            let name = if k < m {
                cfg.macro_series[k].clone()
            } else {
                cfg.groups[k - m].clone()
            };
            return Err(Error::Dimension(format!("`{name}` has fewer than two observations")));
        }
    }

    // trends
    let half = (2 * p).max(4);
    let raw_trends: Vec<Vec<f64>> = series.iter().map(|s| moving_average(s, half)).collect();
    let n_trend = layout.n_trend();
    let mut trends = vec![vec![0.0; horizon]; n_trend];
    trends[..m].clone_from_slice(&raw_trends[..m]);
    let map = DMatrix::from_fn(layout.n_groups, layout.n_income, |g, k| f64::from(cfg.trend_map[g][k]));
    if layout.n_groups > 0 && layout.n_income > 0 {
        let pinv = crate::linalg::pinv(&map);
        for t in 0..horizon {
            let gt = DVector::from_fn(layout.n_groups, |g, _| raw_trends[m + g][t]);
            let inc = &pinv * gt;
            for k in 0..layout.n_income {
                trends[m + k][t] = inc[k];
            }
        }
    }
    let modeled_trend = |k: usize, t: usize| -> f64 {
        if k < m {
            trends[k][t]
        } else {
            let g = k - m;
            (0..layout.n_income)
                .filter(|&i| cfg.trend_map[g][i] == 1)
                .map(|i| trends[m + i][t])
                .sum()
        }
    };
    let detrended: Vec<Vec<Option<f64>>> = (0..n_series)
        .map(|k| {
            (0..horizon)
                .map(|t| series[k][t].map(|v| v - modeled_trend(k, t)))
                .collect()
        })
        .collect();

    // leading principal component of standardized remainders
    let mut z = DMatrix::zeros(horizon, n_series);
    for k in 0..n_series {
        let obs: Vec<f64> = detrended[k].iter().flatten().copied().collect();
        let (mean, var) = mean_var(&obs);
        let sd = var.sqrt().max(1e-12);
        for t in 0..horizon {
            if let Some(v) = detrended[k][t] {
                z[(t, k)] = (v - mean) / sd;
            }
        }
    }
    let corr = z.transpose() * &z / horizon as f64;
    let eig = SymmetricEigen::new(corr);
    let lead = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let v = eig.eigenvectors.column(lead).into_owned();
    let pc = &z * v;

    // project the first macro series on leads and lags of the component;
    // the fit is its cycle, which keeps the series' timing but drops its
    // idiosyncratic noise
    let shifts: Vec<isize> = (-(p as isize)..=p as isize).collect();
    let pc_design = DMatrix::from_fn(horizon, shifts.len(), |t, c| {
        let u = t as isize - shifts[c];
        if (0..horizon as isize).contains(&u) {
            pc[u as usize]
        } else {
            0.0
        }
    });
    let obs0: Vec<usize> = (0..horizon).filter(|&t| detrended[0][t].is_some()).collect();
    let x0 = pc_design.select_rows(obs0.iter());
    let y0 = DVector::from_fn(obs0.len(), |i, _| detrended[0][obs0[i]].unwrap());
    let psi: Vec<f64> = (&pc_design * least_squares(&x0, &y0)).iter().copied().collect();

    // cycle AR(p)
    let n_ar = horizon - p;
    let xa = DMatrix::from_fn(n_ar, p, |i, j| psi[p + i - j - 1]);
    let ya = DVector::from_fn(n_ar, |i, _| psi[p + i]);
    let ar = least_squares(&xa, &ya);
    let ar = enforce_causality(ar.as_slice());
    let ar_res: Vec<f64> = (0..n_ar)
        .map(|i| ya[i] - (0..p).map(|j| ar[j] * xa[(i, j)]).sum::<f64>())
        .collect();
    let sigma_psi = mean_var(&ar_res).1.max(VAR_FLOOR);

    // loadings and idiosyncratic residuals
    let mut lambda = DMatrix::zeros(layout.n_loading_rows(), p);
    let mut resid: Vec<Vec<Option<f64>>> = vec![vec![None; horizon]; n_series];
    for k in 0..n_series {
        let rows: Vec<usize> = (p - 1..horizon).filter(|&t| detrended[k][t].is_some()).collect();
        let coef = if k == 0 {
            let mut c = DVector::zeros(p);
            c[0] = 1.0;
            c
        } else if rows.len() > p {
            let x = DMatrix::from_fn(rows.len(), p, |i, j| psi[rows[i] - j]);
            let y = DVector::from_fn(rows.len(), |i, _| detrended[k][rows[i]].unwrap());
            least_squares(&x, &y)
        } else {
            DVector::zeros(p)
        };
        if k > 0 {
            for j in 0..p {
                lambda[(k - 1, j)] = coef[j];
            }
        }
        for t in 0..horizon {
            if let Some(v) = detrended[k][t] {
                let fit: f64 = (0..p).filter(|&j| t >= j).map(|j| coef[j] * psi[t - j]).sum();
                resid[k][t] = Some(v - fit);
            }
        }
    }

    let mut pi = DVector::zeros(layout.n_pi());
    let mut sigma = DVector::zeros(layout.r());
    for k in 0..n_series {
        let obs: Vec<f64> = resid[k].iter().flatten().copied().collect();
        let (mean, gamma0) = mean_var(&obs);
        let pairs: Vec<(f64, f64)> = (1..horizon)
            .filter_map(|t| Some((resid[k][t - 1]? - mean, resid[k][t]? - mean)))
            .collect();
        let phi = if pairs.is_empty() || gamma0 <= 0.0 {
            0.0
        } else {
            pairs.iter().map(|(a, b)| a * b).sum::<f64>() / pairs.len() as f64 / gamma0
        };
        pi[k] = phi;
        sigma[layout.idio(k)] = (gamma0 * (1.0 - phi * phi)).max(VAR_FLOOR);
    }
    for j in 0..p {
        pi[layout.n_idio() + j] = ar[j];
    }
    let pi = enforce_causality_pi(&layout, &pi);
    sigma[layout.psi(0)] = sigma_psi;
    for (i, tr) in trends.iter().enumerate() {
        let d2: Vec<f64> = (2..horizon).map(|t| tr[t] - 2.0 * tr[t - 1] + tr[t - 2]).collect();
        sigma[layout.trend(i)] = mean_var(&d2).1.max(VAR_FLOOR);
    }

    // initial state: back-extrapolated trends, zero cycles
    let q = layout.q();
    let mut mu0 = DVector::zeros(q);
    for (i, tr) in trends.iter().enumerate() {
        mu0[layout.trend(i)] = 2.0 * tr[0] - tr[1];
        mu0[layout.lagged_trend(i)] = 3.0 * tr[0] - 2.0 * tr[1];
    }
    let scale0 = series
        .iter()
        .map(|s| mean_var(&s.iter().flatten().copied().collect::<Vec<_>>()).1)
        .fold(1.0, f64::max);
    let omega0 = DMatrix::from_fn(q, q, |i, j| {
        if i == j && layout.omega_allowed(i, j) {
            scale0
        } else {
            0.0
        }
    });

    Ok(Initialization {
        params: ParameterVector {
            mu0,
            omega0,
            lambda,
            pi,
            sigma,
        },
        series,
        trends,
        psi,
    })
}
