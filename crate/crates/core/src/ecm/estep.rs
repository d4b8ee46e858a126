use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::StateLayout;
use crate::panel::{PanelDataset, RowEntity};
use crate::smoother::SmootherOutput;

/// Sufficient statistics of one E-step.
///
/// Measurement statistics are kept per compact row (macro series, then
/// groups): the selection products are diagonal, so a group enters only
/// through the number of members observed at each `t` and the sum of
/// their values.
#[derive(Debug, Clone)]
pub struct EcmWorkspace {
    /// Sample size `s`.
    pub s: usize,
    /// `sum_t E[Phi_t Phi_t']` over the innovated block, `r x r`.
    pub e1: DMatrix<f64>,
    /// `sum_t E[Phi_t Phi_{t-1}']` restricted to the first `r` rows.
    pub e2: DMatrix<f64>,
    /// `sum_t E[Phi_{t-1} Phi_{t-1}']`.
    pub e3: DMatrix<f64>,
    /// `F_t = E[Phi_t Phi_t']` for `t = 1..=s` (index `t - 1`).
    pub f: Vec<DMatrix<f64>>,
    pub phi0: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// Row `k`: sum over observed cells of compact row `k` of `y Phi_t'`.
    pub g: DMatrix<f64>,
    /// `counts[(k, t - 1)]`: observed cells of compact row `k` at `t`.
    pub counts: DMatrix<f64>,
    /// `h[k] = sum_t counts[k, t] F_t`.
    pub h: Vec<DMatrix<f64>>,
    /// Sum of squared observed values.
    pub yy: f64,
    /// Observation times up to `s`.
    pub times: Vec<usize>,
}

/// Accumulates the E-step statistics from a smoother run over `1..=s`.
pub fn e_step(smo: &SmootherOutput, panel: &PanelDataset, layout: &StateLayout, s: usize) -> Result<EcmWorkspace> {
    let q = layout.q();
    let r = layout.r();
    if smo.mean(0).len() != q {
        return Err(Error::Dimension(format!(
            "smoother state dimension {} differs from layout q={q}",
            smo.mean(0).len()
        )));
    }
    if s == 0 || s > smo.horizon() || s > panel.horizon() {
        return Err(Error::Dimension(format!(
            "sample size {s} outside 1..={}",
            smo.horizon().min(panel.horizon())
        )));
    }
    let n_compact = layout.n_compact();
    if panel.n_macro() + panel.n_groups() != n_compact {
        return Err(Error::Dimension("panel does not match the model layout".into()));
    }
    let m = panel.n_macro();
    let compact_of = |row: usize| match panel.row_entity(row) {
        RowEntity::Macro(i) => i,
        RowEntity::Group(g) => m + g,
    };

    let mut e1 = DMatrix::zeros(r, r);
    let mut e2 = DMatrix::zeros(r, q);
    let mut e3 = DMatrix::zeros(q, q);
    let mut f = Vec::with_capacity(s);
    let mut g = DMatrix::zeros(n_compact, q);
    let mut counts = DMatrix::zeros(n_compact, s);
    let mut h = vec![DMatrix::zeros(q, q); n_compact];
    let mut yy = 0.0;
    let mut times = Vec::new();

    let mut prev = smo.second_moment(0);
    for t in 1..=s {
        let ft = smo.second_moment(t);
        let cross = smo.mean(t) * smo.mean(t - 1).transpose() + smo.lag_cov(t);
        e1 += ft.view((0, 0), (r, r));
        e2 += cross.rows(0, r);
        e3 += &prev;

        let obs = panel.observed(t);
        if !obs.is_empty() {
            times.push(t);
            let mean = smo.mean(t);
            for &(row, y) in obs {
                let k = compact_of(row);
                counts[(k, t - 1)] += 1.0;
                yy += y * y;
                for j in 0..q {
                    g[(k, j)] += y * mean[j];
                }
            }
            for k in 0..n_compact {
                let n = counts[(k, t - 1)];
                if n > 0.0 {
                    h[k] += &ft * n;
                }
            }
        }
        f.push(ft.clone());
        prev = ft;
    }
    Ok(EcmWorkspace {
        s,
        e1,
        e2,
        e3,
        f,
        phi0: smo.mean(0).clone(),
        p0: smo.cov(0).clone(),
        g,
        counts,
        h,
        yy,
        times,
    })
}

/// `sum_t A_t' Y_t^obs Phi_t'` with one row per panel row.
pub fn g_hat(smo: &SmootherOutput, panel: &PanelDataset, s: usize) -> DMatrix<f64> {
    let q = smo.mean(0).len();
    let mut out = DMatrix::zeros(panel.n_rows(), q);
    for t in 1..=s {
        for &(row, y) in panel.observed(t) {
            for j in 0..q {
                out[(row, j)] += y * smo.mean(t)[j];
            }
        }
    }
    out
}
