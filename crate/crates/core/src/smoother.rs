//! Kalman filter and fixed-interval smoother with missing rows.
//!
//! Each period uses only its observed rows: the measurement matrix is the
//! row selection of `B`, so an empty period is a pure prediction step.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_condition, psd_solve, symmetrize};
use crate::model::StateSpace;
use crate::panel::PanelDataset;

const MAX_CONDITION: f64 = 1e14;

/// Filtered moments. Index `t` of `mean`/`cov` is period `t`, with index 0
/// holding the prior `(mu0, Omega_0)`; `pred_*[t]` is the one-step
/// prediction for period `t` (index 0 repeats the prior).
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub pred_mean: Vec<DVector<f64>>,
    pub pred_cov: Vec<DMatrix<f64>>,
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

/// Smoothed moments for `t = 0..=T`.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    mean: Vec<DVector<f64>>,
    cov: Vec<DMatrix<f64>>,
    // lag_cov[t] = Cov(Phi_t, Phi_{t-1} | data); index 0 is unused (zeros)
    lag_cov: Vec<DMatrix<f64>>,
    loglik: f64,
}

impl SmootherOutput {
    pub fn horizon(&self) -> usize {
        self.mean.len() - 1
    }

    pub fn mean(&self, t: usize) -> &DVector<f64> {
        &self.mean[t]
    }

    pub fn cov(&self, t: usize) -> &DMatrix<f64> {
        &self.cov[t]
    }

    /// `Cov(Phi_t, Phi_{t-1} | data)` for `t >= 1`.
    pub fn lag_cov(&self, t: usize) -> &DMatrix<f64> {
        assert!(t >= 1, "lag-one covariance is defined for t >= 1");
        &self.lag_cov[t]
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.mean
    }

    /// `E[Phi_t Phi_t' | data] = mean mean' + cov`.
    pub fn second_moment(&self, t: usize) -> DMatrix<f64> {
        let m = &self.mean[t];
        m * m.transpose() + &self.cov[t]
    }
}

/// One filter step: the observed `(row, value)` pairs and the number of
/// transitions since the previous step.
#[derive(Debug, Clone, Copy)]
struct Step<'a> {
    obs: &'a [(usize, f64)],
    gap: usize,
}

struct Transitions<'a> {
    ss: &'a StateSpace,
    noise: DMatrix<f64>,
    cache: HashMap<usize, (DMatrix<f64>, DMatrix<f64>)>,
}

impl<'a> Transitions<'a> {
    fn new(ss: &'a StateSpace) -> Self {
        Self {
            ss,
            noise: ss.state_noise(),
            cache: HashMap::new(),
        }
    }

    /// `(C^g, sum_{i<g} C^i Q C^i')`.
    fn get(&mut self, gap: usize) -> &(DMatrix<f64>, DMatrix<f64>) {
        let ss = self.ss;
        let noise = &self.noise;
        self.cache.entry(gap).or_insert_with(|| {
            let q = ss.q();
            let mut f = DMatrix::identity(q, q);
            let mut acc = DMatrix::zeros(q, q);
            for _ in 0..gap {
                acc = ss.c() * acc * ss.c().transpose() + noise;
                f = ss.c() * f;
            }
            symmetrize(&mut acc);
            (f, acc)
        })
    }
}

fn check_finite(time: usize, m: &DVector<f64>, p: &DMatrix<f64>) -> Result<()> {
    if m.iter().chain(p.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            time,
            detail: "non-finite state moments".into(),
        })
    }
}

fn run_filter(ss: &StateSpace, steps: &[Step<'_>]) -> Result<FilterOutput> {
    let q = ss.q();
    let eps = ss.epsilon();
    let mut trans = Transitions::new(ss);
    let mut out = FilterOutput {
        pred_mean: vec![ss.mu0().clone()],
        pred_cov: vec![ss.omega0().clone()],
        mean: vec![ss.mu0().clone()],
        cov: vec![ss.omega0().clone()],
        loglik: 0.0,
    };
    for (k, step) in steps.iter().enumerate() {
        let time = k + 1;
        let (f, noise) = trans.get(step.gap);
        let xp = f * &out.mean[k];
        let mut pp = f * &out.cov[k] * f.transpose() + noise;
        symmetrize(&mut pp);
        check_finite(time, &xp, &pp)?;

        let n = step.obs.len();
        let (x, p) = if n == 0 {
            (xp.clone(), pp.clone())
        } else {
            let b = DMatrix::from_fn(n, q, |i, j| ss.b_compact()[(ss.compact_row_of(step.obs[i].0), j)]);
            let y = DVector::from_iterator(n, step.obs.iter().map(|&(_, v)| v));
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    time,
                    detail: "non-finite observation".into(),
                });
            }
            let v = &y - &b * &xp;
            let pb = &pp * b.transpose();
            let mut s = &b * &pb;
            for i in 0..n {
                s[(i, i)] += eps;
            }
            symmetrize(&mut s);
            let (chol, cond) = cholesky_with_condition(&s).ok_or(Error::SingularInnovation {
                time,
                condition: f64::INFINITY,
            })?;
            if !(cond <= MAX_CONDITION) {
                return Err(Error::SingularInnovation { time, condition: cond });
            }
            // K = P B' S^-1
            let k_gain = chol.solve(&pb.transpose()).transpose();
            let x = &xp + &k_gain * &v;
            let ikb = DMatrix::identity(q, q) - &k_gain * &b;
            let mut p = &ikb * &pp * ikb.transpose() + (&k_gain * k_gain.transpose()) * eps;
            symmetrize(&mut p);
            let sv = chol.solve(&v);
            let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            out.loglik -= 0.5 * (n as f64 * (2.0 * PI).ln() + logdet + v.dot(&sv));
            (x, p)
        };
        check_finite(time, &x, &p)?;
        out.pred_mean.push(xp);
        out.pred_cov.push(pp);
        out.mean.push(x);
        out.cov.push(p);
    }
    if !out.loglik.is_finite() {
        return Err(Error::Numerical {
            time: steps.len(),
            detail: "non-finite log-likelihood".into(),
        });
    }
    Ok(out)
}

fn run_smoother(ss: &StateSpace, steps: &[Step<'_>]) -> Result<SmootherOutput> {
    let filt = run_filter(ss, steps)?;
    let n = steps.len();
    let q = ss.q();
    let mut trans = Transitions::new(ss);
    let mut mean = filt.mean.clone();
    let mut cov = filt.cov.clone();
    let mut lag_cov = vec![DMatrix::zeros(q, q); n + 1];
    for t in (0..n).rev() {
        let (f, _) = trans.get(steps[t].gap);
        // J_t' = Pp_{t+1}^-1 F P_t
        let jt = psd_solve(&filt.pred_cov[t + 1], &(f * &filt.cov[t]));
        let j = jt.transpose();
        let m = &filt.mean[t] + &j * (&mean[t + 1] - &filt.pred_mean[t + 1]);
        let mut p = &filt.cov[t] + &j * (&cov[t + 1] - &filt.pred_cov[t + 1]) * &jt;
        symmetrize(&mut p);
        check_finite(t, &m, &p)?;
        lag_cov[t + 1] = &cov[t + 1] * &jt;
        mean[t] = m;
        cov[t] = p;
    }
    Ok(SmootherOutput {
        mean,
        cov,
        lag_cov,
        loglik: filt.loglik,
    })
}

fn check_rows(ss: &StateSpace, panel: &PanelDataset) -> Result<()> {
    if ss.n_rows() != panel.n_rows() {
        return Err(Error::Dimension(format!(
            "state space has {} measurement rows, panel has {}",
            ss.n_rows(),
            panel.n_rows()
        )));
    }
    Ok(())
}

fn panel_steps(panel: &PanelDataset) -> Vec<Step<'_>> {
    (1..=panel.horizon())
        .map(|t| Step {
            obs: panel.observed(t),
            gap: 1,
        })
        .collect()
}

/// Forward pass over `t = 1..=T`.
pub fn filter(ss: &StateSpace, panel: &PanelDataset) -> Result<FilterOutput> {
    check_rows(ss, panel)?;
    run_filter(ss, &panel_steps(panel))
}

/// Smoothed means, covariances and lag-one covariances for `t = 0..=T`.
pub fn smooth(ss: &StateSpace, panel: &PanelDataset) -> Result<SmootherOutput> {
    check_rows(ss, panel)?;
    run_smoother(ss, &panel_steps(panel))
}

/// Smooths with the periods in `skip` removed from the time grid: the
/// transition across a removed period is `C^2` with the accumulated noise.
/// Output index `k` refers to the `k`-th kept period (0 is the prior).
/// Every skipped period must be unobserved.
pub fn smooth_skipping(ss: &StateSpace, panel: &PanelDataset, skip: &[usize]) -> Result<(Vec<usize>, SmootherOutput)> {
    check_rows(ss, panel)?;
    let mut kept = Vec::new();
    let mut steps = Vec::new();
    let mut gap = 0;
    for t in 1..=panel.horizon() {
        gap += 1;
        if skip.contains(&t) {
            if !panel.observed(t).is_empty() {
                return Err(Error::Dimension(format!("period {t} is observed and cannot be skipped")));
            }
            continue;
        }
        steps.push(Step {
            obs: panel.observed(t),
            gap,
        });
        kept.push(t);
        gap = 0;
    }
    Ok((kept, run_smoother(ss, &steps)?))
}

/// Gaussian log-likelihood of the observed cells by prediction-error
/// decomposition.
pub fn quasi_loglik(ss: &StateSpace, panel: &PanelDataset) -> Result<f64> {
    Ok(filter(ss, panel)?.loglik)
}
