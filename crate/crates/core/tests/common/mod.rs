#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mdfm::config::{Hyperparameters, ModelConfig};
use mdfm::ecm::enforce_causality;
use mdfm::model::{ParameterVector, StateLayout, StateSpace};
use mdfm::panel::{PanelDataset, PanelLayout, RowEntity};
use mdfm::simulate::{default_truth, simulate, SimulationDesign};
use mdfm::smoother::SmootherOutput;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * gauss(rng))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
    &a * a.transpose() + DMatrix::identity(n, n) * 0.2
}

/// Panel of `n` macro rows and no groups from a dense mask.
pub fn macro_panel(rows: &[Vec<Option<f64>>]) -> PanelDataset {
    let layout = PanelLayout {
        macro_series: (0..rows.len()).map(|i| format!("s{i}")).collect(),
        groups: vec![],
    };
    PanelDataset::from_rows(&layout, &[], rows).unwrap()
}

pub struct RandomSystem {
    pub ss: StateSpace,
    pub panel: PanelDataset,
}

/// Unstructured system with `q <= max_q`, `T <= max_t` and a random
/// observation mask (fully missing periods included).
pub fn random_system(rng: &mut ChaCha8Rng, max_q: usize, max_t: usize) -> RandomSystem {
    let q = rng.random_range(1..=max_q);
    let r = rng.random_range(1..=q);
    let n = rng.random_range(1..=4);
    let t = rng.random_range(1..=max_t);
    let c = random_matrix(rng, q, q, 0.8 / (q as f64).sqrt());
    let d = random_matrix(rng, q, r, 1.0);
    let sigma = DVector::from_fn(r, |_, _| rng.random_range(0.2..1.5));
    let eps = rng.random_range(0.1..1.0);
    let mu0 = random_matrix(rng, q, 1, 1.0).column(0).into_owned();
    let omega0 = random_spd(rng, q);
    let b = random_matrix(rng, n, q, 1.0);
    let density = rng.random_range(0.2..0.9);
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| {
            (0..t)
                .map(|_| {
                    if rng.random::<f64>() < density {
                        Some(2.0 * gauss(rng))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let ss = StateSpace::from_matrices(b, c, d, sigma, eps, mu0, omega0).unwrap();
    RandomSystem {
        ss,
        panel: macro_panel(&rows),
    }
}

/// Moments of `(Phi_0, ..., Phi_T)` given the observed cells, by direct
/// conditioning of the joint Gaussian.
pub struct Conditional {
    pub q: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_density: f64,
}

impl Conditional {
    pub fn mean_at(&self, t: usize) -> DVector<f64> {
        self.mean.rows(t * self.q, self.q).into_owned()
    }

    pub fn block(&self, t: usize, s: usize) -> DMatrix<f64> {
        self.cov.view((t * self.q, s * self.q), (self.q, self.q)).into_owned()
    }
}

pub fn condition(ss: &StateSpace, panel: &PanelDataset) -> Conditional {
    let q = ss.q();
    let r = ss.r();
    let horizon = panel.horizon();
    let nx = q * (horizon + 1);
    let nw = q + r * horizon;
    // X = L w with w = (Phi_0, u_1, ..., u_T)
    let mut l = DMatrix::zeros(nx, nw);
    let mut power = vec![DMatrix::<f64>::identity(q, q)];
    for k in 1..=horizon {
        power.push(ss.c() * &power[k - 1]);
    }
    for t in 0..=horizon {
        l.view_mut((t * q, 0), (q, q)).copy_from(&power[t]);
        for s in 1..=t {
            let blk = &power[t - s] * ss.d();
            l.view_mut((t * q, q + (s - 1) * r), (q, r)).copy_from(&blk);
        }
    }
    let mut vw = DMatrix::zeros(nw, nw);
    vw.view_mut((0, 0), (q, q)).copy_from(ss.omega0());
    for s in 0..horizon {
        for i in 0..r {
            vw[(q + s * r + i, q + s * r + i)] = ss.sigma()[i];
        }
    }
    let mut mw = DVector::zeros(nw);
    mw.rows_mut(0, q).copy_from(ss.mu0());
    let mx = &l * &mw;
    let vx = &l * &vw * l.transpose();

    let b = ss.full_b();
    let mut h_rows = Vec::new();
    let mut y = Vec::new();
    for t in 1..=horizon {
        for &(row, v) in panel.observed(t) {
            let mut h = DVector::zeros(nx);
            for j in 0..q {
                h[t * q + j] = b[(row, j)];
            }
            h_rows.push(h.transpose());
            y.push(v);
        }
    }
    if y.is_empty() {
        return Conditional {
            q,
            mean: mx,
            cov: vx,
            log_density: 0.0,
        };
    }
    let h = DMatrix::from_rows(&h_rows);
    let y = DVector::from_vec(y);
    let n = y.len();
    let syy = &h * &vx * h.transpose() + DMatrix::identity(n, n) * ss.epsilon();
    let sxy = &vx * h.transpose();
    let chol = syy.clone().cholesky().expect("observation covariance is positive definite");
    let resid = &y - &h * &mx;
    let mean = &mx + &sxy * chol.solve(&resid);
    let cov = &vx - &sxy * chol.solve(&sxy.transpose());
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_density =
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + resid.dot(&chol.solve(&resid)));
    Conditional {
        q,
        mean,
        cov,
        log_density,
    }
}

pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > 1e-11 * (1.0 + lo.abs().max(hi.abs())) {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

pub fn small_config(m: usize, groups: usize, income: usize, lags: usize) -> ModelConfig {
    let trend_map = (0..groups)
        .map(|g| {
            (0..income)
                .map(|k| u8::from(k == g % income.max(1) || (k + 1 == income && g >= income)))
                .collect()
        })
        .collect();
    ModelConfig {
        macro_series: (0..m).map(|i| format!("m{i}")).collect(),
        groups: (0..groups).map(|g| format!("g{g}")).collect(),
        income_trends: income,
        trend_map,
        lags,
        penalty: Hyperparameters::default(),
        epsilon: 1e-2,
        max_iterations: 1000,
    }
}

/// Three macro series, two groups sharing two income trends, two lags.
pub fn study_config() -> ModelConfig {
    let mut cfg = small_config(3, 2, 2, 2);
    cfg.trend_map = vec![vec![1, 0], vec![1, 1]];
    cfg
}

pub fn study_design(seed: u64) -> SimulationDesign {
    SimulationDesign {
        horizon: 120,
        group_sizes: vec![60, 60],
        rotation: 4,
        missing_rate: 0.0,
        seed,
    }
}

/// A causal parameter vector away from the simulation truth.
pub fn random_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParameterVector {
    let layout = StateLayout::from_config(cfg);
    let mut p = default_truth(cfg);
    for k in 0..layout.n_idio() {
        p.pi[k] = rng.random_range(-0.7..0.9);
    }
    let cycle: Vec<f64> = (0..layout.lags).map(|_| rng.random_range(-0.9..1.3)).collect();
    for (j, v) in enforce_causality(&cycle).into_iter().enumerate() {
        p.pi[layout.n_idio() + j] = v;
    }
    p.lambda = p.lambda.map(|v| v + 0.3 * gauss(rng));
    for i in 0..layout.r() {
        p.sigma[i] *= rng.random_range(0.5..2.0);
    }
    for i in 0..layout.q() {
        p.mu0[i] = 0.5 * gauss(rng);
    }
    p
}

/// Small structured case: data simulated from the default truth.
pub fn structured_case(seed: u64) -> (ModelConfig, PanelDataset) {
    let mut r = rng(seed);
    let m = r.random_range(1..=3);
    let groups = r.random_range(1..=2);
    let income = r.random_range(1..=groups);
    let lags = r.random_range(1..=3);
    let cfg = small_config(m, groups, income, lags);
    let design = SimulationDesign {
        horizon: r.random_range(12..=24),
        group_sizes: vec![8; groups],
        rotation: 4,
        missing_rate: 0.1,
        seed,
    };
    let sim = simulate(&cfg, &default_truth(&cfg), &design).unwrap();
    (cfg, sim.panel)
}

pub fn compact_of(panel: &PanelDataset, row: usize) -> usize {
    match panel.row_entity(row) {
        RowEntity::Macro(i) => i,
        RowEntity::Group(g) => panel.n_macro() + g,
    }
}

/// `sum_t E[(Phi_{t,i} - c' Phi_{t-1})^2]` from the smoothed moments.
pub fn transition_row_sse(smo: &SmootherOutput, i: usize, c: &DVector<f64>, s: usize) -> f64 {
    let mut acc = 0.0;
    for t in 1..=s {
        let m1 = smo.mean(t);
        let m0 = smo.mean(t - 1);
        let mean_err = m1[i] - c.dot(m0);
        let var = smo.cov(t)[(i, i)] - 2.0 * (smo.lag_cov(t).row(i) * c)[(0, 0)]
            + (c.transpose() * smo.cov(t - 1) * c)[(0, 0)];
        acc += mean_err * mean_err + var;
    }
    acc
}

/// `sum E[(y - b' Phi_t)^2]` over observed cells of the rows selected.
pub fn measurement_sse(
    smo: &SmootherOutput,
    panel: &PanelDataset,
    b_full: &DMatrix<f64>,
    s: usize,
    keep: impl Fn(usize) -> bool,
) -> f64 {
    let mut acc = 0.0;
    for t in 1..=s {
        for &(row, y) in panel.observed(t) {
            if !keep(row) {
                continue;
            }
            let b = b_full.row(row).transpose();
            let e = y - b.dot(smo.mean(t));
            acc += e * e + (b.transpose() * smo.cov(t) * &b)[(0, 0)];
        }
    }
    acc
}

pub fn elastic_net(c: f64, w: f64, alpha: f64) -> f64 {
    0.5 * (1.0 - alpha) * w * c * c + 0.5 * alpha * w * c.abs()
}

/// Expected penalized complete-data log-likelihood evaluated from the
/// smoothed moments, the full measurement matrix and the definitions.
pub fn expected_objective_oracle(
    ss: &StateSpace,
    smo: &SmootherOutput,
    panel: &PanelDataset,
    layout: &StateLayout,
    params: &ParameterVector,
    gamma: &Hyperparameters,
) -> f64 {
    let s = panel.horizon();
    let n0 = layout.r() - 1 + layout.lags;
    let om = ss.omega0().view((0, 0), (n0, n0)).into_owned();
    let dm = smo.mean(0).rows(0, n0) - ss.mu0().rows(0, n0);
    let chol = om.cholesky().unwrap();
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let inv = chol.inverse();
    let init = -0.5 * logdet
        - 0.5 * ((&inv * smo.cov(0).view((0, 0), (n0, n0))).trace() + (dm.transpose() * &inv * &dm)[(0, 0)]);

    let mut trans = 0.0;
    for i in 0..layout.r() {
        let c = ss.c().row(i).transpose();
        let sig = ss.sigma()[i];
        trans += -0.5 * s as f64 * sig.ln() - 0.5 * transition_row_sse(smo, i, &c, s) / sig;
    }
    let meas = -0.5 * measurement_sse(smo, panel, &ss.full_b(), s, |_| true) / ss.epsilon();

    let mut pen = 0.0;
    for k in 0..layout.n_idio() {
        pen += elastic_net(params.pi[k], gamma.rho, gamma.alpha);
    }
    for j in 0..layout.lags {
        let w = gamma.rho * gamma.beta.powi(j as i32);
        pen += elastic_net(params.pi[layout.n_idio() + j], w, gamma.alpha);
        for l in 0..layout.n_loading_rows() {
            pen += elastic_net(params.lambda[(l, j)], w, gamma.alpha);
        }
    }
    init + trans + meas - pen
}
