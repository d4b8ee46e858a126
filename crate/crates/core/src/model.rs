//! State-space representation.
//!
//! State vector layout (0-based), with `nT` trends, `nI` idiosyncratic
//! cycles and `p` cycle lags:
//!
//! ```text
//! [ trends 0..nT | idio nT..nT+nI | psi_t..psi_{t-p+1} | lagged trends ]
//! ```
//!
//! The first `r = nT + nI + 1` states receive innovations; `psi_t` sits at
//! index `r - 1`. Measurement rows are stored compactly, one per macro
//! series and one per group, and expanded to the panel's rows on demand.

use nalgebra::{DMatrix, DVector};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::companion_radius;
use crate::panel::{PanelDataset, RowEntity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_macro: usize,
    pub n_income: usize,
    pub n_groups: usize,
    pub lags: usize,
}

impl StateLayout {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            n_macro: cfg.n_macro(),
            n_income: cfg.income_trends,
            n_groups: cfg.n_groups(),
            lags: cfg.lags,
        }
    }

    pub fn n_trend(&self) -> usize {
        self.n_macro + self.n_income
    }

    pub fn n_idio(&self) -> usize {
        self.n_macro + self.n_groups
    }

    pub fn r(&self) -> usize {
        self.n_trend() + self.n_idio() + 1
    }

    pub fn q(&self) -> usize {
        2 * self.n_trend() + self.n_idio() + self.lags
    }

    pub fn trend(&self, i: usize) -> usize {
        i
    }

    pub fn idio(&self, k: usize) -> usize {
        self.n_trend() + k
    }

    /// State index of `psi_{t-j}`.
    pub fn psi(&self, j: usize) -> usize {
        self.r() - 1 + j
    }

    pub fn lagged_trend(&self, i: usize) -> usize {
        self.n_trend() + self.n_idio() + self.lags + i
    }

    /// Compact measurement rows: macro series then groups.
    pub fn n_compact(&self) -> usize {
        self.n_macro + self.n_groups
    }

    /// Rows of the free loading matrix.
    pub fn n_loading_rows(&self) -> usize {
        self.n_macro - 1 + self.n_groups
    }

    /// Compact measurement row driven by loading row `l`.
    pub fn loading_compact_row(&self, l: usize) -> usize {
        l + 1
    }

    pub fn n_pi(&self) -> usize {
        self.n_idio() + self.lags
    }

    /// Whether `Omega_0[(i, j)]` may be non-zero: the diagonal of the
    /// innovated states before the cycle, plus the full cycle-lag block.
    pub fn omega_allowed(&self, i: usize, j: usize) -> bool {
        let r = self.r();
        let cycle = (r - 1)..(r - 1 + self.lags);
        (i == j && i < r - 1) || (cycle.contains(&i) && cycle.contains(&j))
    }

    /// Free `Omega_0` coordinates `(i, j)` with `i >= j`, column-major.
    pub fn omega_support(&self) -> Vec<(usize, usize)> {
        let q = self.q();
        let mut out = Vec::new();
        for j in 0..q {
            for i in j..q {
                if self.omega_allowed(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.q() + self.omega_support().len() + self.n_loading_rows() * self.lags + self.n_pi() + self.r()
    }
}

/// `(q, r)`: state and innovation dimensions.
pub fn dims(cfg: &ModelConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    let l = StateLayout::from_config(cfg);
    Ok((l.q(), l.r()))
}

/// Free parameters `(mu0, Omega_0, Lambda, pi, diag Sigma)`.
///
/// `pi` holds the idiosyncratic AR(1) coefficients (macro then groups)
/// followed by the `p` cycle coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub mu0: DVector<f64>,
    pub omega0: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub sigma: DVector<f64>,
}

impl ParameterVector {
    pub fn zeros(layout: &StateLayout) -> Self {
        Self {
            mu0: DVector::zeros(layout.q()),
            omega0: DMatrix::zeros(layout.q(), layout.q()),
            lambda: DMatrix::zeros(layout.n_loading_rows(), layout.lags),
            pi: DVector::zeros(layout.n_pi()),
            sigma: DVector::from_element(layout.r(), 1.0),
        }
    }

    pub fn idio_pi(&self, layout: &StateLayout) -> Vec<f64> {
        self.pi.iter().take(layout.n_idio()).copied().collect()
    }

    pub fn cycle_pi(&self, layout: &StateLayout) -> Vec<f64> {
        self.pi.iter().skip(layout.n_idio()).copied().collect()
    }

    pub fn check_shape(&self, layout: &StateLayout) -> Result<()> {
        let (q, r) = (layout.q(), layout.r());
        let ok = self.mu0.len() == q
            && self.omega0.shape() == (q, q)
            && self.lambda.shape() == (layout.n_loading_rows(), layout.lags)
            && self.pi.len() == layout.n_pi()
            && self.sigma.len() == r;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "parameter shapes do not match layout (q={q}, r={r}, p={})",
                layout.lags
            )))
        }
    }

    /// Stacks the free parameters in the canonical order.
    pub fn flatten(&self, layout: &StateLayout) -> Vec<f64> {
        let mut out = Vec::with_capacity(layout.n_params());
        out.extend(self.mu0.iter());
        out.extend(layout.omega_support().iter().map(|&(i, j)| self.omega0[(i, j)]));
        out.extend(self.lambda.iter());
        out.extend(self.pi.iter());
        out.extend(self.sigma.iter());
        out
    }

    pub fn from_flat(layout: &StateLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.n_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                layout.n_params(),
                flat.len()
            )));
        }
        let mut p = Self::zeros(layout);
        let mut it = flat.iter().copied();
        for v in p.mu0.iter_mut() {
            *v = it.next().unwrap();
        }
        for (i, j) in layout.omega_support() {
            let v = it.next().unwrap();
            p.omega0[(i, j)] = v;
            p.omega0[(j, i)] = v;
        }
        for v in p.lambda.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in p.pi.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in p.sigma.iter_mut() {
            *v = it.next().unwrap();
        }
        Ok(p)
    }

    /// Zeroes `Omega_0` outside the allowed pattern.
    pub fn mask_omega(&mut self, layout: &StateLayout) {
        let q = layout.q();
        for i in 0..q {
            for j in 0..q {
                if !layout.omega_allowed(i, j) {
                    self.omega0[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Structural information carried by a state space built from a config.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub layout: StateLayout,
    pub trend_map: Vec<Vec<u8>>,
}

/// Linear Gaussian state space
///
/// ```text
/// Y_t = B Phi_t + e_t,          e_t ~ N(0, eps I)
/// Phi_t = C Phi_{t-1} + D u_t,  u_t ~ N(0, Sigma)
/// Phi_0 ~ N(mu0, Omega_0)
/// ```
///
/// `B` is stored as compact rows plus a map from panel rows to them.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    b_compact: DMatrix<f64>,
    row_map: Vec<usize>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    sigma: DVector<f64>,
    epsilon: f64,
    mu0: DVector<f64>,
    omega0: DMatrix<f64>,
    structure: Option<Structure>,
}

impl StateSpace {
    /// Unstructured system with one measurement row per row of `b`.
    pub fn from_matrices(
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        sigma: DVector<f64>,
        epsilon: f64,
        mu0: DVector<f64>,
        omega0: DMatrix<f64>,
    ) -> Result<Self> {
        let q = c.nrows();
        if c.ncols() != q
            || b.ncols() != q
            || d.nrows() != q
            || d.ncols() != sigma.len()
            || mu0.len() != q
            || omega0.shape() != (q, q)
        {
            return Err(Error::Dimension("inconsistent state-space matrices".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::Parameter("innovation variances must be >= 0".into()));
        }
        let row_map = (0..b.nrows()).collect();
        Ok(Self {
            b_compact: b,
            row_map,
            c,
            d,
            sigma,
            epsilon,
            mu0,
            omega0,
            structure: None,
        })
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    pub fn r(&self) -> usize {
        self.d.ncols()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn omega0(&self) -> &DMatrix<f64> {
        &self.omega0
    }

    pub fn structure(&self) -> Option<&Structure> {
        self.structure.as_ref()
    }

    /// `D Sigma D'`.
    pub fn state_noise(&self) -> DMatrix<f64> {
        let ds = &self.d * DMatrix::from_diagonal(&self.sigma);
        &ds * self.d.transpose()
    }

    pub fn n_rows(&self) -> usize {
        self.row_map.len()
    }

    pub fn b_compact(&self) -> &DMatrix<f64> {
        &self.b_compact
    }

    pub fn compact_row_of(&self, row: usize) -> usize {
        self.row_map[row]
    }

    /// Measurement coefficients of panel row `row`.
    pub fn b_row(&self, row: usize) -> DVector<f64> {
        let k = self.row_map[row];
        self.b_compact.row(k).transpose()
    }

    /// The full `rows x q` measurement matrix.
    pub fn full_b(&self) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_fn(self.n_rows(), q, |i, j| self.b_compact[(self.row_map[i], j)])
    }

    /// Copy with measurement rows expanded for `panel`.
    pub fn for_panel(&self, panel: &PanelDataset) -> Result<Self> {
        let mut out = self.clone();
        out.row_map = row_map_for(self.b_compact.nrows(), panel)?;
        Ok(out)
    }
}

fn row_map_for(n_compact: usize, panel: &PanelDataset) -> Result<Vec<usize>> {
    let m = panel.n_macro();
    if m + panel.n_groups() != n_compact {
        return Err(Error::Layout(format!(
            "panel has {} macro series and {} groups, model has {n_compact} compact rows",
            m,
            panel.n_groups()
        )));
    }
    Ok(panel
        .row_entities()
        .iter()
        .map(|e| match *e {
            RowEntity::Macro(i) => i,
            RowEntity::Group(g) => m + g,
        })
        .collect())
}

/// Transition matrix implied by `pi`.
pub fn transition_matrix(layout: &StateLayout, pi: &DVector<f64>) -> DMatrix<f64> {
    let q = layout.q();
    let mut c = DMatrix::zeros(q, q);
    for i in 0..layout.n_trend() {
        c[(layout.trend(i), layout.trend(i))] = 2.0;
        c[(layout.trend(i), layout.lagged_trend(i))] = -1.0;
        c[(layout.lagged_trend(i), layout.trend(i))] = 1.0;
    }
    for k in 0..layout.n_idio() {
        c[(layout.idio(k), layout.idio(k))] = pi[k];
    }
    for j in 0..layout.lags {
        c[(layout.psi(0), layout.psi(j))] = pi[layout.n_idio() + j];
        if j > 0 {
            c[(layout.psi(j), layout.psi(j - 1))] = 1.0;
        }
    }
    c
}

/// Compact measurement matrix: one row per macro series, one per group.
pub fn compact_measurement(
    layout: &StateLayout,
    trend_map: &[Vec<u8>],
    lambda: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(layout.n_compact(), layout.q());
    for m in 0..layout.n_macro {
        b[(m, layout.trend(m))] = 1.0;
        b[(m, layout.idio(m))] = 1.0;
    }
    b[(0, layout.psi(0))] = 1.0;
    for g in 0..layout.n_groups {
        let row = layout.n_macro + g;
        for (k, &on) in trend_map[g].iter().enumerate() {
            if on == 1 {
                b[(row, layout.trend(layout.n_macro + k))] = 1.0;
            }
        }
        b[(row, layout.idio(layout.n_macro + g))] = 1.0;
    }
    for l in 0..layout.n_loading_rows() {
        let row = layout.loading_compact_row(l);
        for j in 0..layout.lags {
            b[(row, layout.psi(j))] = lambda[(l, j)];
        }
    }
    b
}

/// Builds the structured system for `cfg` and `params`.
///
/// Rejects non-causal AR blocks (radius >= 1) and non-positive innovation
/// variances. Measurement rows are compact until expanded with
/// [`StateSpace::for_panel`] or by passing a panel here.
pub fn build_state_space(
    cfg: &ModelConfig,
    params: &ParameterVector,
    panel: Option<&PanelDataset>,
) -> Result<StateSpace> {
    cfg.validate()?;
    let layout = StateLayout::from_config(cfg);
    params.check_shape(&layout)?;
    if let Some(bad) = params.sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!(
            "innovation variance {bad} must be positive, got {}",
            params.sigma[bad]
        )));
    }
    for (k, &a) in params.idio_pi(&layout).iter().enumerate() {
        if !(a.abs() < 1.0) {
            return Err(Error::NonCausal {
                block: format!("idio[{k}]"),
                radius: a.abs(),
            });
        }
    }
    let radius = companion_radius(&params.cycle_pi(&layout));
    if !(radius < 1.0) {
        return Err(Error::NonCausal {
            block: "cycle".into(),
            radius,
        });
    }
    if params.mu0.iter().chain(params.omega0.iter()).chain(params.lambda.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite parameter".into()));
    }

    let q = layout.q();
    let r = layout.r();
    let d = DMatrix::from_fn(q, r, |i, j| if i == j { 1.0 } else { 0.0 });
    let mut omega0 = params.omega0.clone();
    for i in 0..q {
        for j in 0..q {
            if !layout.omega_allowed(i, j) {
                omega0[(i, j)] = 0.0;
            }
        }
    }
    let b_compact = compact_measurement(&layout, &cfg.trend_map, &params.lambda);
    let row_map = match panel {
        Some(p) => row_map_for(layout.n_compact(), p)?,
        None => (0..layout.n_compact()).collect(),
    };
    Ok(StateSpace {
        b_compact,
        row_map,
        c: transition_matrix(&layout, &params.pi),
        d,
        sigma: params.sigma.clone(),
        epsilon: cfg.epsilon,
        mu0: params.mu0.clone(),
        omega0,
        structure: Some(Structure {
            layout,
            trend_map: cfg.trend_map.clone(),
        }),
    })
}

/// Observed values at `t` and the matching rows of `B`, in row order.
/// Times without observations give empty outputs.
pub fn measurement_at(ss: &StateSpace, panel: &PanelDataset, t: usize) -> (DVector<f64>, DMatrix<f64>) {
    let obs = panel.observed(t);
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|&(_, v)| v));
    let q = ss.q();
    let b = DMatrix::from_fn(obs.len(), q, |i, j| ss.b_compact()[(ss.compact_row_of(obs[i].0), j)]);
    (y, b)
}
