//! Penalized ECM estimation.
//!
//! Each iteration smooths the panel at the current parameters, collects
//! the E-step statistics and then updates, in order, the initial
//! conditions, the transition coefficients (followed by the causality
//! projection), the innovation variances and the loadings.

mod causality;
mod cm;
mod convergence;
mod estep;
mod init;

pub use causality::{enforce_causality, enforce_causality_pi, MAX_RADIUS};
pub use cm::{
    cm_step_initial, cm_step_innovations, cm_step_loadings, cm_step_transition, expected_objective, loading_terms,
    penalty, soft_threshold, transition_coordinate, transition_coordinates, LoadingUpdate,
};
pub use convergence::{check_convergence, Convergence, DELTA_FLOOR, MEDIAN_TOL, Q95_TOL};
pub use estep::{e_step, g_hat, EcmWorkspace};
pub use init::{group_means, initialize, initialize_detailed, Initialization};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{build_state_space, ParameterVector, StateLayout, StateSpace};
use crate::panel::PanelDataset;
use crate::smoother::{smooth, SmootherOutput};

/// One row of the estimation trace. Iteration 0 is the starting point and
/// has no parameter change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Observed-data log-likelihood minus the penalty.
    pub objective: f64,
    pub median_delta: Option<f64>,
    pub q95_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub params: ParameterVector,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn layout(&self) -> StateLayout {
        StateLayout::from_config(&self.config)
    }

    /// State space expanded to the rows of `panel`.
    pub fn state_space(&self, panel: &PanelDataset) -> Result<StateSpace> {
        build_state_space(&self.config, &self.params, Some(panel))
    }
}

/// What an observer sees after each completed iteration.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub params: &'a ParameterVector,
    pub state_space: &'a StateSpace,
    pub smoothed: &'a SmootherOutput,
    pub row: &'a TraceRow,
    pub flagged_loadings: &'a [(usize, usize)],
}

/// Estimates from the default starting values.
pub fn estimate(panel: &PanelDataset, cfg: &ModelConfig) -> Result<FittedModel> {
    estimate_with_observer(panel, cfg, None, |_| {})
}

/// Runs the ECM loop from `initial` (or the default starting values) and
/// calls `observer` after every iteration.
pub fn estimate_with_observer<F>(
    panel: &PanelDataset,
    cfg: &ModelConfig,
    initial: Option<ParameterVector>,
    mut observer: F,
) -> Result<FittedModel>
where
    F: FnMut(&IterationView<'_>),
{
    cfg.validate()?;
    let layout = StateLayout::from_config(cfg);
    let wrap = |iteration: usize| move |e: Error| Error::Estimation {
        iteration,
        source: Box::new(e),
    };
    let mut params = match initial {
        Some(p) => {
            p.check_shape(&layout)?;
            p
        }
        None => initialize(panel, cfg).map_err(wrap(0))?,
    };
    let s = panel.horizon();

    let mut ss = build_state_space(cfg, &params, Some(panel)).map_err(wrap(0))?;
    let mut smo = smooth(&ss, panel).map_err(wrap(0))?;
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: smo.loglik() - penalty(&params, &layout, &cfg.penalty),
        median_delta: None,
        q95_delta: None,
    }];
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iterations {
        let ws = e_step(&smo, panel, &layout, s).map_err(wrap(k))?;
        let (next, flagged) = cm_sweep(&ws, &layout, cfg, &params).map_err(wrap(k))?;
        let conv = check_convergence(&params.flatten(&layout), &next.flatten(&layout));
        params = next;
        ss = build_state_space(cfg, &params, Some(panel)).map_err(wrap(k))?;
        smo = smooth(&ss, panel).map_err(wrap(k))?;
        let row = TraceRow {
            iteration: k,
            objective: smo.loglik() - penalty(&params, &layout, &cfg.penalty),
            median_delta: Some(conv.median),
            q95_delta: Some(conv.q95),
        };
        trace.push(row);
        iterations = k;
        observer(&IterationView {
            iteration: k,
            params: &params,
            state_space: &ss,
            smoothed: &smo,
            row: &row,
            flagged_loadings: &flagged,
        });
        if conv.converged {
            converged = true;
            break;
        }
    }

    Ok(FittedModel {
        config: cfg.clone(),
        params,
        trace,
        converged,
        iterations,
    })
}

/// One full round of conditional maximization steps.
pub fn cm_sweep(
    ws: &EcmWorkspace,
    layout: &StateLayout,
    cfg: &ModelConfig,
    params: &ParameterVector,
) -> Result<(ParameterVector, Vec<(usize, usize)>)> {
    let (mu0, omega0) = cm_step_initial(ws, layout);
    let pi = cm_step_transition(ws, layout, &params.pi, &params.sigma, &cfg.penalty)?;
    let pi = enforce_causality_pi(layout, &pi);
    let sigma = cm_step_innovations(ws, layout, &pi)?;
    let upd = cm_step_loadings(ws, layout, &cfg.trend_map, &params.lambda, &cfg.penalty, cfg.epsilon);
    Ok((
        ParameterVector {
            mu0,
            omega0,
            lambda: upd.lambda,
            pi,
            sigma,
        },
        upd.flagged,
    ))
}
