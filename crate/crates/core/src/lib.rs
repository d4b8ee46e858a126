//! Multidimensional dynamic factor models.
//!
//! Ragged micro panels and macro aggregates are stacked into one masked
//! time series, cast as a linear Gaussian state space with smooth trends,
//! a common AR cycle and idiosyncratic AR(1) cycles, and estimated by a
//! penalized ECM algorithm driven by a missing-data Kalman smoother.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod ecm;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nowcast;
pub mod panel;
pub mod simulate;
pub mod smoother;

pub use config::{Hyperparameters, ModelConfig};
pub use ecm::{estimate, FittedModel};
pub use error::{Error, Result};
pub use model::{build_state_space, dims, ParameterVector, StateLayout, StateSpace};
pub use panel::{assemble_panel, PanelDataset};
pub use smoother::{filter, quasi_loglik, smooth, SmootherOutput};
