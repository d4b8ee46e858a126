use thiserror::Error;

/// Errors raised by the panel, model, smoother and estimation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("inconsistent subject `{subject}`: {detail}")]
    Inconsistent { subject: String, detail: String },

    #[error("conflicting value for {cell}")]
    Conflict { cell: String },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-causal autoregressive block `{block}` (companion spectral radius {radius:.6})")]
    NonCausal { block: String, radius: f64 },

    #[error("numerical failure at t={time}: {detail}")]
    Numerical { time: usize, detail: String },

    #[error("singular innovation covariance at t={time} (condition estimate {condition:.3e})")]
    SingularInnovation { time: usize, condition: f64 },

    #[error("degenerate coordinate update for {coordinate}")]
    DegenerateUpdate { coordinate: String },

    #[error("target period {target} outside horizon 1..={horizon}")]
    Horizon { target: usize, horizon: usize },

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("estimation failed at iteration {iteration}: {source}")]
    Estimation {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
