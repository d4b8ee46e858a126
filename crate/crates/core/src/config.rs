//! Model configuration: dimensions, group layout, trend sharing and
//! penalty hyperparameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elastic-net hyperparameters `(rho, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            rho: 2.573,
            alpha: 0.667,
            beta: 1.326,
        }
    }
}

impl Hyperparameters {
    pub fn unpenalized() -> Self {
        Self {
            rho: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// Diagonal of `Gamma(gamma, l) = rho * diag(1, beta, ..., beta^(l-1))`.
    pub fn gamma_diag(&self, l: usize) -> Vec<f64> {
        (0..l).map(|k| self.rho * self.beta.powi(k as i32)).collect()
    }
}

fn default_epsilon() -> f64 {
    1e-2
}

fn default_max_iterations() -> usize {
    1000
}

/// Structural description of the model.
///
/// Macro series occupy the first `M` measurement rows in the order of
/// `macro_series`; micro rows follow grouped in the order of `groups`.
/// Trends are `M` macro trends followed by `income_trends` shared micro
/// trends; `trend_map[g][k] == 1` adds income trend `k` to group `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub macro_series: Vec<String>,
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default)]
    pub income_trends: usize,
    #[serde(default)]
    pub trend_map: Vec<Vec<u8>>,
    pub lags: usize,
    #[serde(default)]
    pub penalty: Hyperparameters,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl ModelConfig {
    /// Eight macro aggregates, four education x ethnicity groups, three
    /// shared income trends and four cycle lags.
    pub fn paper_default() -> Self {
        let macro_series = [
            "GDPC1", "PCECC96", "GPDIC1", "PAYEMS", "EMRATIO", "UNRATE", "WTISPLC", "PCEPI",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let groups = ["00", "01", "10", "11"].iter().map(|s| s.to_string()).collect();
        Self {
            macro_series,
            groups,
            income_trends: 3,
            trend_map: vec![vec![1, 0, 0], vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 1]],
            lags: 4,
            penalty: Hyperparameters::default(),
            epsilon: default_epsilon(),
            max_iterations: default_max_iterations(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_macro(&self) -> usize {
        self.macro_series.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn trend_count(&self) -> usize {
        self.n_macro() + self.income_trends
    }

    pub fn idio_count(&self) -> usize {
        self.n_macro() + self.n_groups()
    }

    /// Rows of the free loading matrix: every macro series but the first,
    /// then one row per group.
    pub fn loading_rows(&self) -> usize {
        self.n_macro() - 1 + self.n_groups()
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    pub fn series_index(&self, name: &str) -> Option<usize> {
        self.macro_series.iter().position(|s| s == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.macro_series.is_empty() {
            return Err(Error::Config("at least one macro series is required".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("lags must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        self.penalty.validate()?;
        let mut names = self.macro_series.clone();
        names.sort();
        names.dedup();
        if names.len() != self.macro_series.len() {
            return Err(Error::Config("duplicate macro series names".into()));
        }
        let mut groups = self.groups.clone();
        groups.sort();
        groups.dedup();
        if groups.len() != self.groups.len() {
            return Err(Error::Config("duplicate group labels".into()));
        }
        if self.trend_map.len() != self.n_groups() {
            return Err(Error::Config(format!(
                "trend_map has {} rows, expected one per group ({})",
                self.trend_map.len(),
                self.n_groups()
            )));
        }
        for (g, row) in self.trend_map.iter().enumerate() {
            if row.len() != self.income_trends {
                return Err(Error::Config(format!(
                    "trend_map row {g} has {} entries, expected {}",
                    row.len(),
                    self.income_trends
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::Config(format!("trend_map row {g} must be binary")));
            }
            if row.iter().all(|&v| v == 0) {
                return Err(Error::Config(format!("trend_map row {g} selects no trend")));
            }
        }
        Ok(())
    }
}
