//! Trend and cycle decompositions of the fitted model.

use crate::ecm::FittedModel;
use crate::error::{Error, Result};
use crate::linalg::quantile;
use crate::model::{StateLayout, StateSpace};
use crate::panel::{PanelDataset, RowEntity};
use crate::smoother::{smooth, SmootherOutput};

/// Smoothed components of one measurement row at one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub trend: f64,
    pub common: f64,
    pub idio: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.trend + self.common + self.idio
    }

    /// Trend plus common cycle.
    pub fn core(&self) -> f64 {
        self.trend + self.common
    }
}

/// One output line: an entity (macro series or group) at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRow {
    pub entity: String,
    pub time: usize,
    /// The observed value; for a group, the mean over observed members.
    pub observed: Option<f64>,
    pub components: Components,
    /// `observed - trend - common - idio`; present only where observed.
    pub residual: Option<f64>,
}

/// Per-entity decomposition over `t = 1..=T`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    entities: Vec<String>,
    n_macro: usize,
    // components[k][t - 1]
    components: Vec<Vec<Components>>,
    panel: PanelDataset,
}

fn split(ss: &StateSpace, layout: &StateLayout, k: usize, smo: &SmootherOutput, t: usize) -> Components {
    let b = ss.b_compact().row(k);
    let x = smo.mean(t);
    let dot = |range: std::ops::Range<usize>| range.map(|j| b[j] * x[j]).sum::<f64>();
    let nt = layout.n_trend();
    let ni = layout.n_idio();
    Components {
        trend: dot(0..nt),
        idio: dot(nt..nt + ni),
        common: dot(layout.psi(0)..layout.psi(0) + layout.lags),
    }
}

/// Decomposes every entity with a given smoother run.
pub fn decompose_with(ss: &StateSpace, smo: &SmootherOutput, panel: &PanelDataset) -> Result<Decomposition> {
    let layout = ss
        .structure()
        .map(|s| s.layout)
        .ok_or_else(|| Error::Layout("decomposition needs a structured state space".into()))?;
    let horizon = panel.horizon();
    let components = (0..layout.n_compact())
        .map(|k| (1..=horizon).map(|t| split(ss, &layout, k, smo, t)).collect())
        .collect();
    let mut entities = panel.layout().macro_series.clone();
    entities.extend(panel.layout().groups.iter().cloned());
    Ok(Decomposition {
        entities,
        n_macro: layout.n_macro,
        components,
        panel: panel.clone(),
    })
}

/// Smooths `panel` at the fitted parameters and decomposes it.
pub fn decompose(fitted: &FittedModel, panel: &PanelDataset) -> Result<Decomposition> {
    let ss = fitted.state_space(panel)?;
    let smo = smooth(&ss, panel)?;
    decompose_with(&ss, &smo, panel)
}

impl Decomposition {
    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    fn compact_of(&self, row: usize) -> usize {
        match self.panel.row_entity(row) {
            RowEntity::Macro(i) => i,
            RowEntity::Group(g) => self.n_macro + g,
        }
    }

    /// Components of entity `k` (macro series first, then groups) at `t`.
    pub fn components(&self, k: usize, t: usize) -> Components {
        self.components[k][t - 1]
    }

    /// Components and residual of panel row `row` at `t`; `None` when the
    /// cell is missing.
    pub fn cell(&self, row: usize, t: usize) -> Option<(Components, f64)> {
        let y = self.panel.value(row, t)?;
        let c = self.components(self.compact_of(row), t);
        Some((c, y - c.trend - c.common - c.idio))
    }

    fn observed_members(&self, k: usize, t: usize) -> Vec<f64> {
        self.panel
            .observed(t)
            .iter()
            .filter(|&&(row, _)| self.compact_of(row) == k)
            .map(|&(_, v)| v)
            .collect()
    }

    /// Output rows, entity-major.
    pub fn rows(&self) -> Vec<DecompositionRow> {
        let mut out = Vec::new();
        for (k, entity) in self.entities.iter().enumerate() {
            for t in 1..=self.panel.horizon() {
                let c = self.components(k, t);
                let vals = self.observed_members(k, t);
                let observed = if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                };
                out.push(DecompositionRow {
                    entity: entity.clone(),
                    time: t,
                    observed,
                    components: c,
                    residual: observed.map(|y| y - c.trend - c.common - c.idio),
                });
            }
        }
        out
    }

    pub fn group_index(&self, group: &str) -> Result<usize> {
        self.entities[self.n_macro..]
            .iter()
            .position(|g| g == group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))
    }

    /// Trend plus common cycle of `group` for `t = 1..=T`.
    pub fn core_driver(&self, group: &str) -> Result<Vec<f64>> {
        let g = self.group_index(group)?;
        Ok(self.components[self.n_macro + g].iter().map(Components::core).collect())
    }

    /// Mean and quartiles of the observed members of every group, with the
    /// group trend and core driver alongside.
    pub fn group_summary(&self) -> Vec<GroupSummaryRow> {
        let mut out = Vec::new();
        for g in 0..self.entities.len() - self.n_macro {
            let k = self.n_macro + g;
            for t in 1..=self.panel.horizon() {
                let vals = self.observed_members(k, t);
                let c = self.components(k, t);
                let stats = if vals.is_empty() {
                    None
                } else {
                    Some((
                        vals.iter().sum::<f64>() / vals.len() as f64,
                        quantile(&vals, 0.25),
                        quantile(&vals, 0.75),
                    ))
                };
                out.push(GroupSummaryRow {
                    group: self.entities[k].clone(),
                    time: t,
                    observed: vals.len(),
                    mean: stats.map(|s| s.0),
                    q25: stats.map(|s| s.1),
                    q75: stats.map(|s| s.2),
                    trend: c.trend,
                    core: c.core(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummaryRow {
    pub group: String,
    pub time: usize,
    pub observed: usize,
    pub mean: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub trend: f64,
    pub core: f64,
}

/// Core driver of `group` at the fitted parameters.
pub fn core_driver(fitted: &FittedModel, panel: &PanelDataset, group: &str) -> Result<Vec<f64>> {
    if !fitted.config.groups.iter().any(|g| g == group) {
        return Err(Error::UnknownGroup(group.to_string()));
    }
    decompose(fitted, panel)?.core_driver(group)
}
