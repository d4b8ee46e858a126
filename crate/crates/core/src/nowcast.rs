//! Pseudo real-time replay of a release calendar with frozen parameters.
//!
//! Calendar series identifiers are either a macro series name or
//! `micro:<group>:<subject>` for one household value.

use std::collections::BTreeMap;

use crate::ecm::FittedModel;
use crate::error::{Error, Result};
use crate::panel::{assemble_panel, AssembleOptions, MacroRecord, MicroRecord, PanelDataset, PanelLayout, RowEntity};
use crate::smoother::smooth;

/// One calendar line.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub release_date: i64,
    pub series: String,
    pub ref_period: usize,
    pub value: f64,
}

impl Release {
    pub fn new(release_date: i64, series: impl Into<String>, ref_period: usize, value: f64) -> Self {
        Self {
            release_date,
            series: series.into(),
            ref_period,
            value,
        }
    }
}

/// Calendar identifier of a micro cell.
pub fn micro_series_id(group: &str, subject: &str) -> String {
    format!("micro:{group}:{subject}")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Macro(usize),
    Micro { group: usize, subject: String },
}

/// Values released so far. Storage is keyed, so the state after a batch of
/// releases does not depend on their order.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationSet {
    layout: PanelLayout,
    horizon: usize,
    macro_cells: BTreeMap<(usize, usize), f64>,
    micro_cells: BTreeMap<(String, usize), f64>,
    micro_groups: BTreeMap<String, usize>,
    applied: usize,
}

impl InformationSet {
    pub fn new(layout: PanelLayout, horizon: usize) -> Self {
        Self {
            layout,
            horizon,
            macro_cells: BTreeMap::new(),
            micro_cells: BTreeMap::new(),
            micro_groups: BTreeMap::new(),
            applied: 0,
        }
    }

    /// Information set holding every cell of `panel`.
    pub fn from_panel(panel: &PanelDataset) -> Result<Self> {
        let mut info = Self::new(panel.layout().clone(), panel.horizon());
        for rel in panel_releases(panel, 0) {
            info.apply(&rel)?;
        }
        info.applied = 0;
        Ok(info)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of calendar lines applied so far.
    pub fn applied(&self) -> usize {
        self.applied
    }

    pub fn n_cells(&self) -> usize {
        self.macro_cells.len() + self.micro_cells.len()
    }

    fn parse(&self, series: &str) -> Result<Target> {
        if let Some(rest) = series.strip_prefix("micro:") {
            let (group, subject) = rest
                .split_once(':')
                .ok_or_else(|| Error::UnknownSeries(series.to_string()))?;
            let g = self
                .layout
                .groups
                .iter()
                .position(|l| l == group)
                .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
            return Ok(Target::Micro {
                group: g,
                subject: subject.to_string(),
            });
        }
        self.layout
            .macro_series
            .iter()
            .position(|s| s == series)
            .map(Target::Macro)
            .ok_or_else(|| Error::UnknownSeries(series.to_string()))
    }

    /// Adds one released value. Re-releasing an identical value is a no-op;
    /// a different value for a filled cell is a conflict.
    pub fn apply(&mut self, rel: &Release) -> Result<()> {
        if rel.ref_period == 0 || rel.ref_period > self.horizon {
            return Err(Error::Horizon {
                target: rel.ref_period,
                horizon: self.horizon,
            });
        }
        if !rel.value.is_finite() {
            return Err(Error::Dimension(format!("non-finite value released for `{}`", rel.series)));
        }
        let conflict = || Error::Conflict {
            cell: format!("`{}` at period {}", rel.series, rel.ref_period),
        };
        match self.parse(&rel.series)? {
            Target::Macro(i) => match self.macro_cells.get(&(i, rel.ref_period)) {
                Some(v) if v.to_bits() != rel.value.to_bits() => return Err(conflict()),
                Some(_) => {}
                None => {
                    self.macro_cells.insert((i, rel.ref_period), rel.value);
                }
            },
            Target::Micro { group, subject } => {
                match self.micro_groups.get(&subject) {
                    Some(&g) if g != group => {
                        return Err(Error::Inconsistent {
                            subject,
                            detail: "released under two groups".into(),
                        })
                    }
                    _ => {}
                }
                let key = (subject.clone(), rel.ref_period);
                match self.micro_cells.get(&key) {
                    Some(v) if v.to_bits() != rel.value.to_bits() => return Err(conflict()),
                    Some(_) => {}
                    None => {
                        self.micro_groups.insert(subject, group);
                        self.micro_cells.insert(key, rel.value);
                    }
                }
            }
        }
        self.applied += 1;
        Ok(())
    }

    /// Panel of the released cells over `1..=horizon`.
    pub fn to_panel(&self) -> Result<PanelDataset> {
        let macro_data: Vec<MacroRecord> = self
            .macro_cells
            .iter()
            .map(|(&(i, t), &v)| MacroRecord::new(t, self.layout.macro_series[i].clone(), v))
            .collect();
        let micro: Vec<MicroRecord> = self
            .micro_cells
            .iter()
            .map(|((s, t), &v)| MicroRecord::new(s.clone(), self.layout.groups[self.micro_groups[s]].clone(), *t, v))
            .collect();
        let opts = AssembleOptions {
            horizon: Some(self.horizon),
            group_sizes: None,
        };
        assemble_panel(&self.layout, &micro, &macro_data, &opts)
    }
}

/// Functional form of [`InformationSet::apply`].
pub fn apply_release(info: &InformationSet, rel: &Release) -> Result<InformationSet> {
    let mut next = info.clone();
    next.apply(rel)?;
    Ok(next)
}

/// Calendar lines reproducing every cell of `panel`, all dated `date`.
pub fn panel_releases(panel: &PanelDataset, date: i64) -> Vec<Release> {
    let mut out = Vec::new();
    for t in 1..=panel.horizon() {
        for &(row, v) in panel.observed(t) {
            let series = match panel.row_entity(row) {
                RowEntity::Macro(i) => panel.layout().macro_series[i].clone(),
                RowEntity::Group(g) => {
                    let (subject, _) = panel.row_subject(row).unwrap();
                    micro_series_id(&panel.layout().groups[g], subject)
                }
            };
            out.push(Release::new(date, series, t, v));
        }
    }
    out
}

/// One early estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyEstimate {
    pub release_date: i64,
    pub group: String,
    pub ref_period: usize,
    pub estimate: f64,
}

/// Smoothed group paths at `targets` given the information in `info`.
/// The estimate is trend plus common cycle plus the idiosyncratic group
/// cycle, or trend plus common cycle only with `core_only`.
pub fn early_estimates(
    fitted: &FittedModel,
    info: &InformationSet,
    targets: &[usize],
    core_only: bool,
) -> Result<Vec<(String, usize, f64)>> {
    for &t in targets {
        if t == 0 || t > info.horizon() {
            return Err(Error::Horizon {
                target: t,
                horizon: info.horizon(),
            });
        }
    }
    let panel = info.to_panel()?;
    let ss = fitted.state_space(&panel)?;
    let smo = smooth(&ss, &panel)?;
    let layout = fitted.layout();
    let b = ss.b_compact();
    let mut out = Vec::new();
    for (g, label) in fitted.config.groups.iter().enumerate() {
        let row = b.row(layout.n_macro + g);
        for &t in targets {
            let x = smo.mean(t);
            let mut v = 0.0;
            for j in 0..layout.q() {
                let idio = (layout.idio(0)..layout.idio(0) + layout.n_idio()).contains(&j);
                if !(core_only && idio) {
                    v += row[j] * x[j];
                }
            }
            out.push((label.clone(), t, v));
        }
    }
    Ok(out)
}

/// Applies the calendar date by date, re-smoothing after each date.
/// Lines sharing a date form one batch.
pub fn replay(
    fitted: &FittedModel,
    start: &InformationSet,
    calendar: &[Release],
    targets: &[usize],
    core_only: bool,
) -> Result<Vec<EarlyEstimate>> {
    let mut batches: BTreeMap<i64, Vec<&Release>> = BTreeMap::new();
    for rel in calendar {
        batches.entry(rel.release_date).or_default().push(rel);
    }
    let mut info = start.clone();
    let mut out = Vec::new();
    for (date, batch) in batches {
        for rel in batch {
            info.apply(rel)?;
        }
        for (group, t, estimate) in early_estimates(fitted, &info, targets, core_only)? {
            out.push(EarlyEstimate {
                release_date: date,
                group,
                ref_period: t,
                estimate,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> PanelLayout {
        PanelLayout {
            macro_series: vec!["x".into()],
            groups: vec!["g".into()],
        }
    }

    #[test]
    fn macro_release_fills_one_cell() {
        let info = InformationSet::new(layout(), 4);
        let next = apply_release(&info, &Release::new(1, "x", 2, 0.5)).unwrap();
        let panel = next.to_panel().unwrap();
        assert_eq!(panel.n_observations(), 1);
        assert_eq!(panel.value(0, 2), Some(0.5));
    }

    #[test]
    fn duplicates_and_conflicts() {
        let mut info = InformationSet::new(layout(), 4);
        info.apply(&Release::new(1, "micro:g:h1", 1, 2.0)).unwrap();
        info.apply(&Release::new(2, "micro:g:h1", 1, 2.0)).unwrap();
        assert_eq!(info.n_cells(), 1);
        assert!(matches!(
            info.apply(&Release::new(3, "micro:g:h1", 1, 2.5)),
            Err(Error::Conflict { .. })
        ));
        assert!(matches!(
            info.apply(&Release::new(3, "nope", 1, 2.5)),
            Err(Error::UnknownSeries(_))
        ));
        assert!(matches!(
            info.apply(&Release::new(3, "micro:zz:h1", 1, 2.5)),
            Err(Error::UnknownGroup(_))
        ));
        assert!(matches!(
            info.apply(&Release::new(3, "x", 9, 2.5)),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn permutations_give_identical_sets() {
        let rels = [
            Release::new(1, "x", 1, 0.1),
            Release::new(1, "micro:g:a", 1, 0.2),
            Release::new(1, "micro:g:b", 2, 0.3),
        ];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut reference = None;
        for perm in perms {
            let mut info = InformationSet::new(layout(), 3);
            for &i in &perm {
                info.apply(&rels[i]).unwrap();
            }
            let panel = info.to_panel().unwrap();
            match &reference {
                None => reference = Some((info, panel)),
                Some((ri, rp)) => {
                    assert_eq!(&info, ri);
                    assert_eq!(&panel, rp);
                }
            }
        }
    }
}
