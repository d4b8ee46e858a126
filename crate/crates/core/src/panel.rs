//! Ragged panel ingestion.
//!
//! Subjects observed at irregular times are given stable identifiers and
//! reshaped into one tall vector per period. Rows are laid out as the `M`
//! macro series first, then the micro subjects grouped in configuration
//! order. Observations are stored sparsely per period, so a row that is
//! not stored at `t` is missing, while a stored `0.0` is a real zero.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use nalgebra::DMatrix;

use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// Stacks a period's `N_t x K` cross-section subject by subject:
/// `(H_11, .., H_1K, .., H_N1, .., H_NK)`.
pub fn vectorise_cross_section(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "cross-section must be non-empty, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(h.row_iter().flat_map(|row| row.iter().copied().collect::<Vec<_>>()).collect())
}

/// One sighting of a subject: at `time` it reported `characteristics` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Appearance {
    pub subject: String,
    pub time: usize,
    pub characteristics: usize,
}

impl Appearance {
    pub fn new(subject: impl Into<String>, time: usize, characteristics: usize) -> Self {
        Self {
            subject: subject.into(),
            time,
            characteristics,
        }
    }
}

/// Identifier assignment for subject-characteristic pairs.
///
/// Subject `n` (0-based, in first-appearance order) owns identifiers
/// `n*K + 1 ..= n*K + K`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubjectRegistry {
    k: usize,
    subjects: Vec<String>,
    lookup: HashMap<String, usize>,
    times: Vec<BTreeSet<usize>>,
    horizon: usize,
}

/// Builds the registry from a stream of appearances, in stream order.
pub fn assign_identifiers<I>(stream: I) -> Result<SubjectRegistry>
where
    I: IntoIterator<Item = Appearance>,
{
    let mut reg = SubjectRegistry::default();
    for app in stream {
        if app.time == 0 {
            return Err(Error::Dimension(format!(
                "subject `{}` appears at time 0; times start at 1",
                app.subject
            )));
        }
        if app.characteristics == 0 {
            return Err(Error::Inconsistent {
                subject: app.subject,
                detail: "appearance with zero characteristics".into(),
            });
        }
        if reg.subjects.is_empty() {
            reg.k = app.characteristics;
        } else if app.characteristics != reg.k {
            return Err(Error::Inconsistent {
                subject: app.subject,
                detail: format!(
                    "reported {} characteristics, registry has K={}",
                    app.characteristics, reg.k
                ),
            });
        }
        let n = match reg.lookup.get(&app.subject) {
            Some(&n) => n,
            None => {
                let n = reg.subjects.len();
                reg.lookup.insert(app.subject.clone(), n);
                reg.subjects.push(app.subject.clone());
                reg.times.push(BTreeSet::new());
                n
            }
        };
        reg.times[n].insert(app.time);
        reg.horizon = reg.horizon.max(app.time);
    }
    Ok(reg)
}

impl SubjectRegistry {
    /// Number of unique subjects `N`.
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Latest time seen in the stream.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn ordinal(&self, subject: &str) -> Option<usize> {
        self.lookup.get(subject).copied()
    }

    /// 1-based identifier of characteristic `c` (0-based) of `subject`.
    pub fn identifier(&self, subject: &str, c: usize) -> Option<usize> {
        if c >= self.k {
            return None;
        }
        self.ordinal(subject).map(|n| n * self.k + c + 1)
    }

    /// Times at which identifier `id` (1-based) was observed.
    pub fn observed_times(&self, id: usize) -> Option<&BTreeSet<usize>> {
        if id == 0 || self.k == 0 {
            return None;
        }
        self.times.get((id - 1) / self.k)
    }

    pub fn subject_times(&self, subject: &str) -> Option<&BTreeSet<usize>> {
        self.ordinal(subject).map(|n| &self.times[n])
    }

    /// Identifiers observed at `t`.
    pub fn identifiers_at(&self, t: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for (n, ts) in self.times.iter().enumerate() {
            if ts.contains(&t) {
                out.extend((0..self.k).map(|c| n * self.k + c + 1));
            }
        }
        out
    }

    /// Union of all observation times.
    pub fn all_times(&self) -> BTreeSet<usize> {
        self.times.iter().flatten().copied().collect()
    }
}

/// Row ordering inputs: macro series names and group labels, both in
/// model order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayout {
    pub macro_series: Vec<String>,
    pub groups: Vec<String>,
}

impl From<&ModelConfig> for PanelLayout {
    fn from(cfg: &ModelConfig) -> Self {
        Self {
            macro_series: cfg.macro_series.clone(),
            groups: cfg.groups.clone(),
        }
    }
}

/// One value of one characteristic of a micro subject.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroRecord {
    pub subject: String,
    pub group: String,
    pub time: usize,
    pub characteristic: String,
    pub value: f64,
}

impl MicroRecord {
    pub fn new(subject: impl Into<String>, group: impl Into<String>, time: usize, value: f64) -> Self {
        Self {
            subject: subject.into(),
            group: group.into(),
            time,
            characteristic: String::new(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroRecord {
    pub time: usize,
    pub series: String,
    pub value: f64,
}

impl MacroRecord {
    pub fn new(time: usize, series: impl Into<String>, value: f64) -> Self {
        Self {
            time,
            series: series.into(),
            value,
        }
    }
}

/// What a measurement row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowEntity {
    Macro(usize),
    Group(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct PanelSubject {
    key: String,
    group: usize,
    first_row: usize,
}

/// The reshaped panel `Y_1..Y_T` with its observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    horizon: usize,
    k: usize,
    layout: PanelLayout,
    group_sizes: Vec<usize>,
    subjects: Vec<PanelSubject>,
    row_entity: Vec<RowEntity>,
    // per period (index t-1), sorted by row
    obs: Vec<Vec<(usize, f64)>>,
    registry: SubjectRegistry,
}

/// Options for [`assemble_panel`].
#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Minimum time span; the panel covers `1..=max(horizon, last time seen)`.
    pub horizon: Option<usize>,
    /// Expected per-group subject counts.
    pub group_sizes: Option<Vec<usize>>,
}

/// Places micro and macro records into the tall panel.
///
/// Subjects receive identifiers by first appearance after a stable sort on
/// time, so the file order of records only breaks ties within a period.
pub fn assemble_panel(
    layout: &PanelLayout,
    micro: &[MicroRecord],
    macro_data: &[MacroRecord],
    opts: &AssembleOptions,
) -> Result<PanelDataset> {
    let m = layout.macro_series.len();

    let mut order: Vec<usize> = (0..micro.len()).collect();
    order.sort_by_key(|&i| micro[i].time);

    // characteristic labels in first-appearance order
    let mut chars: Vec<&str> = Vec::new();
    for &i in &order {
        let c = micro[i].characteristic.as_str();
        if !chars.contains(&c) {
            chars.push(c);
        }
    }
    let k = chars.len().max(1);

    let mut subject_group: HashMap<&str, usize> = HashMap::new();
    let mut cells: HashMap<(&str, usize), Vec<Option<f64>>> = HashMap::new();
    let mut appearances: Vec<(&str, usize)> = Vec::new();
    for &i in &order {
        let rec = &micro[i];
        if rec.time == 0 {
            return Err(Error::Dimension(format!(
                "micro record for `{}` at time 0; times start at 1",
                rec.subject
            )));
        }
        let g = layout
            .groups
            .iter()
            .position(|l| *l == rec.group)
            .ok_or_else(|| Error::Layout(format!("subject `{}` has unknown group `{}`", rec.subject, rec.group)))?;
        match subject_group.get(rec.subject.as_str()) {
            Some(&prev) if prev != g => {
                return Err(Error::Inconsistent {
                    subject: rec.subject.clone(),
                    detail: format!(
                        "group changed from `{}` to `{}`",
                        layout.groups[prev], rec.group
                    ),
                })
            }
            Some(_) => {}
            None => {
                subject_group.insert(&rec.subject, g);
            }
        }
        let c = chars.iter().position(|&x| x == rec.characteristic).unwrap();
        let slot = cells.entry((rec.subject.as_str(), rec.time)).or_insert_with(|| {
            appearances.push((rec.subject.as_str(), rec.time));
            vec![None; k]
        });
        if slot[c].is_some() {
            return Err(Error::Conflict {
                cell: format!("subject `{}` characteristic {c} at t={}", rec.subject, rec.time),
            });
        }
        if !rec.value.is_finite() {
            return Err(Error::Dimension(format!(
                "non-finite value for `{}` at t={}",
                rec.subject, rec.time
            )));
        }
        slot[c] = Some(rec.value);
    }
    for (subject, time) in &appearances {
        if cells[&(*subject, *time)].iter().any(Option::is_none) {
            return Err(Error::Inconsistent {
                subject: subject.to_string(),
                detail: format!("incomplete characteristics at t={time}"),
            });
        }
    }

    let registry = assign_identifiers(
        appearances.iter().map(|(s, t)| Appearance::new(*s, *t, k)),
    )?;

    let mut horizon = opts.horizon.unwrap_or(0).max(registry.horizon());
    for rec in macro_data {
        if rec.time == 0 {
            return Err(Error::Dimension(format!(
                "macro record for `{}` at time 0; times start at 1",
                rec.series
            )));
        }
        horizon = horizon.max(rec.time);
    }

    let mut group_sizes = vec![0usize; layout.groups.len()];
    for s in registry.subjects() {
        group_sizes[subject_group[s.as_str()]] += 1;
    }
    if let Some(expected) = &opts.group_sizes {
        if *expected != group_sizes {
            return Err(Error::Layout(format!(
                "group sizes {group_sizes:?} differ from expected {expected:?}"
            )));
        }
    }

    let mut row_entity: Vec<RowEntity> = (0..m).map(RowEntity::Macro).collect();
    let mut subjects = Vec::with_capacity(registry.n_subjects());
    let mut first_row_of: HashMap<&str, usize> = HashMap::new();
    for (g, _) in layout.groups.iter().enumerate() {
        for s in registry.subjects() {
            if subject_group[s.as_str()] == g {
                let first_row = row_entity.len();
                first_row_of.insert(s.as_str(), first_row);
                subjects.push(PanelSubject {
                    key: s.clone(),
                    group: g,
                    first_row,
                });
                row_entity.extend(std::iter::repeat_n(RowEntity::Group(g), k));
            }
        }
    }

    let mut obs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); horizon];
    let mut macro_seen: HashMap<(usize, usize), f64> = HashMap::new();
    for rec in macro_data {
        let row = layout
            .macro_series
            .iter()
            .position(|s| *s == rec.series)
            .ok_or_else(|| Error::UnknownSeries(rec.series.clone()))?;
        if !rec.value.is_finite() {
            return Err(Error::Dimension(format!(
                "non-finite value for series `{}` at t={}",
                rec.series, rec.time
            )));
        }
        if macro_seen.insert((row, rec.time), rec.value).is_some() {
            return Err(Error::Conflict {
                cell: format!("series `{}` at t={}", rec.series, rec.time),
            });
        }
        obs[rec.time - 1].push((row, rec.value));
    }
    for ((subject, time), values) in &cells {
        let first = first_row_of[subject];
        for (c, v) in values.iter().enumerate() {
            obs[time - 1].push((first + c, v.unwrap()));
        }
    }
    for period in &mut obs {
        period.sort_by_key(|&(row, _)| row);
    }

    Ok(PanelDataset {
        horizon,
        k,
        layout: layout.clone(),
        group_sizes,
        subjects,
        row_entity,
        obs,
        registry,
    })
}

impl PanelDataset {
    /// Builds a panel directly from dense rows (`None` = missing). Rows are
    /// macro series first, then `group_sizes[g]` single-characteristic
    /// subjects per group, keyed `g<g>_<n>`.
    pub fn from_rows(
        layout: &PanelLayout,
        group_sizes: &[usize],
        rows: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let m = layout.macro_series.len();
        if group_sizes.len() != layout.groups.len() {
            return Err(Error::Layout("one size per group required".into()));
        }
        let n_rows = m + group_sizes.iter().sum::<usize>();
        if rows.len() != n_rows {
            return Err(Error::Dimension(format!("expected {n_rows} rows, got {}", rows.len())));
        }
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::Dimension("rows must share one length".into()));
        }
        let mut macro_data = Vec::new();
        for (i, row) in rows.iter().take(m).enumerate() {
            for (t, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    macro_data.push(MacroRecord::new(t + 1, layout.macro_series[i].clone(), *v));
                }
            }
        }
        let mut micro = Vec::new();
        let mut row = m;
        for (g, &size) in group_sizes.iter().enumerate() {
            for n in 0..size {
                let key = format!("g{g}_{n:06}");
                for (t, v) in rows[row].iter().enumerate() {
                    if let Some(v) = v {
                        micro.push(MicroRecord::new(key.clone(), layout.groups[g].clone(), t + 1, *v));
                    }
                }
                row += 1;
            }
        }
        // keep never-observed subjects out of the registry, as ingestion would
        let opts = AssembleOptions {
            horizon: Some(horizon),
            group_sizes: None,
        };
        let mut panel = assemble_panel(layout, &micro, &macro_data, &opts)?;
        // registry order follows first appearance; re-sort rows into the
        // caller's order so row i of the input is row i of the panel
        panel.reorder_subjects_by_key();
        Ok(panel)
    }

    fn reorder_subjects_by_key(&mut self) {
        let mut order: Vec<usize> = (0..self.subjects.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&self.subjects[a], &self.subjects[b]);
            sa.group.cmp(&sb.group).then_with(|| sa.key.cmp(&sb.key))
        });
        let m = self.layout.macro_series.len();
        let mut remap = vec![0usize; self.row_entity.len()];
        for (i, r) in remap.iter_mut().enumerate().take(m) {
            *r = i;
        }
        let mut next = m;
        let mut subjects = Vec::with_capacity(self.subjects.len());
        for &s in &order {
            let old = &self.subjects[s];
            for c in 0..self.k {
                remap[old.first_row + c] = next + c;
            }
            subjects.push(PanelSubject {
                key: old.key.clone(),
                group: old.group,
                first_row: next,
            });
            next += self.k;
        }
        for period in &mut self.obs {
            for (row, _) in period.iter_mut() {
                *row = remap[*row];
            }
            period.sort_by_key(|&(row, _)| row);
        }
        self.subjects = subjects;
    }

    /// `NK + M`: total measurement rows.
    pub fn n_rows(&self) -> usize {
        self.row_entity.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_macro(&self) -> usize {
        self.layout.macro_series.len()
    }

    pub fn n_groups(&self) -> usize {
        self.layout.groups.len()
    }

    pub fn layout(&self) -> &PanelLayout {
        &self.layout
    }

    /// Subjects per group (the group layout `omega`).
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn registry(&self) -> &SubjectRegistry {
        &self.registry
    }

    /// Contiguous measurement rows of group `g`.
    pub fn group_rows(&self, g: usize) -> Range<usize> {
        let start = self.n_macro() + self.k * self.group_sizes[..g].iter().sum::<usize>();
        start..start + self.k * self.group_sizes[g]
    }

    pub fn row_entity(&self, row: usize) -> RowEntity {
        self.row_entity[row]
    }

    pub fn row_entities(&self) -> &[RowEntity] {
        &self.row_entity
    }

    /// Subject key and characteristic index of a micro row.
    pub fn row_subject(&self, row: usize) -> Option<(&str, usize)> {
        let m = self.n_macro();
        if row < m || row >= self.n_rows() {
            return None;
        }
        let s = &self.subjects[(row - m) / self.k];
        Some((s.key.as_str(), row - s.first_row))
    }

    /// Group label and subject key for every micro subject, in row order.
    pub fn subjects(&self) -> impl Iterator<Item = (&str, &str)> {
        self.subjects
            .iter()
            .map(|s| (self.layout.groups[s.group].as_str(), s.key.as_str()))
    }

    /// Observed `(row, value)` pairs at `t` (1-based), sorted by row.
    pub fn observed(&self, t: usize) -> &[(usize, f64)] {
        match t.checked_sub(1).and_then(|i| self.obs.get(i)) {
            Some(v) => v,
            None => &[],
        }
    }

    pub fn value(&self, row: usize, t: usize) -> Option<f64> {
        let period = self.observed(t);
        period
            .binary_search_by_key(&row, |&(r, _)| r)
            .ok()
            .map(|i| period[i].1)
    }

    pub fn is_observed(&self, row: usize, t: usize) -> bool {
        self.value(row, t).is_some()
    }

    /// Times with at least one observation.
    pub fn observed_times(&self) -> Vec<usize> {
        (1..=self.horizon).filter(|&t| !self.observed(t).is_empty()).collect()
    }

    pub fn n_observations(&self) -> usize {
        self.obs.iter().map(Vec::len).sum()
    }

    /// Copy keeping only the cells for which `keep(row, t)` holds. Row
    /// layout and horizon are unchanged.
    pub fn filter_cells(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for (i, period) in out.obs.iter_mut().enumerate() {
            period.retain(|&(row, _)| keep(row, i + 1));
        }
        out
    }

    /// Copy with the horizon extended to at least `horizon` periods.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut out = self.clone();
        if horizon > out.horizon {
            out.obs.resize(horizon, Vec::new());
            out.horizon = horizon;
        }
        out
    }

    /// Dense `rows x T` view with `None` for missing cells.
    pub fn to_dense(&self) -> Vec<Vec<Option<f64>>> {
        let mut out = vec![vec![None; self.horizon]; self.n_rows()];
        for (t, period) in self.obs.iter().enumerate() {
            for &(row, v) in period {
                out[row][t] = Some(v);
            }
        }
        out
    }

    /// Micro and macro records reproducing this panel through
    /// [`assemble_panel`].
    pub fn to_records(&self) -> (Vec<MicroRecord>, Vec<MacroRecord>) {
        let mut micro = Vec::new();
        let mut macro_data = Vec::new();
        for t in 1..=self.horizon {
            for &(row, v) in self.observed(t) {
                match self.row_entity[row] {
                    RowEntity::Macro(i) => {
                        macro_data.push(MacroRecord::new(t, self.layout.macro_series[i].clone(), v))
                    }
                    RowEntity::Group(g) => {
                        let (key, c) = self.row_subject(row).unwrap();
                        let mut rec = MicroRecord::new(key, self.layout.groups[g].clone(), t, v);
                        if self.k > 1 {
                            rec.characteristic = format!("c{c}");
                        }
                        micro.push(rec);
                    }
                }
            }
        }
        (micro, macro_data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(m: usize, groups: &[&str]) -> PanelLayout {
        PanelLayout {
            macro_series: (0..m).map(|i| format!("x{i}")).collect(),
            groups: groups.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn vectorise_is_subject_major() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vectorise_cross_section(&h).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let col = DMatrix::from_row_slice(2, 1, &[5.0, 6.0]);
        assert_eq!(vectorise_cross_section(&col).unwrap(), vec![5.0, 6.0]);
        let row = DMatrix::from_row_slice(1, 3, &[7.0, 8.0, 9.0]);
        assert_eq!(vectorise_cross_section(&row).unwrap(), vec![7.0, 8.0, 9.0]);
        assert!(vectorise_cross_section(&DMatrix::<f64>::zeros(0, 3)).is_err());
    }

    #[test]
    fn identifiers_by_first_appearance() {
        let reg = assign_identifiers(vec![
            Appearance::new("A", 1, 2),
            Appearance::new("B", 2, 2),
            Appearance::new("A", 3, 2),
        ])
        .unwrap();
        assert_eq!(reg.identifier("A", 0), Some(1));
        assert_eq!(reg.identifier("A", 1), Some(2));
        assert_eq!(reg.identifier("B", 0), Some(3));
        assert_eq!(reg.identifier("B", 1), Some(4));
        let t13: BTreeSet<usize> = [1, 3].into_iter().collect();
        let t2: BTreeSet<usize> = [2].into_iter().collect();
        assert_eq!(reg.observed_times(1), Some(&t13));
        assert_eq!(reg.observed_times(2), Some(&t13));
        assert_eq!(reg.observed_times(3), Some(&t2));
        assert_eq!(reg.observed_times(4), Some(&t2));
        assert_eq!(reg.all_times(), [1, 2, 3].into_iter().collect());
        assert_eq!(reg.identifiers_at(2), [3, 4].into_iter().collect());
    }

    #[test]
    fn single_subject_every_period() {
        let reg = assign_identifiers((1..=5).map(|t| Appearance::new("s", t, 1))).unwrap();
        assert_eq!(reg.n_subjects(), 1);
        assert_eq!(reg.observed_times(1).unwrap().len(), 5);
    }

    #[test]
    fn empty_stream_gives_empty_registry() {
        let reg = assign_identifiers(Vec::new()).unwrap();
        assert_eq!(reg.n_subjects(), 0);
        assert_eq!(reg.horizon(), 0);
    }

    #[test]
    fn changed_k_is_rejected() {
        let err = assign_identifiers(vec![Appearance::new("A", 1, 2), Appearance::new("A", 2, 3)]);
        assert!(matches!(err, Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn mask_follows_observation_times() {
        let lay = layout(1, &["g"]);
        let micro = vec![MicroRecord::new("h", "g", 3, 2.0), MicroRecord::new("h", "g", 1, 0.0)];
        let macro_data: Vec<_> = (1..=3).map(|t| MacroRecord::new(t, "x0", t as f64)).collect();
        let p = assemble_panel(&lay, &micro, &macro_data, &AssembleOptions::default()).unwrap();
        assert_eq!(p.horizon(), 3);
        assert_eq!(p.value(1, 1), Some(0.0));
        assert!(!p.is_observed(1, 2));
        assert_eq!(p.value(1, 3), Some(2.0));
    }

    #[test]
    fn full_observation_places_every_cell() {
        let lay = layout(0, &["g"]);
        let mut micro = Vec::new();
        for t in 1..=3 {
            for s in ["a", "b"] {
                micro.push(MicroRecord::new(s, "g", t, t as f64));
            }
        }
        let p = assemble_panel(&lay, &micro, &[], &AssembleOptions::default()).unwrap();
        for t in 1..=3 {
            assert_eq!(p.observed(t).len(), 2);
        }
    }

    #[test]
    fn groups_follow_macro_rows() {
        let lay = layout(1, &["g1", "g2"]);
        let micro = vec![
            MicroRecord::new("c", "g2", 1, 1.0),
            MicroRecord::new("a", "g1", 1, 2.0),
            MicroRecord::new("b", "g1", 2, 3.0),
        ];
        let macro_data = vec![MacroRecord::new(1, "x0", 0.5)];
        let opts = AssembleOptions {
            horizon: None,
            group_sizes: Some(vec![2, 1]),
        };
        let p = assemble_panel(&lay, &micro, &macro_data, &opts).unwrap();
        assert_eq!(p.row_entity(0), RowEntity::Macro(0));
        assert_eq!(p.row_entity(1), RowEntity::Group(0));
        assert_eq!(p.row_entity(2), RowEntity::Group(0));
        assert_eq!(p.row_entity(3), RowEntity::Group(1));
        assert_eq!(p.row_subject(1), Some(("a", 0)));
        assert_eq!(p.row_subject(2), Some(("b", 0)));
        assert_eq!(p.row_subject(3), Some(("c", 0)));
        assert_eq!(p.group_rows(0), 1..3);
        assert_eq!(p.group_rows(1), 3..4);

        let bad = AssembleOptions {
            horizon: None,
            group_sizes: Some(vec![1, 2]),
        };
        assert!(matches!(
            assemble_panel(&lay, &micro, &macro_data, &bad),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn duplicate_cells_conflict() {
        let lay = layout(1, &["g"]);
        let micro = vec![MicroRecord::new("a", "g", 1, 1.0), MicroRecord::new("a", "g", 1, 1.0)];
        assert!(matches!(
            assemble_panel(&lay, &micro, &[], &AssembleOptions::default()),
            Err(Error::Conflict { .. })
        ));
        let macro_data = vec![MacroRecord::new(1, "x0", 1.0), MacroRecord::new(1, "x0", 2.0)];
        assert!(matches!(
            assemble_panel(&lay, &[], &macro_data, &AssembleOptions::default()),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn changed_group_rejected() {
        let lay = layout(0, &["g1", "g2"]);
        let micro = vec![MicroRecord::new("a", "g1", 1, 1.0), MicroRecord::new("a", "g2", 2, 1.0)];
        assert!(matches!(
            assemble_panel(&lay, &micro, &[], &AssembleOptions::default()),
            Err(Error::Inconsistent { .. })
        ));
    }

    #[test]
    fn unknown_group_and_series() {
        let lay = layout(1, &["g"]);
        let micro = vec![MicroRecord::new("a", "zz", 1, 1.0)];
        assert!(matches!(
            assemble_panel(&lay, &micro, &[], &AssembleOptions::default()),
            Err(Error::Layout(_))
        ));
        let macro_data = vec![MacroRecord::new(1, "nope", 1.0)];
        assert!(matches!(
            assemble_panel(&lay, &[], &macro_data, &AssembleOptions::default()),
            Err(Error::UnknownSeries(_))
        ));
    }

    #[test]
    fn multiple_characteristics_share_masks() {
        let lay = layout(0, &["g"]);
        let mut micro = Vec::new();
        for (s, t) in [("a", 1), ("b", 2), ("a", 3)] {
            for c in ["inc", "hrs"] {
                let mut r = MicroRecord::new(s, "g", t, t as f64);
                r.characteristic = c.into();
                micro.push(r);
            }
        }
        let p = assemble_panel(&lay, &micro, &[], &AssembleOptions::default()).unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.n_rows(), 4);
        for t in 1..=3 {
            assert_eq!(p.is_observed(0, t), p.is_observed(1, t));
            assert_eq!(p.is_observed(2, t), p.is_observed(3, t));
        }
        // a missing characteristic is an incomplete appearance
        micro.pop();
        assert!(matches!(
            assemble_panel(&lay, &micro, &[], &AssembleOptions::default()),
            Err(Error::Inconsistent { .. })
        ));
    }

    #[test]
    fn from_rows_preserves_order() {
        let lay = layout(1, &["g"]);
        let rows = vec![
            vec![Some(1.0), Some(2.0)],
            vec![None, Some(3.0)],
            vec![Some(4.0), None],
        ];
        let p = PanelDataset::from_rows(&lay, &[2], &rows).unwrap();
        assert_eq!(p.to_dense(), rows);
    }

    fn arb_records() -> impl Strategy<Value = Vec<(usize, usize, usize, i32)>> {
        // (subject, group, time, value)
        prop::collection::vec((0usize..6, 0usize..2, 1usize..7, -5i32..5), 0..30)
    }

    proptest! {
        #[test]
        fn roundtrip_and_mask_coherence(recs in arb_records(), shuffle in any::<u64>()) {
            let lay = layout(1, &["g0", "g1"]);
            let mut seen = std::collections::HashSet::new();
            let mut micro = Vec::new();
            for (s, _g, t, v) in recs {
                if seen.insert((s, t)) {
                    // group is a function of the subject
                    let g = s % 2;
                    micro.push(MicroRecord::new(format!("s{s}"), format!("g{g}"), t, v as f64 * 0.25));
                }
            }
            let macro_data = vec![MacroRecord::new(1, "x0", 1.0)];
            let p = assemble_panel(&lay, &micro, &macro_data, &AssembleOptions::default()).unwrap();
            for rec in &micro {
                let id = p.registry().identifier(&rec.subject, 0).unwrap();
                prop_assert!(p.registry().observed_times(id).unwrap().contains(&rec.time));
                let row = (0..p.n_rows()).find(|&r| p.row_subject(r).map(|x| x.0) == Some(rec.subject.as_str())).unwrap();
                prop_assert_eq!(p.value(row, rec.time).map(f64::to_bits), Some(rec.value.to_bits()));
            }
            for row in p.n_macro()..p.n_rows() {
                let (key, _) = p.row_subject(row).unwrap();
                let ts = p.registry().subject_times(key).unwrap();
                for t in 1..=p.horizon() {
                    prop_assert_eq!(p.is_observed(row, t), ts.contains(&t));
                }
            }
            // reordering within a group changes rows, never per-period counts
            let mut rotated = micro.clone();
            let len = rotated.len();
            if len > 0 {
                rotated.rotate_left((shuffle as usize) % len);
            }
            let q = assemble_panel(&lay, &rotated, &macro_data, &AssembleOptions::default()).unwrap();
            prop_assert_eq!(q.group_sizes(), p.group_sizes());
            for t in 1..=p.horizon() {
                for g in 0..2 {
                    let count = |panel: &PanelDataset| panel.observed(t).iter().filter(|(r, _)| panel.group_rows(g).contains(r)).count();
                    prop_assert_eq!(count(&p), count(&q));
                }
            }
        }
    }
}
