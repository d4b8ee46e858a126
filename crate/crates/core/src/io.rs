//! CSV and JSON file formats.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::Decomposition;
use crate::config::ModelConfig;
use crate::ecm::{FittedModel, TraceRow};
use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::nowcast::{EarlyEstimate, Release};
use crate::panel::{MacroRecord, MicroRecord};

pub const FIT_FORMAT_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Deserialize)]
struct MicroRow {
    subject_id: String,
    group_id: String,
    time: usize,
    value: f64,
    #[serde(default)]
    characteristic: Option<String>,
}

#[derive(Debug, Deserialize)]
struct MacroRow {
    time: usize,
    series: String,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct CalendarRow {
    release_date: i64,
    series: String,
    ref_period: usize,
    value: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Micro file: `subject_id,group_id,time,value[,characteristic]`.
pub fn read_micro_csv(path: impl AsRef<Path>) -> Result<Vec<MicroRecord>> {
    Ok(read_rows::<MicroRow>(path.as_ref())?
        .into_iter()
        .map(|r| MicroRecord {
            subject: r.subject_id,
            group: r.group_id,
            time: r.time,
            characteristic: r.characteristic.unwrap_or_default(),
            value: r.value,
        })
        .collect())
}

/// Macro file: `time,series,value`.
pub fn read_macro_csv(path: impl AsRef<Path>) -> Result<Vec<MacroRecord>> {
    Ok(read_rows::<MacroRow>(path.as_ref())?
        .into_iter()
        .map(|r| MacroRecord::new(r.time, r.series, r.value))
        .collect())
}

/// Calendar file: `release_date,series,ref_period,value`.
pub fn read_calendar_csv(path: impl AsRef<Path>) -> Result<Vec<Release>> {
    Ok(read_rows::<CalendarRow>(path.as_ref())?
        .into_iter()
        .map(|r| Release::new(r.release_date, r.series, r.ref_period, r.value))
        .collect())
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(File::create(path)?)))
}

pub fn write_micro_csv(path: impl AsRef<Path>, records: &[MicroRecord]) -> Result<()> {
    let with_char = records.iter().any(|r| !r.characteristic.is_empty());
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["subject_id", "group_id", "time", "value"];
    if with_char {
        header.push("characteristic");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.subject.clone(), r.group.clone(), r.time.to_string(), fmt_f64(r.value)];
        if with_char {
            row.push(r.characteristic.clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_macro_csv(path: impl AsRef<Path>, records: &[MacroRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["time", "series", "value"])?;
    for r in records {
        w.write_record([r.time.to_string(), r.series.clone(), fmt_f64(r.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_calendar_csv(path: impl AsRef<Path>, releases: &[Release]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["release_date", "series", "ref_period", "value"])?;
    for r in releases {
        w.write_record([
            r.release_date.to_string(),
            r.series.clone(),
            r.ref_period.to_string(),
            fmt_f64(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["iteration", "objective", "median_delta", "q95_delta"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.objective),
            fmt_opt(r.median_delta),
            fmt_opt(r.q95_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decomposition_csv(path: impl AsRef<Path>, dec: &Decomposition) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["entity", "time", "observed", "trend", "common", "idio", "residual"])?;
    for r in dec.rows() {
        w.write_record([
            r.entity.clone(),
            r.time.to_string(),
            fmt_opt(r.observed),
            fmt_f64(r.components.trend),
            fmt_f64(r.components.common),
            fmt_f64(r.components.idio),
            fmt_opt(r.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_group_summary_csv(path: impl AsRef<Path>, dec: &Decomposition) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["group", "time", "observed", "mean", "q25", "q75", "trend", "core_driver"])?;
    for r in dec.group_summary() {
        w.write_record([
            r.group.clone(),
            r.time.to_string(),
            r.observed.to_string(),
            fmt_opt(r.mean),
            fmt_opt(r.q25),
            fmt_opt(r.q75),
            fmt_f64(r.trend),
            fmt_f64(r.core),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates_csv(path: impl AsRef<Path>, estimates: &[EarlyEstimate]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["release_date", "group", "ref_period", "estimate"])?;
    for e in estimates {
        w.write_record([
            e.release_date.to_string(),
            e.group.clone(),
            e.ref_period.to_string(),
            fmt_f64(e.estimate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major mirror of [`ParameterVector`] for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterFile {
    pub mu0: Vec<f64>,
    pub omega0: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix in parameter file".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&ParameterVector> for ParameterFile {
    fn from(p: &ParameterVector) -> Self {
        Self {
            mu0: p.mu0.iter().copied().collect(),
            omega0: rows_of(&p.omega0),
            lambda: rows_of(&p.lambda),
            pi: p.pi.iter().copied().collect(),
            sigma: p.sigma.iter().copied().collect(),
        }
    }
}

impl ParameterFile {
    pub fn to_params(&self) -> Result<ParameterVector> {
        let q = self.mu0.len();
        let p = self.lambda.first().map_or(0, Vec::len);
        Ok(ParameterVector {
            mu0: DVector::from_vec(self.mu0.clone()),
            omega0: matrix_of(&self.omega0, q)?,
            lambda: matrix_of(&self.lambda, p)?,
            pi: DVector::from_vec(self.pi.clone()),
            sigma: DVector::from_vec(self.sigma.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub median_delta: Option<f64>,
    pub q95_delta: Option<f64>,
}

/// Versioned fitted-model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: ParameterFile,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

impl From<&FittedModel> for FitFile {
    fn from(f: &FittedModel) -> Self {
        Self {
            format_version: FIT_FORMAT_VERSION,
            config: f.config.clone(),
            params: ParameterFile::from(&f.params),
            converged: f.converged,
            iterations: f.iterations,
            trace: f
                .trace
                .iter()
                .map(|r| TraceEntry {
                    iteration: r.iteration,
                    objective: r.objective,
                    median_delta: r.median_delta,
                    q95_delta: r.q95_delta,
                })
                .collect(),
        }
    }
}

impl FitFile {
    pub fn to_fitted(&self) -> Result<FittedModel> {
        if self.format_version != FIT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported fit file version {} (expected {FIT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.config.validate()?;
        let params = self.params.to_params()?;
        params.check_shape(&crate::model::StateLayout::from_config(&self.config))?;
        Ok(FittedModel {
            config: self.config.clone(),
            params,
            trace: self
                .trace
                .iter()
                .map(|r| TraceRow {
                    iteration: r.iteration,
                    objective: r.objective,
                    median_delta: r.median_delta,
                    q95_delta: r.q95_delta,
                })
                .collect(),
            converged: self.converged,
            iterations: self.iterations,
        })
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_fit(path: impl AsRef<Path>, fitted: &FittedModel) -> Result<()> {
    write_json(path, &FitFile::from(fitted))
}

pub fn load_fit(path: impl AsRef<Path>) -> Result<FittedModel> {
    read_json::<FitFile>(path)?.to_fitted()
}
