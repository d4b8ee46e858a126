//! Command-line entry point: `simulate`, `estimate`, `decompose`, `nowcast`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::decompose;
use crate::config::ModelConfig;
use crate::ecm::estimate;
use crate::error::Result;
use crate::io;
use crate::nowcast::{micro_series_id, replay, InformationSet, Release};
use crate::panel::{assemble_panel, AssembleOptions, PanelDataset, PanelLayout};
use crate::simulate::{default_truth, simulate, SimulationDesign};

#[derive(Debug, Parser)]
#[command(name = "mdfm", version, about = "Multidimensional dynamic factor models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel from the configuration's default truth.
    Simulate(SimulateArgs),
    /// Estimate the model on macro and micro CSV files.
    Estimate(EstimateArgs),
    /// Decompose a panel into trends, common and idiosyncratic cycles.
    Decompose(DecomposeArgs),
    /// Replay a release calendar against a fitted model.
    Nowcast(NowcastArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of periods.
    #[arg(long, default_value_t = 120)]
    pub periods: usize,
    /// Households per group over the sample.
    #[arg(long, default_value_t = 60)]
    pub households: usize,
    #[arg(long, default_value_t = 4)]
    pub rotation: usize,
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long = "macro")]
    pub macro_path: PathBuf,
    #[arg(long)]
    pub micro: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calendar: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Data known before the first release date.
    #[arg(long = "base-macro")]
    pub base_macro: Option<PathBuf>,
    #[arg(long = "base-micro")]
    pub base_micro: Option<PathBuf>,
    /// Reference periods to report; defaults to those in the calendar.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<usize>,
    /// State horizon; defaults to the last period seen.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Report trend plus common cycle only.
    #[arg(long)]
    pub core_only: bool,
}

fn load_panel(layout: &PanelLayout, data: &DataArgs, horizon: Option<usize>) -> Result<PanelDataset> {
    let macro_data = io::read_macro_csv(&data.macro_path)?;
    let micro = match &data.micro {
        Some(p) => io::read_micro_csv(p)?,
        None => Vec::new(),
    };
    let opts = AssembleOptions {
        horizon,
        group_sizes: None,
    };
    assemble_panel(layout, &micro, &macro_data, &opts)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = ModelConfig::from_json_file(&a.config)?;
    let design = SimulationDesign {
        horizon: a.periods,
        group_sizes: vec![a.households; cfg.n_groups()],
        rotation: a.rotation,
        missing_rate: a.missing_rate,
        seed: a.seed,
    };
    let truth = default_truth(&cfg);
    let sim = simulate(&cfg, &truth, &design)?;
    ensure_dir(&a.out)?;
    io::write_macro_csv(a.out.join("macro.csv"), &sim.macro_data)?;
    io::write_micro_csv(a.out.join("micro.csv"), &sim.micro)?;
    // macro data released one period after reference, micro data after
    // the rotation completes
    let mut calendar: Vec<Release> = sim
        .macro_data
        .iter()
        .map(|r| Release::new(r.time as i64 + 1, r.series.clone(), r.time, r.value))
        .collect();
    calendar.extend(sim.micro.iter().map(|r| {
        Release::new(
            (r.time + a.rotation) as i64,
            micro_series_id(&r.group, &r.subject),
            r.time,
            r.value,
        )
    }));
    calendar.sort_by(|x, y| x.release_date.cmp(&y.release_date).then(x.ref_period.cmp(&y.ref_period)));
    io::write_calendar_csv(a.out.join("calendar.csv"), &calendar)?;
    let truth_file = serde_json::json!({
        "design": design,
        "params": io::ParameterFile::from(&truth),
        "states": sim.states.iter().map(|s| s.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
    });
    io::write_json(a.out.join("truth.json"), &truth_file)
}

fn run_estimate(a: &EstimateArgs) -> Result<()> {
    let mut cfg = ModelConfig::from_json_file(&a.config)?;
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    let panel = load_panel(&PanelLayout::from(&cfg), &a.data, None)?;
    let fitted = estimate(&panel, &cfg)?;
    ensure_dir(&a.out)?;
    io::save_fit(a.out.join("fit.json"), &fitted)?;
    io::write_trace_csv(a.out.join("trace.csv"), &fitted.trace)
}

fn run_decompose(a: &DecomposeArgs) -> Result<()> {
    let fitted = io::load_fit(&a.model)?;
    let panel = load_panel(&PanelLayout::from(&fitted.config), &a.data, None)?;
    let dec = decompose(&fitted, &panel)?;
    ensure_dir(&a.out)?;
    io::write_decomposition_csv(a.out.join("decomposition.csv"), &dec)?;
    io::write_group_summary_csv(a.out.join("group_summary.csv"), &dec)
}

fn run_nowcast(a: &NowcastArgs) -> Result<()> {
    let fitted = io::load_fit(&a.model)?;
    let layout = PanelLayout::from(&fitted.config);
    let calendar = io::read_calendar_csv(&a.calendar)?;
    let base = match &a.base_macro {
        Some(m) => Some(load_panel(
            &layout,
            &DataArgs {
                macro_path: m.clone(),
                micro: a.base_micro.clone(),
            },
            None,
        )?),
        None => None,
    };
    let last = calendar
        .iter()
        .map(|r| r.ref_period)
        .chain(base.iter().map(PanelDataset::horizon))
        .max()
        .unwrap_or(0);
    let horizon = a.horizon.unwrap_or(last);
    let start = match &base {
        Some(p) => InformationSet::from_panel(&p.with_horizon(horizon))?,
        None => InformationSet::new(layout, horizon),
    };
    let targets = if a.targets.is_empty() {
        let mut t: Vec<usize> = calendar.iter().map(|r| r.ref_period).collect();
        t.sort_unstable();
        t.dedup();
        t
    } else {
        a.targets.clone()
    };
    let estimates = replay(&fitted, &start, &calendar, &targets, a.core_only)?;
    ensure_dir(&a.out)?;
    io::write_estimates_csv(a.out.join("early_estimates.csv"), &estimates)
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (module, result) = match &cli.command {
        Command::Simulate(a) => ("simulate", run_simulate(a)),
        Command::Estimate(a) => ("ecm::estimate", run_estimate(a)),
        Command::Decompose(a) => ("analysis::decompose", run_decompose(a)),
        Command::Nowcast(a) => ("nowcast::replay", run_nowcast(a)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error in {module}: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            1
        }
    }
}
