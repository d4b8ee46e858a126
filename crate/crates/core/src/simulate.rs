//! Synthetic panels from a known state space.
//!
//! Micro subjects follow a rotating design: each household is surveyed in
//! a window of at most `rotation` consecutive periods, with entry dates
//! staggered so the number of respondents per period is nearly constant.
//! Every random draw is keyed by `(seed, stream, t, coordinate)`, so the
//! output does not depend on the order in which draws are made.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{build_state_space, ParameterVector, StateLayout};
use crate::panel::{assemble_panel, AssembleOptions, MacroRecord, MicroRecord, PanelDataset, PanelLayout};

fn default_rotation() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub horizon: usize,
    /// Households per group over the whole sample.
    pub group_sizes: Vec<usize>,
    #[serde(default = "default_rotation")]
    pub rotation: usize,
    /// Probability of dropping a household-period cell inside its window.
    #[serde(default)]
    pub missing_rate: f64,
    pub seed: u64,
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.rotation == 0 {
            return Err(Error::Config("rotation length must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            )));
        }
        Ok(())
    }

    /// Average respondents per period in group `g`.
    pub fn households_per_period(&self, g: usize) -> f64 {
        self.group_sizes[g] as f64 * self.rotation as f64 / (self.horizon + self.rotation - 1) as f64
    }
}

/// Observation window `first..=last` of one household.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub first: usize,
    pub last: usize,
}

impl Window {
    pub fn contains(&self, t: usize) -> bool {
        (self.first..=self.last).contains(&t)
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Survey windows per group. Household `k` of a group of size `n` enters
/// at offset `floor(k * S / n)` among the `S = T + rotation - 1` possible
/// entry dates (the earliest ones are left-censored at period 1).
pub fn rotation_mask(design: &SimulationDesign) -> Vec<Vec<Window>> {
    let t = design.horizon as i64;
    let l = design.rotation as i64;
    let starts = t + l - 1;
    design
        .group_sizes
        .iter()
        .map(|&n| {
            (0..n as i64)
                .map(|k| {
                    let start = 1 - (l - 1) + k * starts / n as i64;
                    Window {
                        first: start.max(1) as usize,
                        last: (start + l - 1).min(t) as usize,
                    }
                })
                .collect()
        })
        .collect()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn keyed_rng(seed: u64, stream: u64, t: u64, coord: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ t) ^ coord);
    ChaCha8Rng::seed_from_u64(key)
}

fn normal(seed: u64, stream: u64, t: u64, coord: u64) -> f64 {
    keyed_rng(seed, stream, t, coord).sample(StandardNormal)
}

fn uniform(seed: u64, stream: u64, t: u64, coord: u64) -> f64 {
    keyed_rng(seed, stream, t, coord).random::<f64>()
}

const STREAM_INIT: u64 = 1;
const STREAM_STATE: u64 = 2;
const STREAM_MACRO: u64 = 3;
const STREAM_MICRO: u64 = 4;
const STREAM_DROP: u64 = 5;

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: PanelDataset,
    /// True states `Phi_0..Phi_T`.
    pub states: Vec<DVector<f64>>,
    pub micro: Vec<MicroRecord>,
    pub macro_data: Vec<MacroRecord>,
}

/// Household key used in simulated micro files.
pub fn household_key(group: &str, k: usize) -> String {
    format!("{group}-{k:06}")
}

/// Draws states and observations from the model implied by `params`.
pub fn simulate(cfg: &ModelConfig, params: &ParameterVector, design: &SimulationDesign) -> Result<Simulation> {
    design.validate()?;
    if design.group_sizes.len() != cfg.n_groups() {
        return Err(Error::Config(format!(
            "design has {} group sizes, config has {} groups",
            design.group_sizes.len(),
            cfg.n_groups()
        )));
    }
    let ss = build_state_space(cfg, params, None)?;
    let layout = StateLayout::from_config(cfg);
    let q = layout.q();
    let seed = design.seed;

    // Phi_0 through a symmetric square root of Omega_0
    let eig = SymmetricEigen::new(ss.omega0().clone());
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let z0 = DVector::from_fn(q, |i, _| normal(seed, STREAM_INIT, 0, i as u64));
    let mut states = vec![ss.mu0() + root * z0];
    let sd: Vec<f64> = ss.sigma().iter().map(|v| v.sqrt()).collect();
    for t in 1..=design.horizon {
        let mut x = ss.c() * &states[t - 1];
        for (i, s) in sd.iter().enumerate() {
            x[i] += s * normal(seed, STREAM_STATE, t as u64, i as u64);
        }
        states.push(x);
    }

    let noise = ss.epsilon().sqrt();
    let b = ss.b_compact();
    let m = layout.n_macro;
    let mut macro_data = Vec::new();
    for t in 1..=design.horizon {
        for (i, name) in cfg.macro_series.iter().enumerate() {
            let y = b.row(i).dot(&states[t].transpose()) + noise * normal(seed, STREAM_MACRO, t as u64, i as u64);
            macro_data.push(MacroRecord::new(t, name.clone(), y));
        }
    }

    let windows = rotation_mask(design);
    let mut micro = Vec::new();
    let mut household = 0u64;
    for (g, label) in cfg.groups.iter().enumerate() {
        let row = b.row(m + g);
        for (k, w) in windows[g].iter().enumerate() {
            for t in w.first..=w.last {
                if design.missing_rate > 0.0 && uniform(seed, STREAM_DROP, t as u64, household) < design.missing_rate {
                    continue;
                }
                let y = row.dot(&states[t].transpose()) + noise * normal(seed, STREAM_MICRO, t as u64, household);
                micro.push(MicroRecord::new(household_key(label, k), label.clone(), t, y));
            }
            household += 1;
        }
    }
    micro.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.subject.cmp(&b.subject)));

    let opts = AssembleOptions {
        horizon: Some(design.horizon),
        group_sizes: None,
    };
    let panel = assemble_panel(&PanelLayout::from(cfg), &micro, &macro_data, &opts)?;
    Ok(Simulation {
        panel,
        states,
        micro,
        macro_data,
    })
}

/// A fixed, causal parameter set for a configuration, used as simulation
/// truth by the CLI and the tests.
pub fn default_truth(cfg: &ModelConfig) -> ParameterVector {
    let layout = StateLayout::from_config(cfg);
    let mut p = ParameterVector::zeros(&layout);
    for k in 0..layout.n_idio() {
        p.pi[k] = 0.3 + 0.2 * ((k % 3) as f64) / 2.0;
    }
    let cycle = [1.2, -0.4];
    for j in 0..layout.lags.min(2) {
        p.pi[layout.n_idio() + j] = if layout.lags == 1 { 0.7 } else { cycle[j] };
    }
    for l in 0..layout.n_loading_rows() {
        let sign = if l % 3 == 2 { -1.0 } else { 1.0 };
        p.lambda[(l, 0)] = sign * (0.8 - 0.1 * (l % 4) as f64);
        if layout.lags > 1 {
            p.lambda[(l, 1)] = sign * (0.3 + 0.05 * (l % 3) as f64);
        }
    }
    for i in 0..layout.n_trend() {
        p.sigma[layout.trend(i)] = 1e-3;
    }
    for k in 0..layout.n_idio() {
        p.sigma[layout.idio(k)] = 0.25;
    }
    p.sigma[layout.psi(0)] = 1.0;
    for i in 0..layout.r() - 1 {
        p.omega0[(i, i)] = 1.0;
    }
    for j in 0..layout.lags {
        p.omega0[(layout.psi(j), layout.psi(j))] = 1.0;
    }
    p
}
