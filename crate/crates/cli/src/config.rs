//! Run configuration: a TOML file of knobs, overridden by command-line
//! flags, falling back to dataset metadata and built-in defaults.

use std::path::Path;

use serde::Deserialize;

use transim_core::datagen::DatasetMetadata;
use transim_core::io::parse_hms;
use transim_core::network::{ChoiceSetConfig, WalkParams};
use transim_core::sim::{SimConfig, UnreachablePolicy, WalkNoise, Window};
use transim_core::{Error, Real, Result};

/// Raw config file contents; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub tau_s: Option<Real>,
    pub default_capacity: Option<u32>,
    pub capacity_override: Option<u32>,
    pub walk_speed_mps: Option<Real>,
    pub gamma: Option<Real>,
    pub eta: Option<Real>,
    pub q_kl: Option<u32>,
    pub budget: Option<usize>,
    pub k_paths: Option<usize>,
    pub detour_cap: Option<Real>,
    pub transfer_penalty_min: Option<Real>,
    pub max_legs: Option<usize>,
    pub horizon_start: Option<String>,
    pub horizon_end: Option<String>,
    pub estimation_start: Option<String>,
    pub estimation_end: Option<String>,
    pub beta_lower: Option<Vec<Real>>,
    pub beta_upper: Option<Vec<Real>>,
    pub walk_noise_cv: Option<Real>,
    pub abort_on_unreachable: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

fn parse_time(label: &str, text: &str) -> Result<Real> {
    parse_hms(text).ok_or_else(|| Error::Config(format!("{label}: bad time {text:?} (HH:MM:SS)")))
}

/// Fully resolved knobs for one command invocation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub tau_s: Real,
    pub eta: Real,
    pub q_kl: u32,
    pub budget: usize,
    pub estimation: Window,
    pub bounds: Vec<(Real, Real)>,
    pub sim: SimConfig,
    pub choice_sets: ChoiceSetConfig,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau_s: Option<Real>,
    pub eta: Option<Real>,
    pub q_kl: Option<u32>,
    pub budget: Option<usize>,
    pub capacity: Option<u32>,
}

pub fn resolve(
    file: &ConfigFile,
    overrides: &Overrides,
    metadata: Option<&DatasetMetadata>,
) -> Result<Resolved> {
    let seed = overrides
        .seed
        .or(file.seed)
        .or(metadata.map(|m| m.sim_seed))
        .unwrap_or(42);
    let tau_s = overrides
        .tau_s
        .or(file.tau_s)
        .or(metadata.map(|m| m.tau_s))
        .unwrap_or(900.0);
    let eta = overrides.eta.or(file.eta).unwrap_or(600.0);
    let q_kl = overrides.q_kl.or(file.q_kl).unwrap_or(50);
    let budget = overrides.budget.or(file.budget).unwrap_or(100);

    let horizon = {
        let default = metadata
            .map(|m| m.horizon)
            .unwrap_or(Window::new(17.0 * 3600.0, 20.0 * 3600.0));
        let start = match &file.horizon_start {
            Some(t) => parse_time("horizon_start", t)?,
            None => default.start_s,
        };
        let end = match &file.horizon_end {
            Some(t) => parse_time("horizon_end", t)?,
            None => default.end_s,
        };
        Window::new(start, end)
    };
    let estimation = {
        let default = metadata
            .map(|m| m.estimation)
            .unwrap_or(Window::new(18.0 * 3600.0, 19.0 * 3600.0));
        let start = match &file.estimation_start {
            Some(t) => parse_time("estimation_start", t)?,
            None => default.start_s,
        };
        let end = match &file.estimation_end {
            Some(t) => parse_time("estimation_end", t)?,
            None => default.end_s,
        };
        Window::new(start, end)
    };
    if horizon.len_s() <= 0.0 {
        return Err(Error::Config("horizon must be a nonempty window".to_string()));
    }
    if estimation.start_s < horizon.start_s || estimation.end_s > horizon.end_s {
        return Err(Error::Config(
            "estimation window must lie within the horizon".to_string(),
        ));
    }
    if !(tau_s > 0.0) {
        return Err(Error::Config("tau must be positive".to_string()));
    }

    let lower = file.beta_lower.clone().unwrap_or_else(|| vec![-10.0; 4]);
    let upper = file.beta_upper.clone().unwrap_or_else(|| vec![0.0; 4]);
    if lower.len() != 4 || upper.len() != 4 {
        return Err(Error::Config("beta bounds need 4 entries".to_string()));
    }
    let bounds: Vec<(Real, Real)> = lower.into_iter().zip(upper).collect();
    for (lo, hi) in &bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(
                "beta bounds must be finite with lower < upper".to_string(),
            ));
        }
    }

    let walk = WalkParams {
        speed_mps: file
            .walk_speed_mps
            .or(metadata.map(|m| m.walk_speed_mps))
            .unwrap_or(1.5),
    };
    if !(walk.speed_mps > 0.0) {
        return Err(Error::Config("walk speed must be positive".to_string()));
    }

    let mut sim = SimConfig::new(seed, horizon);
    sim.tau_s = tau_s;
    sim.walk = walk;
    sim.default_capacity = file
        .default_capacity
        .or(metadata.map(|m| m.default_capacity))
        .unwrap_or(200);
    sim.capacity_override = overrides.capacity.or(file.capacity_override);
    sim.walk_noise = file.walk_noise_cv.map(WalkNoise::with_cv);
    if file.abort_on_unreachable.unwrap_or(false) {
        sim.unreachable = UnreachablePolicy::Abort;
    }

    let choice_sets = ChoiceSetConfig {
        k: file.k_paths.or(metadata.map(|m| m.k_paths)).unwrap_or(5),
        detour_cap: file
            .detour_cap
            .or(metadata.map(|m| m.detour_cap))
            .unwrap_or(2.0),
        max_legs: file.max_legs.unwrap_or(4),
        transfer_penalty_min: file.transfer_penalty_min.unwrap_or(5.0),
        gamma: file.gamma.or(metadata.map(|m| m.gamma)).unwrap_or(5.0),
        walk,
    };
    if choice_sets.k < 1 || !(choice_sets.detour_cap >= 1.0) || !(choice_sets.gamma > 0.0) {
        return Err(Error::Config(
            "k_paths must be >= 1, detour_cap >= 1, gamma > 0".to_string(),
        ));
    }

    Ok(Resolved {
        seed,
        tau_s,
        eta,
        q_kl,
        budget,
        estimation,
        bounds,
        sim,
        choice_sets,
    })
}
