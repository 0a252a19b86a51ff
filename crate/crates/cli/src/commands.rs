//! The four pipeline subcommands: generate, simulate, calibrate, compare.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use transim_core::calib::{
    calibrate, exit_flows, CalibConfig, ExitFlowTensor, JourneyRecord, SimBundle,
};
use transim_core::choice::{benchmark_params, Benchmark, PathChoice};
use transim_core::datagen::{
    bundled_small_network, generate_demand, generate_ground_truth, DatasetMetadata,
    SYNTHETIC_TRUE_PARAMS,
};
use transim_core::io::{self, format_hms};
use transim_core::network::StationId;
use transim_core::sim::{extract_indicators, run_simulation, ChoiceSets, SimOutput};
use transim_core::{Error, Real, Result};

use crate::config::Resolved;

/// Standard file names inside a dataset directory.
pub mod names {
    pub const NETWORK: &str = "network.json";
    pub const TIMETABLE: &str = "timetable.csv";
    pub const DEMAND: &str = "demand.csv";
    pub const AFC: &str = "afc.csv";
    pub const TRUTH_PATHS: &str = "truth_paths.csv";
    pub const METADATA: &str = "metadata.json";
}

/// Resolves one input path: explicit flag wins, else `data_dir/name`.
pub fn input_path(explicit: &Option<PathBuf>, data: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match (explicit, data) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(d.join(name)),
        (None, None) => Err(Error::Config(format!(
            "missing input: pass --data DIR or an explicit path for {name}"
        ))),
    }
}

pub fn load_metadata_if_any(
    explicit: &Option<PathBuf>,
    data: &Option<PathBuf>,
) -> Result<Option<DatasetMetadata>> {
    let path = match (explicit, data) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => {
            let p = d.join(names::METADATA);
            if !p.exists() {
                return Ok(None);
            }
            p
        }
        (None, None) => return Ok(None),
    };
    io::load_metadata(&path).map(Some)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.display().to_string(),
        source: e,
    })
}

pub struct GenerateInputs {
    pub out: PathBuf,
    pub network: Option<PathBuf>,
    pub profile: Option<PathBuf>,
}

/// Builds a synthetic dataset: network, timetable, demand, ground-truth AFC
/// (simulated under the synthetic true parameters), held-out path
/// assignments, and replay metadata.
pub fn cmd_generate(inputs: &GenerateInputs, resolved: &Resolved) -> Result<()> {
    let (network, timetable, profile) = match (&inputs.network, &inputs.profile) {
        (None, None) => {
            let s = bundled_small_network();
            (s.network, s.timetable, s.profile)
        }
        (Some(net_path), Some(profile_path)) => {
            let network = io::load_network(net_path)?;
            let profile = io::load_profile(profile_path)?;
            let timetable = transim_core::datagen::build_timetable(
                &network,
                profile.horizon.start_s,
                profile.horizon.end_s,
                300.0,
                30.0,
            );
            (network, timetable, profile)
        }
        _ => {
            return Err(Error::Config(
                "custom generation needs both --network and --profile".to_string(),
            ))
        }
    };
    timetable.validate(&network)?;
    profile.validate()?;

    let mut sim_config = resolved.sim.clone();
    sim_config.horizon = profile.horizon;
    let (dataset, _) = build_dataset(
        &network,
        &timetable,
        &profile,
        &SYNTHETIC_TRUE_PARAMS,
        resolved.seed,
        &sim_config,
        &resolved.choice_sets,
    )?;

    ensure_dir(&inputs.out)?;
    io::save_network(&inputs.out.join(names::NETWORK), &network)?;
    io::save_timetable(&inputs.out.join(names::TIMETABLE), &network, &timetable)?;
    io::save_demand(&inputs.out.join(names::DEMAND), &dataset.demand)?;
    io::save_afc(&inputs.out.join(names::AFC), &network, &dataset.truth)?;
    io::save_truth_paths(&inputs.out.join(names::TRUTH_PATHS), &network, &dataset.truth)?;
    io::save_metadata(&inputs.out.join(names::METADATA), &dataset.metadata)?;

    let exited = dataset
        .truth
        .records
        .iter()
        .filter(|r| r.tap_out_s.is_some())
        .count();
    println!(
        "generated {} passengers ({} exited) into {}",
        dataset.truth.records.len(),
        exited,
        inputs.out.display()
    );
    Ok(())
}

/// Which path-choice model a simulation runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ChoiceFlag {
    /// Coefficients from --beta.
    Calibrated,
    /// Equal probability over each choice set.
    Uniform,
    /// Everyone on the minimum in-vehicle-time path.
    Shortest,
    /// The dataset's generating coefficients (needs metadata).
    True,
}

pub fn resolve_choice(
    flag: ChoiceFlag,
    beta_path: &Option<PathBuf>,
    metadata: Option<&DatasetMetadata>,
) -> Result<PathChoice> {
    match flag {
        ChoiceFlag::Uniform => Ok(benchmark_params(Benchmark::Uniform)),
        ChoiceFlag::Shortest => Ok(benchmark_params(Benchmark::ShortestPath)),
        ChoiceFlag::Calibrated => {
            let path = beta_path
                .as_ref()
                .ok_or_else(|| Error::Config("--choice calibrated needs --beta PATH".to_string()))?;
            Ok(PathChoice::Params(io::load_params(path)?))
        }
        ChoiceFlag::True => {
            let meta = metadata.ok_or_else(|| {
                Error::Config("--choice true needs dataset metadata with the generating parameters".to_string())
            })?;
            Ok(PathChoice::Params(meta.true_params))
        }
    }
}

pub struct SimulateInputs {
    pub network: PathBuf,
    pub timetable: PathBuf,
    pub demand: PathBuf,
    pub out: PathBuf,
    pub choice: PathChoice,
}

/// Runs one simulation and writes the tabular outputs and indicators.
pub fn cmd_simulate(inputs: &SimulateInputs, resolved: &Resolved) -> Result<SimOutput> {
    let network = io::load_network(&inputs.network)?;
    let timetable = io::load_timetable(&inputs.timetable, &network)?;
    let afc = io::load_afc(&inputs.demand)?;
    let taps = io::resolve_afc_tapins(&network, &afc)?;
    let sets = ChoiceSets::for_demand(&network, &taps, &resolved.choice_sets)?;

    let output = run_simulation(
        &network,
        &timetable,
        &sets,
        &inputs.choice,
        &taps,
        &resolved.sim,
    )?;

    // Cover every exit, including the cool-down drain past the horizon end.
    let t0 = resolved.sim.horizon.start_s;
    let latest = output
        .records
        .iter()
        .filter_map(|r| r.tap_out_s)
        .fold(resolved.sim.horizon.end_s, Real::max);
    let n_intervals = ((latest - t0) / resolved.tau_s).floor() as usize + 1;

    ensure_dir(&inputs.out)?;
    io::write_sim_output(
        &inputs.out,
        &network,
        &timetable,
        &output,
        resolved.tau_s,
        t0,
        n_intervals,
    )?;
    let indicators = extract_indicators(&output, resolved.tau_s, t0);
    io::write_indicators(&inputs.out, &network, &indicators)?;

    if !output.dropped.is_empty() {
        eprintln!(
            "warning: {} passenger(s) dropped with unreachable ODs",
            output.dropped.len()
        );
    }
    println!(
        "simulated {} passengers into {}",
        output.records.len(),
        inputs.out.display()
    );
    Ok(output)
}

pub struct CalibrateInputs {
    pub network: PathBuf,
    pub timetable: PathBuf,
    pub afc: PathBuf,
    pub out: PathBuf,
    pub metadata: Option<DatasetMetadata>,
}

/// Estimates the choice parameters from AFC data and writes the incumbent,
/// the evaluation trace, and a summary report.
pub fn cmd_calibrate(inputs: &CalibrateInputs, resolved: &Resolved) -> Result<()> {
    let network = io::load_network(&inputs.network)?;
    let timetable = io::load_timetable(&inputs.timetable, &network)?;
    let afc = io::load_afc(&inputs.afc)?;
    let observed = io::afc_to_journeys(&network, &afc)?;
    if observed.is_empty() {
        return Err(Error::Config(
            "AFC file has no tap-out times; nothing to calibrate against".to_string(),
        ));
    }
    let taps = io::resolve_afc_tapins(&network, &afc)?;
    let sets = ChoiceSets::for_demand(&network, &taps, &resolved.choice_sets)?;

    let mut cfg = CalibConfig::new(resolved.estimation);
    cfg.eta = resolved.eta;
    cfg.q_kl = resolved.q_kl;
    cfg.tau_s = resolved.tau_s;
    cfg.bounds = resolved.bounds.clone();
    cfg.budget = resolved.budget;
    cfg.seed = resolved.seed;

    let bundle = SimBundle {
        network: &network,
        timetable: &timetable,
        choice_sets: &sets,
        demand: &taps,
        sim_config: &resolved.sim,
    };
    let report = calibrate(&observed, &bundle, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    ensure_dir(&inputs.out)?;
    io::save_params(&inputs.out.join("beta_best.json"), &report.best)?;

    let mut trace = String::from(
        "iteration,beta_in_vehicle,beta_rel_walk,beta_transfers,beta_commonality,flow_term,kl_term,total,best_so_far\n",
    );
    for t in &report.trace {
        let b = t.params.as_array();
        trace.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            t.index, b[0], b[1], b[2], b[3], t.flow_term, t.kl_term, t.total, t.best_so_far
        ));
    }
    fs::write(inputs.out.join("trace.csv"), trace).map_err(Error::Io)?;

    let mut summary = String::new();
    summary.push_str(&format!(
        "evaluations: {}\nwt_star_cells: {}\nbest_total: {}\nbest_flow_term: {}\nbest_kl_term: {}\n",
        report.trace.len(),
        report.wt_star_size,
        report.best_value.total,
        report.best_value.flow_term,
        report.best_value.kl_term,
    ));
    summary.push_str("\ncoefficient,estimated");
    if inputs.metadata.is_some() {
        summary.push_str(",true");
    }
    summary.push('\n');
    let labels = [
        "in_vehicle_time",
        "relative_walk_time",
        "n_transfers",
        "commonality",
    ];
    let est = report.best.as_array();
    let truth = inputs.metadata.as_ref().map(|m| m.true_params.as_array());
    for (i, label) in labels.iter().enumerate() {
        match truth {
            Some(t) => summary.push_str(&format!("{label},{},{}\n", est[i], t[i])),
            None => summary.push_str(&format!("{label},{}\n", est[i])),
        }
    }
    fs::write(inputs.out.join("report.txt"), &summary).map_err(Error::Io)?;

    println!(
        "calibrated in {} evaluations; best objective {}\n{}",
        report.trace.len(),
        report.best_value.total,
        summary
    );
    Ok(())
}

pub struct CompareInputs {
    pub network: PathBuf,
    pub timetable: PathBuf,
    pub demand: PathBuf,
    pub truth_afc: PathBuf,
    pub beta: PathBuf,
    pub out: PathBuf,
    pub metadata: Option<DatasetMetadata>,
}

/// Exit flows summed over destinations, restricted to estimation intervals.
fn origin_flows(tensor: &ExitFlowTensor) -> BTreeMap<(StationId, usize), u32> {
    tensor.by_origin()
}

fn rmse_over(
    windows: &[(usize, usize)],
    window: usize,
    truth: &BTreeMap<(StationId, usize), u32>,
    model: &BTreeMap<(StationId, usize), u32>,
) -> Real {
    let (lo, hi) = windows[window];
    let keys: BTreeSet<(StationId, usize)> = truth
        .keys()
        .chain(model.keys())
        .filter(|(_, t)| *t >= lo && *t < hi)
        .copied()
        .collect();
    if keys.is_empty() {
        return 0.0;
    }
    let sum: Real = keys
        .iter()
        .map(|k| {
            let a = *truth.get(k).unwrap_or(&0) as Real;
            let b = *model.get(k).unwrap_or(&0) as Real;
            (a - b) * (a - b)
        })
        .sum();
    (sum / keys.len() as Real).sqrt()
}

/// Simulates each choice model against the same demand and compares
/// per-origin exit flows with the observed (ground-truth) flows.
pub fn cmd_compare(inputs: &CompareInputs, resolved: &Resolved) -> Result<()> {
    let network = io::load_network(&inputs.network)?;
    let timetable = io::load_timetable(&inputs.timetable, &network)?;
    let demand_afc = io::load_afc(&inputs.demand)?;
    let taps = io::resolve_afc_tapins(&network, &demand_afc)?;
    let sets = ChoiceSets::for_demand(&network, &taps, &resolved.choice_sets)?;

    let truth_afc = io::load_afc(&inputs.truth_afc)?;
    let truth_journeys: Vec<JourneyRecord> = io::afc_to_journeys(&network, &truth_afc)?;
    if truth_journeys.is_empty() {
        return Err(Error::Config("ground-truth AFC has no tap-outs".to_string()));
    }

    let estimation = resolved.estimation;
    if estimation.start_s < resolved.sim.horizon.start_s
        || estimation.end_s > resolved.sim.horizon.end_s
    {
        return Err(Error::Config(
            "reporting window lies outside the horizon".to_string(),
        ));
    }
    let n_intervals = (estimation.len_s() / resolved.tau_s).ceil() as usize;
    let truth_flows = exit_flows(
        truth_journeys
            .iter()
            .map(|r| (r.origin, r.destination, r.tap_out_s)),
        resolved.tau_s,
        estimation.start_s,
        n_intervals,
    );
    let truth_by_origin = origin_flows(&truth_flows);

    // Reporting windows: the full estimation window plus its two halves.
    let mut windows: Vec<(usize, usize)> = vec![(0, n_intervals)];
    if n_intervals >= 2 {
        windows.push((0, n_intervals / 2));
        windows.push((n_intervals / 2, n_intervals));
    }
    let window_label = |(lo, hi): (usize, usize)| -> String {
        format!(
            "{}-{}",
            format_hms(estimation.start_s + lo as Real * resolved.tau_s),
            format_hms(estimation.start_s + hi as Real * resolved.tau_s)
        )
    };

    let mut models: Vec<(String, PathChoice)> = vec![
        (
            "calibrated".to_string(),
            PathChoice::Params(io::load_params(&inputs.beta)?),
        ),
        ("uniform".to_string(), benchmark_params(Benchmark::Uniform)),
        ("shortest".to_string(), benchmark_params(Benchmark::ShortestPath)),
    ];
    if let Some(meta) = &inputs.metadata {
        models.push(("true".to_string(), PathChoice::Params(meta.true_params)));
    }

    let mut rmse_rows = String::from("window,model,rmse\n");
    let mut scatter = String::from("window,model,origin,interval_index,true_flow,model_flow\n");
    let mut rmse_by_model: BTreeMap<String, Real> = BTreeMap::new();

    for (name, choice) in &models {
        let output = run_simulation(&network, &timetable, &sets, choice, &taps, &resolved.sim)?;
        let flows = exit_flows(
            output.exit_records(),
            resolved.tau_s,
            estimation.start_s,
            n_intervals,
        );
        let by_origin = origin_flows(&flows);

        for (w, bounds) in windows.iter().enumerate() {
            let rmse = rmse_over(&windows, w, &truth_by_origin, &by_origin);
            rmse_rows.push_str(&format!("{},{},{}\n", window_label(*bounds), name, rmse));
            if w == 0 {
                rmse_by_model.insert(name.clone(), rmse);
            }
        }
        let keys: BTreeSet<(StationId, usize)> = truth_by_origin
            .keys()
            .chain(by_origin.keys())
            .copied()
            .collect();
        for (origin, t) in keys {
            scatter.push_str(&format!(
                "{},{},{},{},{},{}\n",
                window_label((0, n_intervals)),
                name,
                network.station_code(origin),
                t,
                truth_by_origin.get(&(origin, t)).unwrap_or(&0),
                by_origin.get(&(origin, t)).unwrap_or(&0),
            ));
        }
    }

    ensure_dir(&inputs.out)?;
    fs::write(inputs.out.join("rmse.csv"), &rmse_rows).map_err(Error::Io)?;
    fs::write(inputs.out.join("scatter.csv"), &scatter).map_err(Error::Io)?;

    println!("per-origin exit-flow RMSE over {}:", window_label((0, n_intervals)));
    for (name, rmse) in &rmse_by_model {
        println!("  {name:>10}  {rmse}");
    }
    Ok(())
}

