//! End-to-end checks of the `transim` binary: file wiring, determinism,
//! exit codes, and the choice-model flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use transim_core::calib::exit_flows;
use transim_core::choice::shortest_path_index;
use transim_core::io;
use transim_core::network::ChoiceSetConfig;
use transim_core::sim::ChoiceSets;
use transim_core::Real;

fn transim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        map.insert(
            entry.file_name().to_string_lossy().to_string(),
            fs::read(entry.path()).unwrap(),
        );
    }
    map
}

#[test]
fn generate_writes_dataset_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ds");
    assert_success(&transim(&["generate", "--out", out.to_str().unwrap(), "--seed", "5"]));
    for name in [
        "network.json",
        "timetable.csv",
        "demand.csv",
        "afc.csv",
        "truth_paths.csv",
        "metadata.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn generate_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_success(&transim(&["generate", "--out", a.to_str().unwrap(), "--seed", "9"]));
    assert_success(&transim(&["generate", "--out", b.to_str().unwrap(), "--seed", "9"]));
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn missing_network_file_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope/network.json");
    let out = transim(&[
        "simulate",
        "--network",
        missing.to_str().unwrap(),
        "--timetable",
        "also-missing.csv",
        "--demand",
        "also-missing.csv",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope/network.json"), "stderr: {stderr}");
}

/// Simulating the dataset under its own generating parameters reproduces
/// the ground-truth exit flows exactly.
#[test]
fn simulate_true_choice_replays_ground_truth_flows() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let sim = tmp.path().join("sim");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "31"]));
    assert_success(&transim(&[
        "simulate",
        "--data",
        ds.to_str().unwrap(),
        "--choice",
        "true",
        "--out",
        sim.to_str().unwrap(),
    ]));

    // Flows recomputed from the AFC file must match the flows file.
    let network = io::load_network(&ds.join("network.json")).unwrap();
    let metadata = io::load_metadata(&ds.join("metadata.json")).unwrap();
    let afc = io::load_afc(&ds.join("afc.csv")).unwrap();
    let journeys = io::afc_to_journeys(&network, &afc).unwrap();
    let latest = journeys.iter().map(|j| j.tap_out_s).fold(metadata.horizon.end_s, Real::max);
    let n = ((latest - metadata.horizon.start_s) / metadata.tau_s).floor() as usize + 1;
    let expected = exit_flows(
        journeys.iter().map(|j| (j.origin, j.destination, j.tap_out_s)),
        metadata.tau_s,
        metadata.horizon.start_s,
        n,
    );

    let text = fs::read_to_string(sim.join("od_exit_flows.out")).unwrap();
    let mut from_file: BTreeMap<(String, String, usize), u32> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        from_file.insert(
            (cols[0].to_string(), cols[1].to_string(), cols[2].parse().unwrap()),
            cols[3].parse().unwrap(),
        );
    }
    let mut expected_map: BTreeMap<(String, String, usize), u32> = BTreeMap::new();
    for (&(o, d, t), &c) in expected.iter() {
        expected_map.insert(
            (
                network.station_code(o).to_string(),
                network.station_code(d).to_string(),
                t,
            ),
            c,
        );
    }
    assert_eq!(from_file, expected_map);
}

#[test]
fn shortest_flag_assigns_argmin_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let sim = tmp.path().join("sim");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "8"]));
    assert_success(&transim(&[
        "simulate",
        "--data",
        ds.to_str().unwrap(),
        "--choice",
        "shortest",
        "--out",
        sim.to_str().unwrap(),
    ]));

    let network = io::load_network(&ds.join("network.json")).unwrap();
    let afc = io::load_afc(&ds.join("demand.csv")).unwrap();
    let taps = io::resolve_afc_tapins(&network, &afc).unwrap();
    let sets = ChoiceSets::for_demand(&network, &taps, &ChoiceSetConfig::default()).unwrap();

    let mut argmin: BTreeMap<(String, String), String> = BTreeMap::new();
    for set in sets.iter() {
        let best = &set.paths[shortest_path_index(set)];
        let legs = best
            .legs
            .iter()
            .map(|l| {
                format!(
                    "{}>{}@{}",
                    network.station_code(l.board),
                    network.station_code(l.alight),
                    network.line_code(l.line)
                )
            })
            .collect::<Vec<_>>()
            .join("|");
        argmin.insert(
            (
                network.station_code(set.od.0).to_string(),
                network.station_code(set.od.1).to_string(),
            ),
            legs,
        );
    }

    let text = fs::read_to_string(sim.join("passengers.out")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (o, d, path) = (cols[1], cols[2], cols[6]);
        assert_eq!(
            path,
            argmin[&(o.to_string(), d.to_string())],
            "passenger {} not on the shortest path",
            cols[0]
        );
    }
}

#[test]
fn uniform_flag_runs_under_zero_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "3"]));

    // Uniform must equal a calibrated run with an all-zero coefficients file.
    let zero = tmp.path().join("zero.json");
    fs::write(
        &zero,
        "{\"in_vehicle_time\":0.0,\"relative_walk_time\":0.0,\"n_transfers\":0.0,\"commonality\":0.0}\n",
    )
    .unwrap();
    let a = tmp.path().join("uniform");
    let b = tmp.path().join("zero-beta");
    assert_success(&transim(&[
        "simulate", "--data", ds.to_str().unwrap(), "--choice", "uniform",
        "--out", a.to_str().unwrap(),
    ]));
    assert_success(&transim(&[
        "simulate", "--data", ds.to_str().unwrap(), "--choice", "calibrated",
        "--beta", zero.to_str().unwrap(), "--out", b.to_str().unwrap(),
    ]));
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn calibrate_budget_below_design_size_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "4"]));
    let out = transim(&[
        "calibrate",
        "--data",
        ds.to_str().unwrap(),
        "--out",
        tmp.path().join("cal").to_str().unwrap(),
        "--budget",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_trace_has_one_row_per_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let cal = tmp.path().join("cal");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "12"]));
    assert_success(&transim(&[
        "calibrate",
        "--data",
        ds.to_str().unwrap(),
        "--out",
        cal.to_str().unwrap(),
        "--budget",
        "12",
    ]));
    let trace = fs::read_to_string(cal.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 12);
    assert!(cal.join("beta_best.json").exists());
    assert!(cal.join("report.txt").exists());
}

#[test]
fn compare_reports_zero_rmse_for_the_generating_model() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let cmp = tmp.path().join("cmp");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "21"]));

    // Use the true parameters as the "calibrated" model: self-comparison.
    let metadata = io::load_metadata(&ds.join("metadata.json")).unwrap();
    let beta = tmp.path().join("beta.json");
    io::save_params(&beta, &metadata.true_params).unwrap();

    assert_success(&transim(&[
        "compare",
        "--data",
        ds.to_str().unwrap(),
        "--beta",
        beta.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]));
    let rmse = fs::read_to_string(cmp.join("rmse.csv")).unwrap();
    for line in rmse.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "calibrated" || cols[1] == "true" {
            assert_eq!(cols[2], "0", "line: {line}");
        }
    }
    assert!(cmp.join("scatter.csv").exists());
}

/// A custom single-OD dataset: generate accepts external network/profile
/// files, and the reported RMSE reduces to the per-interval flow
/// differences of that one origin.
#[test]
fn single_od_dataset_rmse_by_hand() {
    let tmp = tempfile::tempdir().unwrap();
    let network_path = tmp.path().join("network.json");
    fs::write(
        &network_path,
        r#"{
  "stations": [
    {"id": "A", "name": "A", "x_m": 0.0, "y_m": 0.0, "gate_distance_m": 90.0, "transfer_distance_m": 100.0},
    {"id": "N", "name": "N", "x_m": 2000.0, "y_m": 800.0, "gate_distance_m": 90.0, "transfer_distance_m": 100.0},
    {"id": "S", "name": "S", "x_m": 2000.0, "y_m": -800.0, "gate_distance_m": 90.0, "transfer_distance_m": 100.0},
    {"id": "B", "name": "B", "x_m": 4000.0, "y_m": 0.0, "gate_distance_m": 90.0, "transfer_distance_m": 100.0}
  ],
  "lines": [
    {"id": "fast", "route": "fast", "direction": "east", "stops": ["A", "N", "B"], "run_times_s": [180.0, 180.0]},
    {"id": "slow", "route": "slow", "direction": "east", "stops": ["A", "S", "B"], "run_times_s": [420.0, 420.0]}
  ]
}"#,
    )
    .unwrap();
    let profile_path = tmp.path().join("profile.json");
    fs::write(
        &profile_path,
        r#"{
  "horizon": {"start_s": 61200.0, "end_s": 72000.0},
  "warm_up_end_s": 64800.0,
  "cool_down_start_s": 68400.0,
  "interval_s": 900.0,
  "rates": [{"origin": "A", "destination": "B", "per_interval": [200, 200, 240, 280, 320, 320, 300, 280, 200, 120, 80, 40]}]
}"#,
    )
    .unwrap();

    let ds = tmp.path().join("ds");
    assert_success(&transim(&[
        "generate",
        "--network",
        network_path.to_str().unwrap(),
        "--profile",
        profile_path.to_str().unwrap(),
        "--out",
        ds.to_str().unwrap(),
        "--seed",
        "2",
    ]));

    let cmp = tmp.path().join("cmp");
    let zero = tmp.path().join("zero.json");
    fs::write(
        &zero,
        "{\"in_vehicle_time\":0.0,\"relative_walk_time\":0.0,\"n_transfers\":0.0,\"commonality\":0.0}\n",
    )
    .unwrap();
    assert_success(&transim(&[
        "compare",
        "--data",
        ds.to_str().unwrap(),
        "--beta",
        zero.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]));

    // With one OD the per-origin flows are just that origin's intervals:
    // RMSE == sqrt(mean over intervals of squared flow difference).
    let scatter = fs::read_to_string(cmp.join("scatter.csv")).unwrap();
    let mut diffs: BTreeMap<String, Vec<Real>> = BTreeMap::new();
    for line in scatter.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "A", "single origin expected");
        let truth: Real = cols[4].parse().unwrap();
        let got: Real = cols[5].parse().unwrap();
        diffs.entry(cols[1].to_string()).or_default().push(truth - got);
    }
    let rmse_file = fs::read_to_string(cmp.join("rmse.csv")).unwrap();
    for line in rmse_file.lines().skip(1) {
        if !line.starts_with("18:00:00-19:00:00") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let d = &diffs[cols[1]];
        let expect = (d.iter().map(|x| x * x).sum::<Real>() / d.len() as Real).sqrt();
        let got: Real = cols[2].parse().unwrap();
        assert!((got - expect).abs() < 1e-9, "{line} vs {expect}");
    }
    // The uniform benchmark and the zero-coefficient model coincide.
    let rows: Vec<&str> = rmse_file.lines().collect();
    let get = |model: &str| -> Vec<String> {
        rows.iter()
            .filter(|l| l.split(',').nth(1) == Some(model))
            .map(|l| l.split(',').nth(2).unwrap().to_string())
            .collect()
    };
    assert_eq!(get("calibrated"), get("uniform"));
}

/// The reported RMSE agrees with a direct recomputation from the emitted
/// scatter data.
#[test]
fn compare_rmse_matches_scatter_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let cmp = tmp.path().join("cmp");
    assert_success(&transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "33"]));
    let metadata = io::load_metadata(&ds.join("metadata.json")).unwrap();
    let beta = tmp.path().join("beta.json");
    io::save_params(&beta, &metadata.true_params).unwrap();
    assert_success(&transim(&[
        "compare",
        "--data",
        ds.to_str().unwrap(),
        "--beta",
        beta.to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]));

    let mut sq: BTreeMap<String, (Real, usize)> = BTreeMap::new();
    let scatter = fs::read_to_string(cmp.join("scatter.csv")).unwrap();
    for line in scatter.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let model = cols[1].to_string();
        let truth: Real = cols[4].parse().unwrap();
        let got: Real = cols[5].parse().unwrap();
        let e = sq.entry(model).or_default();
        e.0 += (truth - got) * (truth - got);
        e.1 += 1;
    }
    let rmse_file = fs::read_to_string(cmp.join("rmse.csv")).unwrap();
    for line in rmse_file.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if !line.starts_with("18:00:00-19:00:00") {
            continue;
        }
        let (s, n) = sq[cols[1]];
        let expect = (s / n as Real).sqrt();
        let got: Real = cols[2].parse().unwrap();
        assert!(
            (got - expect).abs() < 1e-9,
            "model {}: rmse {} vs scatter {}",
            cols[1],
            got,
            expect
        );
    }
}
