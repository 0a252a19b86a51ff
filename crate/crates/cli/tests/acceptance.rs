//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities.
//!
//! Run with `cargo test -p transim-cli --test acceptance -- --nocapture`
//! to see every line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transim_core::calib::{
    calibrate, cors_optimize, exit_flows, journey_records, kl_divergence, objective, CalibConfig,
    CorsConfig, JtHistogram, Observed, SimBundle,
};
use transim_core::choice::{
    benchmark_params, choice_probabilities, Benchmark, ChoiceParams, PathChoice,
};
use transim_core::datagen::{
    bundled_small_network, generate_demand, generate_ground_truth, random_scenario,
    resolve_demand, RandomScenarioParams, SYNTHETIC_TRUE_PARAMS,
};
use transim_core::network::{
    commonality_factors, ChoiceSet, ChoiceSetConfig, Leg, LineId, Network, Path as TransitPath,
    PathAttributes, StationId, Timetable, WalkParams,
};
use transim_core::sim::{
    run_simulation, ChoiceSets, PassengerStatus, SimConfig, SimOutput, TapIn, Window,
};
use transim_core::Real;

fn rel_close(got: Real, expect: Real, tol: Real) -> bool {
    (got - expect).abs() <= tol * expect.abs().max(1e-9)
}

// ---------------------------------------------------------------------
// Criterion 1: equation oracles on randomized instances.
// ---------------------------------------------------------------------

fn synthetic_path(ivt: Real, rwt: Real, transfers: usize, f: Real, tag: u32) -> TransitPath {
    TransitPath {
        od: (StationId(0), StationId(1)),
        legs: vec![Leg {
            board: StationId(0),
            alight: StationId(1),
            line: LineId(tag),
        }],
        stations: vec![StationId(0), StationId(1)],
        attributes: PathAttributes {
            in_vehicle_time_min: ivt,
            relative_walk_time: rwt,
            n_transfers: transfers,
        },
        commonality: f,
        generalized_time_min: ivt,
    }
}

#[test]
fn acceptance_1_equation_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let instances = 25;

    // Choice probabilities against a plain evaluation of the logit formula.
    for _ in 0..instances {
        let n = rng.random_range(2..=6);
        let paths: Vec<TransitPath> = (0..n)
            .map(|i| {
                synthetic_path(
                    rng.random_range(3.0..45.0),
                    rng.random_range(0.1..3.0),
                    rng.random_range(0..3),
                    rng.random_range(-9.0..-0.5),
                    i as u32,
                )
            })
            .collect();
        let set = ChoiceSet {
            od: (StationId(0), StationId(1)),
            paths,
        };
        let beta = ChoiceParams {
            in_vehicle_time: rng.random_range(-2.0..0.0),
            relative_walk_time: rng.random_range(-3.0..0.0),
            n_transfers: rng.random_range(-2.0..0.0),
            commonality: rng.random_range(-5.0..0.0),
        };
        let got = choice_probabilities(&set, &beta).unwrap().probs;
        let utils: Vec<Real> = set
            .paths
            .iter()
            .map(|p| {
                beta.in_vehicle_time * p.attributes.in_vehicle_time_min
                    + beta.relative_walk_time * p.attributes.relative_walk_time
                    + beta.n_transfers * p.attributes.n_transfers as Real
                    + beta.commonality * p.commonality
            })
            .collect();
        let z: Real = utils.iter().map(|u| u.exp()).sum();
        for (g, u) in got.iter().zip(&utils) {
            assert!(rel_close(*g, u.exp() / z, 1e-9), "logit mismatch");
        }
    }

    // Commonality factors against an independent set-based evaluation.
    for _ in 0..instances {
        let n = rng.random_range(1..=5);
        let lists: Vec<Vec<StationId>> = (0..n)
            .map(|_| {
                let len = rng.random_range(2..=8);
                let mut ids = BTreeSet::new();
                while ids.len() < len {
                    ids.insert(rng.random_range(0..16u32));
                }
                ids.into_iter().map(StationId).collect()
            })
            .collect();
        let gamma: Real = rng.random_range(1.0..8.0);
        let got = commonality_factors::<Real>(&lists, gamma);
        for (i, li) in lists.iter().enumerate() {
            let si: BTreeSet<u32> = li.iter().map(|s| s.0).collect();
            let mut sum = 0.0;
            for lj in &lists {
                let sj: BTreeSet<u32> = lj.iter().map(|s| s.0).collect();
                let shared = si.intersection(&sj).count() as Real;
                sum += (shared / (li.len() as Real * lj.len() as Real)).powf(gamma);
            }
            assert!(rel_close(got[i], sum.ln(), 1e-9), "commonality mismatch");
        }
    }

    // KL divergence against a direct evaluation of the smoothed sum.
    let eps = 1e-6;
    for _ in 0..instances {
        let bins = rng.random_range(2..=12);
        let mk = |rng: &mut ChaCha8Rng| -> JtHistogram {
            let counts: Vec<u32> = (0..bins).map(|_| rng.random_range(0..40)).collect();
            let total = counts.iter().sum::<u32>().max(1);
            JtHistogram {
                bin_s: 60.0,
                counts,
                total,
            }
        };
        let p = mk(&mut rng);
        let q = mk(&mut rng);
        let got = kl_divergence(&p, &q, eps).unwrap();
        let norm = |h: &JtHistogram| -> Vec<Real> {
            let n = h.total as Real + eps * h.counts.len() as Real;
            h.counts.iter().map(|&c| (c as Real + eps) / n).collect()
        };
        let (pm, qm) = (norm(&p), norm(&q));
        let expect: Real = if p.counts == q.counts {
            0.0
        } else {
            pm.iter().zip(&qm).map(|(a, b)| a * (a / b).ln()).sum()
        };
        assert!(rel_close(got, expect, 1e-9), "kl mismatch: {got} vs {expect}");
    }

    println!("ACCEPTANCE 1 PASS: logit, commonality, and KL match brute-force evaluation on {instances} random instances each (rel err <= 1e-9)");
}

// ---------------------------------------------------------------------
// Criterion 2: simulator invariants on 1000 randomized scenarios.
// ---------------------------------------------------------------------

fn check_invariants(
    demand: &[TapIn],
    out: &SimOutput,
) -> std::result::Result<(), String> {
    // Conservation per OD.
    let mut tapped: BTreeMap<(StationId, StationId), u32> = BTreeMap::new();
    for t in demand {
        *tapped.entry((t.origin, t.destination)).or_default() += 1;
    }
    let accounting = out.od_accounting();
    for (od, &n) in &tapped {
        let [exited, onboard, queued, dropped] = accounting
            .get(od)
            .copied()
            .ok_or_else(|| format!("missing OD {od:?} in accounting"))?;
        if n != exited + onboard + queued + dropped {
            return Err(format!("conservation violated for {od:?}"));
        }
    }

    // Capacity on every segment.
    for l in &out.loads {
        if l.load > l.capacity {
            return Err(format!("load {} over capacity {}", l.load, l.capacity));
        }
    }

    // FCFS per platform.
    let mut per_platform: BTreeMap<(StationId, LineId), Vec<(Real, u64, Option<Real>)>> =
        BTreeMap::new();
    for r in &out.records {
        for e in &r.leg_events {
            per_platform
                .entry((e.board, e.line))
                .or_default()
                .push((e.platform_arrival_s, r.id, Some(e.board_time_s)));
        }
        if let Some(p) = r.pending {
            per_platform
                .entry((p.station, p.line))
                .or_default()
                .push((p.platform_arrival_s, r.id, None));
        }
    }
    for (platform, mut entries) in per_platform {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut last_board = Real::NEG_INFINITY;
        let mut blocked = false;
        for (_, id, board) in entries {
            match board {
                Some(t) => {
                    if blocked {
                        return Err(format!("passenger {id} overtook a waiting passenger at {platform:?}"));
                    }
                    if t < last_board {
                        return Err(format!("passenger {id} boarded out of order at {platform:?}"));
                    }
                    last_board = t;
                }
                None => blocked = true,
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance_2_simulator_invariants_on_1000_scenarios() {
    let params = RandomScenarioParams::default();
    let mut violations = 0usize;
    for seed in 0..1000u64 {
        let scenario = random_scenario(seed, &params);
        let sets = ChoiceSets::for_demand(
            &scenario.network,
            &scenario.demand,
            &ChoiceSetConfig::default(),
        )
        .unwrap();
        let out = run_simulation(
            &scenario.network,
            &scenario.timetable,
            &sets,
            &PathChoice::Params(SYNTHETIC_TRUE_PARAMS),
            &scenario.demand,
            &scenario.config,
        )
        .unwrap();
        if let Err(msg) = check_invariants(&scenario.demand, &out) {
            eprintln!("seed {seed}: {msg}");
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
    println!("ACCEPTANCE 2 PASS: conservation, capacity, and FCFS hold on 1000 randomized scenarios (0 violations)");
}

// ---------------------------------------------------------------------
// Criterion 3: null-congestion timetable-lookup oracle.
// ---------------------------------------------------------------------

fn timetable_journey(
    network: &Network,
    timetable: &Timetable,
    legs: &[Leg],
    tap_in_s: Real,
    walk: &WalkParams,
) -> Option<Real> {
    let first = &legs[0];
    let mut t = tap_in_s
        + walk.time_s(network.gate_distance_m(first.board, &network.line(first.line).route));
    for (k, leg) in legs.iter().enumerate() {
        let mut best: Option<(Real, String, Real)> = None;
        for trip in &timetable.trips {
            if trip.line != leg.line {
                continue;
            }
            let Some(i) = trip.stop_position(leg.board) else { continue };
            let Some(j) = trip.stop_position(leg.alight) else { continue };
            if j <= i {
                continue;
            }
            let dep = trip.stops[i].departure_s;
            if dep < t {
                continue;
            }
            let candidate = (dep, trip.train_id.clone(), trip.stops[j].arrival_s);
            best = match best {
                None => Some(candidate),
                Some(b) if (candidate.0, &candidate.1) < (b.0, &b.1) => Some(candidate),
                Some(b) => Some(b),
            };
        }
        let (_, _, arr) = best?;
        if k + 1 == legs.len() {
            return Some(
                arr + walk.time_s(network.gate_distance_m(leg.alight, &network.line(leg.line).route)),
            );
        }
        let next = &legs[k + 1];
        t = arr
            + walk.time_s(network.transfer_distance_m(
                leg.alight,
                &network.line(leg.line).route,
                &network.line(next.line).route,
            ));
    }
    None
}

#[test]
fn acceptance_3_null_congestion_oracle() {
    let params = RandomScenarioParams::default();
    let mut passengers = 0usize;
    for seed in 5000..5050u64 {
        let mut scenario = random_scenario(seed, &params);
        scenario.config.capacity_override = Some(u32::MAX);
        let sets = ChoiceSets::for_demand(
            &scenario.network,
            &scenario.demand,
            &ChoiceSetConfig::default(),
        )
        .unwrap();
        let out = run_simulation(
            &scenario.network,
            &scenario.timetable,
            &sets,
            &PathChoice::Params(SYNTHETIC_TRUE_PARAMS),
            &scenario.demand,
            &scenario.config,
        )
        .unwrap();
        for r in &out.records {
            if r.status == PassengerStatus::Dropped {
                continue;
            }
            let oracle = timetable_journey(
                &scenario.network,
                &scenario.timetable,
                &r.legs,
                r.tap_in_s,
                &scenario.config.walk,
            );
            assert_eq!(
                r.tap_out_s, oracle,
                "seed {seed} passenger {}: simulated tap-out differs from timetable lookup",
                r.id
            );
            passengers += 1;
        }
    }
    println!("ACCEPTANCE 3 PASS: infinite-capacity journey times equal timetable lookup exactly on 50 scenarios ({passengers} passengers)");
}

// ---------------------------------------------------------------------
// Criterion 4: the hand-traced overload fixture.
// ---------------------------------------------------------------------

#[test]
fn acceptance_4_left_behind_fixture() {
    use transim_core::network::{LineDef, StationDef};
    let station = |id: &str, x: Real, gate: Real| StationDef {
        id: id.to_string(),
        name: id.to_string(),
        x_m: Some(x),
        y_m: Some(0.0),
        gate_distance_m: gate,
        gate_overrides: BTreeMap::new(),
        transfer_distance_m: 0.0,
        transfer_overrides: BTreeMap::new(),
    };
    let network = Network::new(
        vec![station("A", 0.0, 90.0), station("B", 3000.0, 60.0)],
        vec![LineDef {
            id: "L".to_string(),
            route: "L".to_string(),
            direction: "east".to_string(),
            stops: vec!["A".to_string(), "B".to_string()],
            run_times_s: vec![300.0],
            segment_lengths_m: None,
            capacity: Some(2),
        }],
    )
    .unwrap();
    let line = network.line_id("L").unwrap();
    let sid = |c: &str| network.station_id(c).unwrap();
    let trip = |train: &str, dep_a: Real| transim_core::network::Trip {
        train_id: train.to_string(),
        line,
        stops: vec![
            transim_core::network::StopTime {
                station: sid("A"),
                arrival_s: dep_a - 50.0,
                departure_s: dep_a,
            },
            transim_core::network::StopTime {
                station: sid("B"),
                arrival_s: dep_a + 300.0,
                departure_s: dep_a + 300.0,
            },
        ],
    };
    let timetable = Timetable {
        trips: vec![trip("t1", 900.0), trip("t2", 1200.0)],
    };
    // Tap-ins at 740/750/760; the 90 m gate at 1.5 m/s adds 60 s, so the
    // platform arrivals are 800/810/820 and the queue order is 1, 2, 3.
    let demand: Vec<TapIn> = [740.0, 750.0, 760.0]
        .iter()
        .enumerate()
        .map(|(i, &t)| TapIn {
            id: i as u64 + 1,
            origin: sid("A"),
            destination: sid("B"),
            tap_in_s: t,
        })
        .collect();
    let sets = ChoiceSets::for_demand(&network, &demand, &ChoiceSetConfig::default()).unwrap();
    let config = SimConfig::new(1, Window::new(0.0, 10_000.0));
    let out = run_simulation(
        &network,
        &timetable,
        &sets,
        &PathChoice::Params(ChoiceParams::zero()),
        &demand,
        &config,
    )
    .unwrap();

    // Hand trace: passengers 1 and 2 board t1 (load 2), passenger 3 is
    // denied once, boards t2 (load 1), and exits at 1500 + 40 s egress.
    let expect_board: [(u64, usize, u32); 3] = [(1, 0, 0), (2, 0, 0), (3, 1, 1)];
    for (id, trip_idx, left_behind) in expect_board {
        let r = &out.records[(id - 1) as usize];
        assert_eq!(r.id, id);
        assert_eq!(r.leg_events.len(), 1);
        assert_eq!(r.leg_events[0].trip, trip_idx, "passenger {id} trip");
        assert_eq!(r.times_left_behind, left_behind, "passenger {id} denials");
        assert_eq!(r.status, PassengerStatus::Exited);
    }
    assert_eq!(out.records[0].tap_out_s, Some(1240.0));
    assert_eq!(out.records[1].tap_out_s, Some(1240.0));
    assert_eq!(out.records[2].tap_out_s, Some(1540.0));
    let loads: Vec<u32> = out.loads.iter().map(|l| l.load).collect();
    assert_eq!(loads, vec![2, 1]);
    let denied: u32 = out.boardings.iter().map(|b| b.denied).sum();
    assert_eq!(denied, 1);
    println!("ACCEPTANCE 4 PASS: overload fixture reproduces the hand-traced boarding order, loads [2, 1], and left-behind counts exactly");
}

// ---------------------------------------------------------------------
// Criterion 5: CORS on the 4-d sphere.
// ---------------------------------------------------------------------

#[test]
fn acceptance_5_cors_sphere() {
    let bounds = vec![(-2.0, 2.0); 4];
    let cfg = CorsConfig {
        budget: 60,
        seed: 42,
        ..CorsConfig::default()
    };
    let result = cors_optimize(
        |x| Ok(x.iter().map(|v| v * v).sum::<Real>()),
        &bounds,
        &cfg,
    )
    .unwrap();
    assert!(
        result.best.value <= 0.05,
        "incumbent {} above 0.05",
        result.best.value
    );
    assert!(
        result.incumbent.windows(2).all(|w| w[1] <= w[0]),
        "incumbent sequence increased"
    );
    assert!(
        result.max_interp_residual <= 1e-6,
        "interpolation residual {} above 1e-6",
        result.max_interp_residual
    );
    println!(
        "ACCEPTANCE 5 PASS: sphere incumbent {:.4} <= 0.05 after 60 evaluations; incumbent nonincreasing; max interpolation residual {:.2e} <= 1e-6",
        result.best.value, result.max_interp_residual
    );
}

// ---------------------------------------------------------------------
// Criteria 6 and 7: recovery on the bundled network and the exact
// self-match of the objective.
// ---------------------------------------------------------------------

fn per_origin_rmse(
    truth: &BTreeMap<(StationId, usize), u32>,
    model: &BTreeMap<(StationId, usize), u32>,
) -> Real {
    let keys: BTreeSet<(StationId, usize)> = truth.keys().chain(model.keys()).copied().collect();
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

#[test]
fn acceptance_6_beta_recovery_and_benchmark_ordering() {
    let scenario = bundled_small_network();
    let seed = 42;
    let demand = generate_demand(&scenario.profile, seed).unwrap();
    let taps = resolve_demand(&scenario.network, &demand).unwrap();
    let sets =
        ChoiceSets::for_demand(&scenario.network, &taps, &ChoiceSetConfig::default()).unwrap();
    let sim_config = SimConfig::new(seed, scenario.profile.horizon);
    let truth = generate_ground_truth(
        &scenario.network,
        &scenario.timetable,
        &sets,
        &demand,
        &SYNTHETIC_TRUE_PARAMS,
        &sim_config,
    )
    .unwrap();
    let observed = journey_records(&truth);

    let mut cfg = CalibConfig::new(scenario.profile.estimation_window());
    cfg.budget = 100;
    cfg.seed = seed;
    let bundle = SimBundle {
        network: &scenario.network,
        timetable: &scenario.timetable,
        choice_sets: &sets,
        demand: &taps,
        sim_config: &sim_config,
    };
    let report = calibrate(&observed, &bundle, &cfg).unwrap();

    // (a) all recovered coefficients are negative.
    let recovered = report.best.as_array();
    assert!(
        recovered.iter().all(|&c| c < 0.0),
        "recovered coefficients not all negative: {recovered:?}"
    );

    // (b) calibrated per-origin exit-flow RMSE beats both benchmarks over
    // the estimation hour.
    let estimation = scenario.profile.estimation_window();
    let n = (estimation.len_s() / cfg.tau_s).ceil() as usize;
    let truth_flows = exit_flows(
        observed.iter().map(|r| (r.origin, r.destination, r.tap_out_s)),
        cfg.tau_s,
        estimation.start_s,
        n,
    )
    .by_origin();
    let model_rmse = |choice: &PathChoice| -> Real {
        let out = run_simulation(
            &scenario.network,
            &scenario.timetable,
            &sets,
            choice,
            &taps,
            &sim_config,
        )
        .unwrap();
        let flows = exit_flows(out.exit_records(), cfg.tau_s, estimation.start_s, n).by_origin();
        per_origin_rmse(&truth_flows, &flows)
    };
    let calibrated = model_rmse(&PathChoice::Params(report.best));
    let uniform = model_rmse(&benchmark_params(Benchmark::Uniform));
    let shortest = model_rmse(&benchmark_params(Benchmark::ShortestPath));
    assert!(
        calibrated < uniform && calibrated < shortest,
        "RMSE ordering violated: calibrated {calibrated}, uniform {uniform}, shortest {shortest}"
    );
    println!(
        "ACCEPTANCE 6 PASS: recovered beta {recovered:?} all negative; per-origin RMSE calibrated {calibrated:.2} < uniform {uniform:.2} and < shortest {shortest:.2}"
    );
}

#[test]
fn acceptance_7_self_match_objective_is_zero() {
    let scenario = bundled_small_network();
    let seed = 1234;
    let demand = generate_demand(&scenario.profile, seed).unwrap();
    let taps = resolve_demand(&scenario.network, &demand).unwrap();
    let sets =
        ChoiceSets::for_demand(&scenario.network, &taps, &ChoiceSetConfig::default()).unwrap();
    let sim_config = SimConfig::new(seed, scenario.profile.horizon);
    let truth = generate_ground_truth(
        &scenario.network,
        &scenario.timetable,
        &sets,
        &demand,
        &SYNTHETIC_TRUE_PARAMS,
        &sim_config,
    )
    .unwrap();
    let observed = journey_records(&truth);
    let cfg = CalibConfig::new(scenario.profile.estimation_window());
    let bundle = SimBundle {
        network: &scenario.network,
        timetable: &scenario.timetable,
        choice_sets: &sets,
        demand: &taps,
        sim_config: &sim_config,
    };
    let value = objective(
        &SYNTHETIC_TRUE_PARAMS,
        &Observed::from_records(&observed, &cfg),
        &bundle,
        &cfg,
    )
    .unwrap();
    assert_eq!(value.flow_term, 0.0);
    assert_eq!(value.kl_term, 0.0);
    assert_eq!(value.total, 0.0);
    println!("ACCEPTANCE 7 PASS: objective at the generating parameters returns flow term 0 and KL term 0 under common random numbers");
}

// ---------------------------------------------------------------------
// Criterion 8: the CLI pipeline is byte-identical under a repeated seed.
// ---------------------------------------------------------------------

fn transim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
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
fn acceptance_8_pipeline_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let run_pipeline = |tag: &str| -> (BTreeMap<String, Vec<u8>>, BTreeMap<String, Vec<u8>>, BTreeMap<String, Vec<u8>>) {
        let ds = tmp.path().join(format!("ds-{tag}"));
        let sim = tmp.path().join(format!("sim-{tag}"));
        let cal = tmp.path().join(format!("cal-{tag}"));
        for out in [
            transim(&["generate", "--out", ds.to_str().unwrap(), "--seed", "42"]),
            transim(&[
                "simulate", "--data", ds.to_str().unwrap(), "--choice", "true",
                "--out", sim.to_str().unwrap(),
            ]),
            transim(&[
                "calibrate", "--data", ds.to_str().unwrap(), "--budget", "15",
                "--out", cal.to_str().unwrap(),
            ]),
        ] {
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        (dir_bytes(&ds), dir_bytes(&sim), dir_bytes(&cal))
    };
    let first = run_pipeline("a");
    let second = run_pipeline("b");
    assert_eq!(first.0, second.0, "generate outputs differ");
    assert_eq!(first.1, second.1, "simulate outputs differ");
    assert_eq!(first.2, second.2, "calibrate outputs differ");
    let files = first.0.len() + first.1.len() + first.2.len();
    println!("ACCEPTANCE 8 PASS: generate -> simulate -> calibrate repeated with seed 42 produced byte-identical outputs ({files} files)");
}
