//! End-to-end calibration behavior on the bundled scenario: exact
//! self-match at the generating parameters, the degenerate-config paths,
//! and recovery of near-uniform choices from uniform-generated data.

use transim_core::calib::{
    calibrate, journey_records, objective, CalibConfig, JourneyRecord, SimBundle,
};
use transim_core::choice::{choice_probabilities, ChoiceParams};
use transim_core::datagen::{
    bundled_small_network, generate_demand, generate_ground_truth, resolve_demand,
    BundledScenario, SYNTHETIC_TRUE_PARAMS,
};
use transim_core::io;
use transim_core::network::ChoiceSetConfig;
use transim_core::sim::{ChoiceSets, SimConfig, TapIn};
use transim_core::Real;

struct Fixture {
    scenario: BundledScenario,
    taps: Vec<TapIn>,
    sets: ChoiceSets,
    sim_config: SimConfig,
    observed: Vec<JourneyRecord>,
    truth: transim_core::sim::SimOutput,
}

/// Generates a thinned ground-truth dataset under `beta`.
fn fixture(beta: &ChoiceParams, thin: Real, seed: u64) -> Fixture {
    let scenario = bundled_small_network();
    let mut profile = scenario.profile.clone();
    for rates in profile.rates.values_mut() {
        for r in rates.iter_mut() {
            *r *= thin;
        }
    }
    let demand = generate_demand(&profile, seed).unwrap();
    let taps = resolve_demand(&scenario.network, &demand).unwrap();
    let sets =
        ChoiceSets::for_demand(&scenario.network, &taps, &ChoiceSetConfig::default()).unwrap();
    let sim_config = SimConfig::new(seed, profile.horizon);
    let truth = generate_ground_truth(
        &scenario.network,
        &scenario.timetable,
        &sets,
        &demand,
        beta,
        &sim_config,
    )
    .unwrap();
    let observed = journey_records(&truth);
    Fixture {
        scenario,
        taps,
        sets,
        sim_config,
        observed,
        truth,
    }
}

fn calib_config(fixture: &Fixture) -> CalibConfig {
    let mut cfg = CalibConfig::new(fixture.scenario.profile.estimation_window());
    cfg.q_kl = 20;
    cfg
}

#[test]
fn objective_at_true_parameters_is_exactly_zero() {
    let f = fixture(&SYNTHETIC_TRUE_PARAMS, 0.2, 4242);
    let cfg = calib_config(&f);
    let bundle = SimBundle {
        network: &f.scenario.network,
        timetable: &f.scenario.timetable,
        choice_sets: &f.sets,
        demand: &f.taps,
        sim_config: &f.sim_config,
    };
    let value = objective(&SYNTHETIC_TRUE_PARAMS,
        &transim_core::calib::Observed::from_records(&f.observed, &cfg), &bundle, &cfg).unwrap();
    assert_eq!(value.flow_term, 0.0);
    assert_eq!(value.kl_term, 0.0);
    assert_eq!(value.total, 0.0);

    // A perturbed vector does not self-match.
    let off = ChoiceParams {
        in_vehicle_time: -1.5,
        ..SYNTHETIC_TRUE_PARAMS
    };
    let value = objective(&off,
        &transim_core::calib::Observed::from_records(&f.observed, &cfg), &bundle, &cfg).unwrap();
    assert!(value.total > 0.0);
}

/// The floor-to-whole-seconds applied when AFC files are written must not
/// break the exact self-match: interval and histogram-bin indexing commute
/// with the floor.
#[test]
fn objective_self_match_survives_afc_file_round_trip() {
    let f = fixture(&SYNTHETIC_TRUE_PARAMS, 0.2, 77);
    let cfg = calib_config(&f);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("afc.csv");
    io::save_afc(&path, &f.scenario.network, &f.truth).unwrap();
    let loaded = io::load_afc(&path).unwrap();
    let observed = io::afc_to_journeys(&f.scenario.network, &loaded).unwrap();
    assert_eq!(observed.len(), f.observed.len());

    let bundle = SimBundle {
        network: &f.scenario.network,
        timetable: &f.scenario.timetable,
        choice_sets: &f.sets,
        demand: &f.taps,
        sim_config: &f.sim_config,
    };
    let value = objective(&SYNTHETIC_TRUE_PARAMS,
        &transim_core::calib::Observed::from_records(&observed, &cfg), &bundle, &cfg).unwrap();
    assert_eq!(value.flow_term, 0.0, "exit-flow keying must commute with flooring");
    assert_eq!(value.kl_term, 0.0, "journey-time binning must commute with flooring");
}

#[test]
fn eta_zero_calibration_completes_with_zero_kl() {
    let f = fixture(&SYNTHETIC_TRUE_PARAMS, 0.1, 9);
    let mut cfg = calib_config(&f);
    cfg.eta = 0.0;
    cfg.budget = 10; // equal to the initial design size: best-of-design
    cfg.seed = 1;
    let bundle = SimBundle {
        network: &f.scenario.network,
        timetable: &f.scenario.timetable,
        choice_sets: &f.sets,
        demand: &f.taps,
        sim_config: &f.sim_config,
    };
    let report = calibrate(&f.observed, &bundle, &cfg).unwrap();
    assert_eq!(report.trace.len(), 10);
    assert!(report.trace.iter().all(|t| t.kl_term == 0.0));
    assert!(report.trace.iter().all(|t| t.total == t.flow_term));
    // Incumbent column is nonincreasing.
    assert!(report
        .trace
        .windows(2)
        .all(|w| w[1].best_so_far <= w[0].best_so_far));
}

#[test]
fn empty_wt_star_warns() {
    let f = fixture(&SYNTHETIC_TRUE_PARAMS, 0.02, 13);
    let mut cfg = calib_config(&f);
    cfg.q_kl = 100_000; // unattainable
    cfg.budget = 10;
    let bundle = SimBundle {
        network: &f.scenario.network,
        timetable: &f.scenario.timetable,
        choice_sets: &f.sets,
        demand: &f.taps,
        sim_config: &f.sim_config,
    };
    let report = calibrate(&f.observed, &bundle, &cfg).unwrap();
    assert_eq!(report.wt_star_size, 0);
    assert!(!report.warnings.is_empty());
}

/// Data generated with all-zero coefficients must calibrate back to
/// near-uniform path probabilities on every target OD.
#[test]
fn uniform_generator_recovers_near_uniform_choices() {
    let f = fixture(&ChoiceParams::zero(), 0.25, 2026);
    let mut cfg = calib_config(&f);
    cfg.budget = 80;
    cfg.seed = 7;
    let bundle = SimBundle {
        network: &f.scenario.network,
        timetable: &f.scenario.timetable,
        choice_sets: &f.sets,
        demand: &f.taps,
        sim_config: &f.sim_config,
    };
    let report = calibrate(&f.observed, &bundle, &cfg).unwrap();

    for (o, d) in &f.scenario.target_ods {
        let od = (
            f.scenario.network.station_id(o).unwrap(),
            f.scenario.network.station_id(d).unwrap(),
        );
        let set = f.sets.get(od).unwrap();
        let probs = choice_probabilities(set, &report.best).unwrap();
        let uniform = 1.0 / set.len() as Real;
        let tv: Real = probs
            .probs
            .iter()
            .map(|p| (p - uniform).abs())
            .sum::<Real>()
            / 2.0;
        assert!(
            tv <= 0.05,
            "OD {o}->{d}: total variation {tv:.4} from uniform under {:?}",
            report.best
        );
    }
}
