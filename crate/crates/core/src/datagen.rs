//! Synthetic data generation: networks, Poisson tap-in demand, and
//! ground-truth AFC datasets produced by simulating a known parameter
//! vector.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::choice::{ChoiceParams, PathChoice};
use crate::error::{Error, Result};
use crate::network::{ChoiceSetConfig, LineDef, Network, StationDef, StopTime, Timetable, Trip};
use crate::sim::{run_simulation, ChoiceSets, SimConfig, SimOutput, TapIn, Window};
use crate::Real;

/// Coefficients used as the synthetic "truth" when generating datasets.
pub const SYNTHETIC_TRUE_PARAMS: ChoiceParams = ChoiceParams {
    in_vehicle_time: -0.147,
    relative_walk_time: -1.271,
    n_transfers: -0.573,
    commonality: -3.679,
};

/// Per-OD arrival rates over a horizon split into warm-up, estimation, and
/// cool-down windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub horizon: Window,
    pub warm_up_end_s: Real,
    pub cool_down_start_s: Real,
    /// Profile resolution in seconds.
    pub interval_s: Real,
    /// Passengers per hour for each OD pair and profile interval, keyed by
    /// station codes.
    #[serde(with = "od_rates")]
    pub rates: BTreeMap<(String, String), Vec<Real>>,
}

/// Serializes the OD rate map as a list of rows so the profile stays plain
/// JSON (tuple keys cannot be JSON object keys).
mod od_rates {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        origin: String,
        destination: String,
        per_interval: Vec<Real>,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(String, String), Vec<Real>>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(map.len()))?;
        for ((origin, destination), per_interval) in map {
            seq.serialize_element(&Row {
                origin: origin.clone(),
                destination: destination.clone(),
                per_interval: per_interval.clone(),
            })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<BTreeMap<(String, String), Vec<Real>>, D::Error> {
        let rows = Vec::<Row>::deserialize(deserializer)?;
        Ok(rows
            .into_iter()
            .map(|r| ((r.origin, r.destination), r.per_interval))
            .collect())
    }
}

impl DemandProfile {
    pub fn n_intervals(&self) -> usize {
        (self.horizon.len_s() / self.interval_s).ceil() as usize
    }

    pub fn estimation_window(&self) -> Window {
        Window::new(self.warm_up_end_s, self.cool_down_start_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.start_s < self.warm_up_end_s
            && self.warm_up_end_s <= self.cool_down_start_s
            && self.cool_down_start_s < self.horizon.end_s)
        {
            return Err(Error::Config(
                "demand windows must be contiguous and ordered".to_string(),
            ));
        }
        if !(self.interval_s > 0.0) {
            return Err(Error::Config("profile interval must be positive".to_string()));
        }
        let n = self.n_intervals();
        for ((o, d), rates) in &self.rates {
            if rates.len() != n {
                return Err(Error::Config(format!(
                    "OD {o}->{d} has {} rates, expected {n}",
                    rates.len()
                )));
            }
            if rates.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::Config(format!("OD {o}->{d} has a negative rate")));
            }
        }
        Ok(())
    }
}

/// A generated tap-in, still keyed by station codes.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandRecord {
    pub id: u64,
    pub origin: String,
    pub destination: String,
    pub tap_in_s: Real,
}

/// Draws tap-ins as a Poisson process per OD and interval, with times
/// uniform (whole seconds) within the interval. Ids are assigned in
/// (time, origin, destination) order.
pub fn generate_demand(profile: &DemandProfile, seed: u64) -> Result<Vec<DemandRecord>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<(Real, String, String)> = Vec::new();
    for ((o, d), rates) in &profile.rates {
        for (i, &rate_per_hour) in rates.iter().enumerate() {
            let start = profile.horizon.start_s + i as Real * profile.interval_s;
            let end = (start + profile.interval_s).min(profile.horizon.end_s);
            let lambda = rate_per_hour * (end - start) / 3600.0;
            if lambda <= 0.0 {
                continue;
            }
            let n = Poisson::new(lambda)
                .map_err(|e| Error::Config(format!("invalid rate {rate_per_hour}: {e}")))?
                .sample(&mut rng) as usize;
            for _ in 0..n {
                let t = rng.random_range(start as i64..end as i64) as Real;
                draws.push((t, o.clone(), d.clone()));
            }
        }
    }
    draws.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (&a.1, &a.2).cmp(&(&b.1, &b.2))));
    Ok(draws
        .into_iter()
        .enumerate()
        .map(|(i, (t, o, d))| DemandRecord {
            id: i as u64 + 1,
            origin: o,
            destination: d,
            tap_in_s: t,
        })
        .collect())
}

/// Resolves demand records against a network.
pub fn resolve_demand(network: &Network, records: &[DemandRecord]) -> Result<Vec<TapIn>> {
    records
        .iter()
        .map(|r| {
            let origin = network.station_id(&r.origin).ok_or_else(|| {
                Error::Config(format!("demand references unknown station {}", r.origin))
            })?;
            let destination = network.station_id(&r.destination).ok_or_else(|| {
                Error::Config(format!("demand references unknown station {}", r.destination))
            })?;
            Ok(TapIn {
                id: r.id,
                origin,
                destination,
                tap_in_s: r.tap_in_s,
            })
        })
        .collect()
}

/// Everything needed to regenerate a synthetic dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub true_params: ChoiceParams,
    pub demand_seed: u64,
    pub sim_seed: u64,
    pub gamma: Real,
    pub tau_s: Real,
    pub walk_speed_mps: Real,
    pub default_capacity: u32,
    pub k_paths: usize,
    pub detour_cap: Real,
    pub horizon: Window,
    pub estimation: Window,
    /// Demand sampling model, recorded for provenance.
    pub demand_model: String,
}

/// A generated dataset: the ground-truth tap-outs come from simulating the
/// demand under `metadata.true_params`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub demand: Vec<DemandRecord>,
    /// The simulation output under the true parameters; tap-outs plus the
    /// held-out true path assignments.
    pub truth: SimOutput,
    pub metadata: DatasetMetadata,
}

/// Simulates `demand` under `true_params` to produce ground-truth tap-outs.
pub fn generate_ground_truth(
    network: &Network,
    timetable: &Timetable,
    choice_sets: &ChoiceSets,
    demand: &[DemandRecord],
    true_params: &ChoiceParams,
    sim_config: &SimConfig,
) -> Result<SimOutput> {
    let taps = resolve_demand(network, demand)?;
    run_simulation(
        network,
        timetable,
        choice_sets,
        &PathChoice::Params(*true_params),
        &taps,
        sim_config,
    )
}

/// Draws demand and simulates it under `true_params`, packaging the result
/// with the metadata needed to regenerate it bit-for-bit.
pub fn build_dataset(
    network: &Network,
    timetable: &Timetable,
    profile: &DemandProfile,
    true_params: &ChoiceParams,
    seed: u64,
    sim_config: &SimConfig,
    choice_cfg: &crate::network::ChoiceSetConfig,
) -> Result<(SyntheticDataset, ChoiceSets)> {
    let demand = generate_demand(profile, seed)?;
    let taps = resolve_demand(network, &demand)?;
    let sets = ChoiceSets::for_demand(network, &taps, choice_cfg)?;
    let truth = generate_ground_truth(network, timetable, &sets, &demand, true_params, sim_config)?;
    let metadata = DatasetMetadata {
        true_params: *true_params,
        demand_seed: seed,
        sim_seed: sim_config.seed,
        gamma: choice_cfg.gamma,
        tau_s: sim_config.tau_s,
        walk_speed_mps: sim_config.walk.speed_mps,
        default_capacity: sim_config.default_capacity,
        k_paths: choice_cfg.k,
        detour_cap: choice_cfg.detour_cap,
        horizon: profile.horizon,
        estimation: profile.estimation_window(),
        demand_model: "poisson per OD-interval, uniform whole-second times".to_string(),
    };
    Ok((
        SyntheticDataset {
            demand,
            truth,
            metadata,
        },
        sets,
    ))
}

/// The bundled desk-scale scenario.
#[derive(Debug, Clone)]
pub struct BundledScenario {
    pub network: Network,
    pub timetable: Timetable,
    pub profile: DemandProfile,
    /// OD pairs (by station code) the calibration focuses on; each has at
    /// least two distinct reasonable paths.
    pub target_ods: Vec<(String, String)>,
}

fn station(
    id: &str,
    name: &str,
    x: Real,
    y: Real,
    gate: Real,
    transfer: Real,
) -> StationDef {
    StationDef {
        id: id.to_string(),
        name: name.to_string(),
        x_m: Some(x),
        y_m: Some(y),
        gate_distance_m: gate,
        gate_overrides: BTreeMap::new(),
        transfer_distance_m: transfer,
        transfer_overrides: BTreeMap::new(),
    }
}

fn line(
    id: &str,
    route: &str,
    direction: &str,
    stops: &[&str],
    runs: &[Real],
    capacity: u32,
) -> LineDef {
    LineDef {
        id: id.to_string(),
        route: route.to_string(),
        direction: direction.to_string(),
        stops: stops.iter().map(|s| s.to_string()).collect(),
        run_times_s: runs.to_vec(),
        segment_lengths_m: None,
        capacity: Some(capacity),
    }
}

fn reversed(def: &LineDef, id: &str, direction: &str) -> LineDef {
    LineDef {
        id: id.to_string(),
        route: def.route.clone(),
        direction: direction.to_string(),
        stops: def.stops.iter().rev().cloned().collect(),
        run_times_s: def.run_times_s.iter().rev().copied().collect(),
        segment_lengths_m: def
            .segment_lengths_m
            .as_ref()
            .map(|l| l.iter().rev().copied().collect()),
        capacity: def.capacity,
    }
}

/// Periodic trips over the full stop sequence of every line.
pub fn build_timetable(
    network: &Network,
    first_departure_s: Real,
    last_departure_s: Real,
    headway_s: Real,
    dwell_s: Real,
) -> Timetable {
    let mut trips = Vec::new();
    for (lid, l) in network.lines() {
        let mut start = first_departure_s;
        let mut run = 0usize;
        while start <= last_departure_s {
            let mut stops = Vec::with_capacity(l.stops.len());
            let mut arr = start - dwell_s;
            for (k, &sid) in l.stops.iter().enumerate() {
                let dep = if k + 1 == l.stops.len() { arr } else { arr + dwell_s };
                stops.push(StopTime {
                    station: sid,
                    arrival_s: arr,
                    departure_s: dep,
                });
                if k < l.run_times_s.len() {
                    arr = dep + l.run_times_s[k];
                }
            }
            trips.push(Trip {
                train_id: format!("{}-{run:03}", l.code),
                line: lid,
                stops,
            });
            run += 1;
            start += headway_s;
        }
    }
    Timetable { trips }
}

/// Builds the bundled ten-station, three-route network with an
/// evening-peak demand profile.
///
/// Layout: a southern trunk and a faster northern bypass share the hubs
/// `B` and `D`, plus a short connector, so several OD pairs have two or
/// three distinct sensible paths.
///
/// ```text
///        F --- G --- H          (blue, faster)
///       /       \     \
/// A -- B         J     D -- E   (red trunk)
///       \        |    /
///        C ----- J -- K         (red via south; green connects G-J)
/// ```
pub fn bundled_small_network() -> BundledScenario {
    let stations = vec![
        station("A", "Ashford", 0.0, 0.0, 120.0, 150.0),
        station("B", "Brickfield", 1500.0, 0.0, 100.0, 140.0),
        station("C", "Canton Rd", 3000.0, -1200.0, 90.0, 130.0),
        station("J", "Junction Bay", 4500.0, -1200.0, 110.0, 120.0),
        station("K", "Kestrel Park", 6000.0, -1200.0, 95.0, 130.0),
        station("D", "Dockside", 7500.0, 0.0, 130.0, 160.0),
        station("E", "Eastgate", 9000.0, 0.0, 115.0, 150.0),
        station("F", "Fairview", 2500.0, 1200.0, 85.0, 120.0),
        station("G", "Glenmore", 4200.0, 1200.0, 105.0, 125.0),
        station("H", "Harbour Hts", 6000.0, 1200.0, 100.0, 135.0),
    ];

    // Red trunk: A-B-C-J-K-D-E, the slower southern route between B and D.
    let red_e = line(
        "red-e",
        "red",
        "east",
        &["A", "B", "C", "J", "K", "D", "E"],
        &[140.0, 165.0, 165.0, 165.0, 165.0, 140.0],
        200,
    );
    // Blue bypass: B-F-G-H-D, faster between the hubs.
    let blue_e = line(
        "blue-e",
        "blue",
        "east",
        &["B", "F", "G", "H", "D"],
        &[105.0, 105.0, 105.0, 105.0],
        130,
    );
    // Green connector between the bypass and the trunk.
    let green_s = line("green-s", "green", "south", &["G", "J"], &[150.0], 90);

    let lines = vec![
        reversed(&red_e, "red-w", "west"),
        red_e,
        reversed(&blue_e, "blue-w", "west"),
        blue_e,
        reversed(&green_s, "green-n", "north"),
        green_s,
    ];

    let network = Network::new(stations, lines).expect("bundled network is valid");
    let horizon = Window::new(17.0 * 3600.0, 20.0 * 3600.0);
    let timetable = build_timetable(&network, horizon.start_s, horizon.end_s, 300.0, 30.0);

    // Evening-peak shape over twelve 15-minute intervals (17:00-20:00).
    let shape = [0.5, 0.6, 0.8, 0.9, 1.0, 1.0, 0.95, 0.85, 0.6, 0.4, 0.3, 0.2];
    let mut rates = BTreeMap::new();
    let mut add = |o: &str, d: &str, peak_per_hour: Real| {
        rates.insert(
            (o.to_string(), d.to_string()),
            shape.iter().map(|s| s * peak_per_hour).collect::<Vec<Real>>(),
        );
    };
    // Hub-to-hub pairs with parallel routes carry the signal.
    add("B", "D", 900.0);
    add("A", "D", 640.0);
    add("A", "E", 520.0);
    add("F", "K", 320.0);
    add("G", "C", 280.0);
    add("B", "E", 420.0);
    add("D", "B", 300.0);
    add("E", "A", 260.0);
    // Background single-route pairs.
    add("A", "B", 240.0);
    add("C", "K", 180.0);
    add("F", "D", 260.0);
    add("H", "B", 220.0);
    add("G", "E", 240.0);
    add("J", "A", 160.0);

    let profile = DemandProfile {
        horizon,
        warm_up_end_s: 18.0 * 3600.0,
        cool_down_start_s: 19.0 * 3600.0,
        interval_s: 900.0,
        rates,
    };

    let target_ods = [("B", "D"), ("A", "D"), ("A", "E"), ("F", "K"), ("G", "C"), ("B", "E")]
        .iter()
        .map(|(o, d)| (o.to_string(), d.to_string()))
        .collect();

    BundledScenario {
        network,
        timetable,
        profile,
        target_ods,
    }
}

/// Parameters for random scenario generation (property tests and oracles).
#[derive(Debug, Clone)]
pub struct RandomScenarioParams {
    pub max_stations: usize,
    pub max_routes: usize,
    pub max_passengers: usize,
    pub horizon: Window,
    pub min_capacity: u32,
    pub max_capacity: u32,
}

impl Default for RandomScenarioParams {
    fn default() -> Self {
        RandomScenarioParams {
            max_stations: 8,
            max_routes: 3,
            max_passengers: 120,
            horizon: Window::new(0.0, 7200.0),
            min_capacity: 2,
            max_capacity: 40,
        }
    }
}

/// A randomly generated small scenario.
#[derive(Debug, Clone)]
pub struct RandomScenario {
    pub network: Network,
    pub timetable: Timetable,
    pub demand: Vec<TapIn>,
    pub config: SimConfig,
}

/// Generates a random connected-ish scenario: random simple routes over a
/// random station set (both directions), periodic trips, and random OD
/// demand. Unreachable ODs are left to the drop-and-log policy.
pub fn random_scenario(seed: u64, params: &RandomScenarioParams) -> RandomScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_stations = rng.random_range(4..=params.max_stations.max(4));
    let stations: Vec<StationDef> = (0..n_stations)
        .map(|i| {
            station(
                &format!("S{i}"),
                &format!("S{i}"),
                (i as Real) * 1000.0 + rng.random_range(0.0..400.0),
                rng.random_range(-1500.0..1500.0),
                rng.random_range(40.0..250.0),
                rng.random_range(40.0..250.0),
            )
        })
        .collect();

    let n_routes = rng.random_range(2..=params.max_routes.max(2));
    let mut lines = Vec::new();
    for r in 0..n_routes {
        // A simple route visits a random subset of stations in a random
        // order, 2..=n stops.
        let mut ids: Vec<usize> = (0..n_stations).collect();
        for i in (1..ids.len()).rev() {
            let j = rng.random_range(0..=i);
            ids.swap(i, j);
        }
        let len = rng.random_range(2..=n_stations);
        let stops: Vec<String> = ids[..len].iter().map(|i| format!("S{i}")).collect();
        let stop_refs: Vec<&str> = stops.iter().map(String::as_str).collect();
        let runs: Vec<Real> = (0..len - 1)
            .map(|_| rng.random_range(60.0..240.0f64).round())
            .collect();
        let capacity = rng.random_range(params.min_capacity..=params.max_capacity);
        let fwd = line(&format!("r{r}-f"), &format!("r{r}"), "fwd", &stop_refs, &runs, capacity);
        lines.push(reversed(&fwd, &format!("r{r}-b"), "bwd"));
        lines.push(fwd);
    }
    let network = Network::new(stations, lines).expect("random network is valid");

    let headway = rng.random_range(240.0..900.0f64).round();
    let dwell = rng.random_range(10.0..45.0f64).round();
    let span = params.horizon.len_s();
    let timetable = build_timetable(
        &network,
        params.horizon.start_s + 60.0,
        params.horizon.start_s + span * 0.8,
        headway,
        dwell,
    );

    let n_passengers = rng.random_range(0..=params.max_passengers);
    let mut demand = Vec::with_capacity(n_passengers);
    for id in 0..n_passengers {
        let o = rng.random_range(0..n_stations);
        let mut d = rng.random_range(0..n_stations);
        if d == o {
            d = (d + 1) % n_stations;
        }
        demand.push(TapIn {
            id: id as u64 + 1,
            origin: network.station_id(&format!("S{o}")).unwrap(),
            destination: network.station_id(&format!("S{d}")).unwrap(),
            tap_in_s: rng.random_range(params.horizon.start_s as i64..(params.horizon.start_s + span * 0.7) as i64)
                as Real,
        });
    }

    let mut config = SimConfig::new(seed ^ 0x5eed, params.horizon);
    config.default_capacity = rng.random_range(params.min_capacity..=params.max_capacity);
    RandomScenario {
        network,
        timetable,
        demand,
        config,
    }
}

/// Choice-set configuration matching the dataset metadata.
pub fn choice_config_from(meta: &DatasetMetadata) -> ChoiceSetConfig {
    ChoiceSetConfig {
        k: meta.k_paths,
        detour_cap: meta.detour_cap,
        gamma: meta.gamma,
        walk: crate::network::WalkParams {
            speed_mps: meta.walk_speed_mps,
        },
        ..ChoiceSetConfig::default()
    }
}
