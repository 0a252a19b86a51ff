//! Event-based transit simulation.
//!
//! The event list (train arrivals and departures) is derived from the
//! timetable and processed in time order. Before each event, passengers who
//! tapped in since the previous event are assigned to paths and queued at
//! their first platform. Arrivals offload passengers (exit or transfer);
//! departures board the queue FCFS up to the train capacity.

pub mod output;

pub use output::{
    extract_indicators, BoardingSample, Indicators, LegEvent, LoadSample, PassengerRecord,
    PassengerStatus, PendingWait, QueueSample, SimOutput,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::{self, PathChoice, PathProbabilities};
use crate::error::{Error, Result};
use crate::network::{ChoiceSet, LineId, Network, StationId, Timetable, WalkParams};
use crate::Real;

/// Half-open time window in seconds from midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: Real,
    pub end_s: Real,
}

impl Window {
    pub fn new(start_s: Real, end_s: Real) -> Self {
        Window { start_s, end_s }
    }

    pub fn contains(&self, t: Real) -> bool {
        t >= self.start_s && t < self.end_s
    }

    pub fn len_s(&self) -> Real {
        self.end_s - self.start_s
    }
}

/// What to do with passengers whose OD has no path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnreachablePolicy {
    /// Drop the passenger and record the id.
    DropAndLog,
    /// Abort the run with an error.
    Abort,
}

/// Optional lognormal multiplier on walk durations. With `None`, walks are
/// the deterministic distance / speed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkNoise {
    /// Location of the underlying normal.
    pub mu: Real,
    /// Scale of the underlying normal.
    pub sigma: Real,
}

impl WalkNoise {
    /// Unit-mean factor with the given coefficient of variation.
    pub fn with_cv(cv: Real) -> Self {
        let sigma2 = (1.0 + cv * cv).ln();
        WalkNoise {
            mu: -sigma2 / 2.0,
            sigma: sigma2.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Capacity for lines that do not declare one.
    pub default_capacity: u32,
    /// When set, overrides every line capacity (stress and oracle runs).
    #[serde(default)]
    pub capacity_override: Option<u32>,
    pub walk: WalkParams,
    /// Reporting window; demand must tap in inside it.
    pub horizon: Window,
    /// Output interval length in seconds.
    pub tau_s: Real,
    pub unreachable: UnreachablePolicy,
    #[serde(default)]
    pub walk_noise: Option<WalkNoise>,
}

impl SimConfig {
    pub fn new(seed: u64, horizon: Window) -> Self {
        SimConfig {
            seed,
            default_capacity: 200,
            capacity_override: None,
            walk: WalkParams::default(),
            horizon,
            tau_s: 900.0,
            unreachable: UnreachablePolicy::DropAndLog,
            walk_noise: None,
        }
    }

    fn capacity_for(&self, line_capacity: Option<u32>) -> u32 {
        self.capacity_override
            .unwrap_or_else(|| line_capacity.unwrap_or(self.default_capacity))
    }
}

/// One tap-in record driving the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapIn {
    pub id: u64,
    pub origin: StationId,
    pub destination: StationId,
    pub tap_in_s: Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Arrival,
    Departure,
}

/// Timestamped train event at a platform.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_s: Real,
    pub kind: EventKind,
    /// Index into `timetable.trips`.
    pub trip: usize,
    /// Index into the trip's stop list.
    pub stop: usize,
}

/// Builds the sorted event list: one arrival and one departure per
/// (trip, station). Ties are ordered arrival before departure, then by
/// train id.
pub fn build_event_list(timetable: &Timetable) -> Vec<Event> {
    let mut events = Vec::with_capacity(timetable.trips.len() * 8);
    for (t, trip) in timetable.trips.iter().enumerate() {
        for (s, stop) in trip.stops.iter().enumerate() {
            events.push(Event {
                time_s: stop.arrival_s,
                kind: EventKind::Arrival,
                trip: t,
                stop: s,
            });
            events.push(Event {
                time_s: stop.departure_s,
                kind: EventKind::Departure,
                trip: t,
                stop: s,
            });
        }
    }
    events.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| {
                timetable.trips[a.trip]
                    .train_id
                    .cmp(&timetable.trips[b.trip].train_id)
            })
            .then_with(|| a.stop.cmp(&b.stop))
    });
    events
}

/// Choice sets for every OD pair a run needs, in a stable order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChoiceSets {
    sets: Vec<ChoiceSet>,
    by_od: BTreeMap<(StationId, StationId), usize>,
}

impl ChoiceSets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, set: ChoiceSet) {
        let od = set.od;
        if let Some(&i) = self.by_od.get(&od) {
            self.sets[i] = set;
        } else {
            self.by_od.insert(od, self.sets.len());
            self.sets.push(set);
        }
    }

    pub fn get(&self, od: (StationId, StationId)) -> Option<&ChoiceSet> {
        self.by_od.get(&od).map(|&i| &self.sets[i])
    }

    pub fn index_of(&self, od: (StationId, StationId)) -> Option<usize> {
        self.by_od.get(&od).copied()
    }

    pub fn by_index(&self, i: usize) -> &ChoiceSet {
        &self.sets[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChoiceSet> {
        self.sets.iter()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Builds choice sets for the OD pairs of the given demand. Unreachable
    /// ODs are skipped (the run-time policy decides what happens to their
    /// passengers).
    pub fn for_demand(
        network: &Network,
        demand: &[TapIn],
        cfg: &crate::network::ChoiceSetConfig,
    ) -> Result<Self> {
        let mut sets = ChoiceSets::new();
        let ods: BTreeSet<(StationId, StationId)> =
            demand.iter().map(|t| (t.origin, t.destination)).collect();
        for od in ods {
            match crate::network::enumerate_choice_set(network, od, cfg) {
                Ok(set) => sets.insert(set),
                Err(Error::NoPath { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(sets)
    }
}

/// Where a train currently is.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TrainLocation {
    NotStarted,
    AtPlatform(StationId),
    Between(StationId, StationId),
    Finished,
}

struct TrainState {
    capacity: u32,
    load: u32,
    /// Onboard passengers grouped by alighting station, in boarding order.
    onboard: BTreeMap<StationId, Vec<usize>>,
    location: TrainLocation,
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    arrival_s: Real,
    id: u64,
    passenger: usize,
}

/// Platform queue ordered by (platform arrival time, passenger id). Earlier
/// left-behind passengers keep their position because any newly queued
/// passenger arrives strictly later.
#[derive(Default)]
struct PlatformQueue {
    entries: VecDeque<QueueEntry>,
}

impl PlatformQueue {
    fn insert(&mut self, entry: QueueEntry) {
        let pos = self.entries.partition_point(|e| {
            e.arrival_s < entry.arrival_s
                || (e.arrival_s == entry.arrival_s && e.id < entry.id)
        });
        self.entries.insert(pos, entry);
    }

    fn len(&self) -> usize {
        self.entries.len()
    }
}

struct PassengerState {
    tap: TapIn,
    /// Index into the run's choice sets and the path within it.
    choice_set: usize,
    path: usize,
    current_leg: usize,
    platform_arrival_s: Real,
    times_left_behind: u32,
    tap_out_s: Option<Real>,
    status: PassengerStatus,
    leg_events: Vec<LegEvent>,
    /// Lazily created stream for this passenger's walk-noise draws.
    walk_rng: Option<ChaCha8Rng>,
}

/// Derives an independent per-passenger random stream from the run seed, so
/// the same passenger draws the same variates regardless of evaluation
/// order or parameter vector (common random numbers).
fn passenger_stream(seed: u64, passenger_id: u64, tag: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&passenger_id.to_le_bytes());
    bytes[16..24].copy_from_slice(&tag.to_le_bytes());
    bytes[24..32].copy_from_slice(&0x7452_414e_5349_4d21u64.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

const STREAM_PATH: u64 = 1;
const STREAM_WALK: u64 = 2;

struct SimState<'a> {
    network: &'a Network,
    timetable: &'a Timetable,
    choice_sets: &'a ChoiceSets,
    config: &'a SimConfig,
    probabilities: Vec<Option<PathProbabilities>>,
    shortest: Vec<usize>,
    demand: &'a [TapIn],
    next_demand: usize,
    trains: Vec<TrainState>,
    queues: Vec<PlatformQueue>,
    platform_index: BTreeMap<(StationId, LineId), usize>,
    platforms: Vec<(StationId, LineId)>,
    passengers: Vec<PassengerState>,
    loads: Vec<LoadSample>,
    queue_samples: Vec<QueueSample>,
    boardings: Vec<BoardingSample>,
    dropped: Vec<u64>,
    last_event_s: Real,
}

impl<'a> SimState<'a> {
    fn new(
        network: &'a Network,
        timetable: &'a Timetable,
        choice_sets: &'a ChoiceSets,
        choice: &PathChoice,
        demand: &'a [TapIn],
        config: &'a SimConfig,
    ) -> Result<Self> {
        let mut probabilities = Vec::with_capacity(choice_sets.len());
        let mut shortest = Vec::with_capacity(choice_sets.len());
        for set in choice_sets.iter() {
            shortest.push(choice::shortest_path_index(set));
            match choice {
                PathChoice::Params(beta) => {
                    probabilities.push(Some(choice::choice_probabilities(set, beta)?))
                }
                PathChoice::ShortestPath => probabilities.push(None),
            }
        }

        let trains = timetable
            .trips
            .iter()
            .map(|trip| TrainState {
                capacity: config.capacity_for(network.line(trip.line).capacity),
                load: 0,
                onboard: BTreeMap::new(),
                location: TrainLocation::NotStarted,
            })
            .collect();

        let mut platform_index = BTreeMap::new();
        let mut platforms = Vec::new();
        for (sid, _) in network.stations() {
            for &lid in network.lines_at(sid) {
                platform_index.insert((sid, lid), platforms.len());
                platforms.push((sid, lid));
            }
        }
        let queues = (0..platforms.len()).map(|_| PlatformQueue::default()).collect();

        Ok(SimState {
            network,
            timetable,
            choice_sets,
            config,
            probabilities,
            shortest,
            demand,
            next_demand: 0,
            trains,
            queues,
            platform_index,
            platforms,
            passengers: Vec::with_capacity(demand.len()),
            loads: Vec::new(),
            queue_samples: Vec::new(),
            boardings: Vec::new(),
            dropped: Vec::new(),
            last_event_s: Real::NEG_INFINITY,
        })
    }

    fn walk_factor(&mut self, passenger: usize) -> Real {
        let Some(noise) = self.config.walk_noise else {
            return 1.0;
        };
        let seed = self.config.seed;
        let p = &mut self.passengers[passenger];
        let id = p.tap.id;
        let rng = p
            .walk_rng
            .get_or_insert_with(|| passenger_stream(seed, id, STREAM_WALK));
        let lognormal = rand_distr::LogNormal::new(noise.mu, noise.sigma)
            .expect("walk-noise sigma validated at config time");
        rand_distr::Distribution::sample(&lognormal, rng)
    }

    fn platform(&self, station: StationId, line: LineId) -> Result<usize> {
        self.platform_index
            .get(&(station, line))
            .copied()
            .ok_or_else(|| {
                Error::InconsistentState(format!(
                    "no platform for station {} line {}",
                    self.network.station_code(station),
                    self.network.line_code(line)
                ))
            })
    }

    fn enqueue(
        &mut self,
        station: StationId,
        line: LineId,
        passenger: usize,
        arrival_s: Real,
        touched: &mut BTreeSet<usize>,
    ) -> Result<()> {
        let platform = self.platform(station, line)?;
        self.passengers[passenger].platform_arrival_s = arrival_s;
        self.passengers[passenger].status = PassengerStatus::Queued;
        let id = self.passengers[passenger].tap.id;
        self.queues[platform].insert(QueueEntry { arrival_s, id, passenger });
        touched.insert(platform);
        Ok(())
    }

    /// Assigns and enqueues every passenger with `tap_in <= time`.
    fn admit_until(&mut self, time: Real, touched: &mut BTreeSet<usize>) -> Result<()> {
        while self.next_demand < self.demand.len()
            && self.demand[self.next_demand].tap_in_s <= time
        {
            let tap = self.demand[self.next_demand];
            self.next_demand += 1;
            let idx = self.passengers.len();

            let Some(set_idx) = self.choice_sets.index_of((tap.origin, tap.destination)) else {
                match self.config.unreachable {
                    UnreachablePolicy::Abort => {
                        return Err(Error::UnreachableOd {
                            passenger: tap.id,
                            origin: self.network.station_code(tap.origin).to_string(),
                            destination: self.network.station_code(tap.destination).to_string(),
                        })
                    }
                    UnreachablePolicy::DropAndLog => {
                        self.dropped.push(tap.id);
                        self.passengers.push(PassengerState {
                            tap,
                            choice_set: usize::MAX,
                            path: 0,
                            current_leg: 0,
                            platform_arrival_s: tap.tap_in_s,
                            times_left_behind: 0,
                            tap_out_s: None,
                            status: PassengerStatus::Dropped,
                            leg_events: Vec::new(),
                            walk_rng: None,
                        });
                        continue;
                    }
                }
            };

            let set = self.choice_sets.by_index(set_idx);
            let path_idx = match &self.probabilities[set_idx] {
                Some(probs) => {
                    let u: Real =
                        passenger_stream(self.config.seed, tap.id, STREAM_PATH).random();
                    choice::sample_index_at(&probs.probs, u)
                }
                None => self.shortest[set_idx],
            };
            let first = set.paths[path_idx].legs[0];
            let route = &self.network.line(first.line).route;
            let access_s = self
                .config
                .walk
                .time_s(self.network.gate_distance_m(tap.origin, route));

            self.passengers.push(PassengerState {
                tap,
                choice_set: set_idx,
                path: path_idx,
                current_leg: 0,
                platform_arrival_s: 0.0,
                times_left_behind: 0,
                tap_out_s: None,
                status: PassengerStatus::Queued,
                leg_events: Vec::new(),
                walk_rng: None,
            });
            let access_s = access_s * self.walk_factor(idx);
            self.enqueue(first.board, first.line, idx, tap.tap_in_s + access_s, touched)?;
        }
        Ok(())
    }

    fn process_arrival(&mut self, event: &Event, touched: &mut BTreeSet<usize>) -> Result<()> {
        let trip = &self.timetable.trips[event.trip];
        let station = trip.stops[event.stop].station;

        match self.trains[event.trip].location {
            TrainLocation::NotStarted | TrainLocation::Between(_, _) => {}
            other => {
                return Err(Error::InconsistentState(format!(
                    "train {} arriving at {} from state {:?}",
                    trip.train_id,
                    self.network.station_code(station),
                    other
                )))
            }
        }

        if let Some(group) = self.trains[event.trip].onboard.remove(&station) {
            let n = group.len() as u32;
            for pid in group {
                let (set_idx, path_idx, leg_idx) = {
                    let p = &self.passengers[pid];
                    (p.choice_set, p.path, p.current_leg)
                };
                let path = &self.choice_sets.by_index(set_idx).paths[path_idx];
                let leg = path.legs[leg_idx];
                if leg.alight != station {
                    return Err(Error::InconsistentState(format!(
                        "passenger {} offloaded at wrong station",
                        self.passengers[pid].tap.id
                    )));
                }
                if leg_idx + 1 == path.legs.len() {
                    // Final leg: exit through the gates.
                    let route = &self.network.line(leg.line).route;
                    let egress_s = self
                        .config
                        .walk
                        .time_s(self.network.gate_distance_m(station, route))
                        * self.walk_factor(pid);
                    let p = &mut self.passengers[pid];
                    p.tap_out_s = Some(event.time_s + egress_s);
                    p.status = PassengerStatus::Exited;
                } else {
                    let next = path.legs[leg_idx + 1];
                    let transfer_s = self
                        .config
                        .walk
                        .time_s(self.network.transfer_distance_m(
                            station,
                            &self.network.line(leg.line).route,
                            &self.network.line(next.line).route,
                        ))
                        * self.walk_factor(pid);
                    self.passengers[pid].current_leg = leg_idx + 1;
                    self.enqueue(next.board, next.line, pid, event.time_s + transfer_s, touched)?;
                }
            }
            self.trains[event.trip].load -= n;
        }
        self.trains[event.trip].location = TrainLocation::AtPlatform(station);
        Ok(())
    }

    fn process_departure(&mut self, event: &Event, touched: &mut BTreeSet<usize>) -> Result<()> {
        let trip = &self.timetable.trips[event.trip];
        let station = trip.stops[event.stop].station;
        let line = trip.line;
        let platform = self.platform(station, line)?;

        match self.trains[event.trip].location {
            TrainLocation::AtPlatform(s) if s == station => {}
            other => {
                return Err(Error::InconsistentState(format!(
                    "train {} departing {} from state {:?}",
                    trip.train_id,
                    self.network.station_code(station),
                    other
                )))
            }
        }

        let remaining = &trip.stops[event.stop + 1..];
        let mut boarded = 0u32;
        let mut denied = 0u32;
        let eligible = self.queues[platform]
            .entries
            .partition_point(|e| e.arrival_s <= event.time_s);
        let mut kept = Vec::new();
        for i in 0..eligible {
            let entry = self.queues[platform].entries[i];
            let pid = entry.passenger;
            if self.trains[event.trip].load >= self.trains[event.trip].capacity {
                self.passengers[pid].times_left_behind += 1;
                denied += 1;
                kept.push(entry);
                continue;
            }
            let p = &self.passengers[pid];
            let alight =
                self.choice_sets.by_index(p.choice_set).paths[p.path].legs[p.current_leg].alight;
            // A trip that does not serve the alighting stop (short turn)
            // leaves the passenger waiting for one that does.
            if !remaining.iter().any(|s| s.station == alight) {
                kept.push(entry);
                continue;
            }
            self.trains[event.trip]
                .onboard
                .entry(alight)
                .or_default()
                .push(pid);
            self.trains[event.trip].load += 1;
            boarded += 1;
            let p = &mut self.passengers[pid];
            p.status = PassengerStatus::Onboard;
            p.leg_events.push(LegEvent {
                board: station,
                line,
                platform_arrival_s: entry.arrival_s,
                board_time_s: event.time_s,
                trip: event.trip,
            });
        }
        // Keep ineligible and left-behind entries, in arrival order.
        let tail: Vec<QueueEntry> = self.queues[platform].entries.drain(eligible..).collect();
        self.queues[platform].entries = kept.into_iter().chain(tail).collect();
        touched.insert(platform);

        if boarded > 0 || denied > 0 {
            self.boardings.push(BoardingSample {
                station,
                line,
                time_s: event.time_s,
                boarded,
                denied,
            });
        }
        if let Some(next) = remaining.first() {
            self.loads.push(LoadSample {
                trip: event.trip,
                from: station,
                to: next.station,
                departure_s: event.time_s,
                load: self.trains[event.trip].load,
                capacity: self.trains[event.trip].capacity,
            });
            self.trains[event.trip].location = TrainLocation::Between(station, next.station);
        } else {
            self.trains[event.trip].location = TrainLocation::Finished;
        }
        Ok(())
    }

    fn step(&mut self, event: &Event) -> Result<()> {
        if event.time_s < self.last_event_s {
            return Err(Error::InconsistentState(
                "event list is not time-ordered".to_string(),
            ));
        }
        self.last_event_s = event.time_s;
        let mut touched = BTreeSet::new();
        self.admit_until(event.time_s, &mut touched)?;
        match event.kind {
            EventKind::Arrival => self.process_arrival(event, &mut touched)?,
            EventKind::Departure => self.process_departure(event, &mut touched)?,
        }
        for platform in touched {
            let (station, line) = self.platforms[platform];
            self.queue_samples.push(QueueSample {
                station,
                line,
                time_s: event.time_s,
                len: self.queues[platform].len() as u32,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SimOutput> {
        // Passengers tapping in after the final event still enter the
        // books: assign and queue them so conservation holds.
        let mut touched = BTreeSet::new();
        self.admit_until(Real::INFINITY, &mut touched)?;

        let mut records: Vec<PassengerRecord> = self
            .passengers
            .into_iter()
            .map(|p| {
                let path_legs = if p.status == PassengerStatus::Dropped {
                    Vec::new()
                } else {
                    self.choice_sets.by_index(p.choice_set).paths[p.path].legs.clone()
                };
                let pending = if p.status == PassengerStatus::Queued {
                    path_legs.get(p.current_leg).map(|leg| PendingWait {
                        station: leg.board,
                        line: leg.line,
                        platform_arrival_s: p.platform_arrival_s,
                    })
                } else {
                    None
                };
                PassengerRecord {
                    id: p.tap.id,
                    origin: p.tap.origin,
                    destination: p.tap.destination,
                    tap_in_s: p.tap.tap_in_s,
                    tap_out_s: p.tap_out_s,
                    choice_set: p.choice_set,
                    path: p.path,
                    legs: path_legs,
                    times_left_behind: p.times_left_behind,
                    status: p.status,
                    leg_events: p.leg_events,
                    pending,
                }
            })
            .collect();
        records.sort_by_key(|r| r.id);

        Ok(SimOutput {
            records,
            loads: self.loads,
            queues: self.queue_samples,
            boardings: self.boardings,
            dropped: self.dropped,
        })
    }
}

/// Runs the full event loop and returns the simulation output. Fully
/// deterministic for a given seed and inputs.
pub fn run_simulation(
    network: &Network,
    timetable: &Timetable,
    choice_sets: &ChoiceSets,
    choice: &PathChoice,
    demand: &[TapIn],
    config: &SimConfig,
) -> Result<SimOutput> {
    for tap in demand {
        if !(tap.tap_in_s >= config.horizon.start_s && tap.tap_in_s <= config.horizon.end_s) {
            return Err(Error::Config(format!(
                "passenger {} taps in outside the horizon",
                tap.id
            )));
        }
    }
    let mut demand_sorted = demand.to_vec();
    demand_sorted.sort_by(|a, b| a.tap_in_s.total_cmp(&b.tap_in_s).then(a.id.cmp(&b.id)));

    let events = build_event_list(timetable);
    let mut state = SimState::new(network, timetable, choice_sets, choice, &demand_sorted, config)?;
    for event in &events {
        state.step(event)?;
    }
    state.finish()
}
