//! Transit network model: stations, lines, timetables, and walk geometry.
//!
//! A physical line with two service directions is represented as two
//! [`Line`] entries sharing a `route` name. Walk distances (gate-to-platform
//! and platform-to-platform transfers) live on the stations; walking *speed*
//! is a run-time parameter ([`WalkParams`]).

mod choice_set;

pub use choice_set::{
    commonality_factor, commonality_factors, enumerate_choice_set, path_attributes,
    path_station_list, ChoiceSet, ChoiceSetConfig, Leg, Path, PathAttributes,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Index of a station within its [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationId(pub u32);

impl StationId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Index of a line (one service direction) within its [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineId(pub u32);

impl LineId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Station definition as it appears in a network file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationDef {
    pub id: String,
    #[serde(default)]
    pub name: String,
    /// Planar coordinates in meters, used for map distances.
    #[serde(default)]
    pub x_m: Option<Real>,
    #[serde(default)]
    pub y_m: Option<Real>,
    /// Default gate-to-platform walking distance.
    pub gate_distance_m: Real,
    /// Per-route overrides of the gate distance, keyed by route name.
    #[serde(default)]
    pub gate_overrides: BTreeMap<String, Real>,
    /// Default platform-to-platform transfer distance at this station.
    #[serde(default)]
    pub transfer_distance_m: Real,
    /// Per route-pair overrides, keyed by `"routeA|routeB"` with the names
    /// in lexicographic order.
    #[serde(default)]
    pub transfer_overrides: BTreeMap<String, Real>,
}

/// Line definition as it appears in a network file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineDef {
    pub id: String,
    /// Physical route this direction belongs to (e.g. `"red"`).
    pub route: String,
    pub direction: String,
    pub stops: Vec<String>,
    /// Seconds per consecutive station pair; `stops.len() - 1` entries.
    pub run_times_s: Vec<Real>,
    /// Optional physical segment lengths, fallback for map distances when
    /// station coordinates are absent.
    #[serde(default)]
    pub segment_lengths_m: Option<Vec<Real>>,
    /// Train capacity on this line; the simulation config supplies a
    /// default when absent.
    #[serde(default)]
    pub capacity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub code: String,
    pub name: String,
    pub coords: Option<(Real, Real)>,
    gate_default_m: Real,
    gate_overrides: BTreeMap<String, Real>,
    transfer_default_m: Real,
    transfer_overrides: BTreeMap<(String, String), Real>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub code: String,
    pub route: String,
    pub direction: String,
    pub stops: Vec<StationId>,
    pub run_times_s: Vec<Real>,
    pub segment_lengths_m: Option<Vec<Real>>,
    pub capacity: Option<u32>,
}

impl Line {
    /// Position of `station` in the stop sequence.
    pub fn stop_position(&self, station: StationId) -> Option<usize> {
        self.stops.iter().position(|&s| s == station)
    }
}

/// Immutable network shared read-only by all simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    stations: Vec<Station>,
    lines: Vec<Line>,
    station_by_code: BTreeMap<String, StationId>,
    line_by_code: BTreeMap<String, LineId>,
    /// Lines serving each station, in line-id order.
    lines_at: Vec<Vec<LineId>>,
}

impl Network {
    pub fn new(station_defs: Vec<StationDef>, line_defs: Vec<LineDef>) -> Result<Network> {
        let mut stations = Vec::with_capacity(station_defs.len());
        let mut station_by_code = BTreeMap::new();
        for (i, def) in station_defs.into_iter().enumerate() {
            if def.gate_distance_m < 0.0 || def.transfer_distance_m < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "station {} has a negative walk distance",
                    def.id
                )));
            }
            if def
                .gate_overrides
                .values()
                .chain(def.transfer_overrides.values())
                .any(|&d| d < 0.0)
            {
                return Err(Error::InvalidNetwork(format!(
                    "station {} has a negative walk distance override",
                    def.id
                )));
            }
            if station_by_code
                .insert(def.id.clone(), StationId(i as u32))
                .is_some()
            {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate station id {}",
                    def.id
                )));
            }
            let coords = match (def.x_m, def.y_m) {
                (Some(x), Some(y)) => Some((x, y)),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidNetwork(format!(
                        "station {} has only one coordinate",
                        def.id
                    )))
                }
            };
            let mut transfer_overrides = BTreeMap::new();
            for (key, dist) in def.transfer_overrides {
                let mut parts = key.splitn(2, '|');
                let a = parts.next().unwrap_or_default().to_string();
                let b = parts.next().map(str::to_string).ok_or_else(|| {
                    Error::InvalidNetwork(format!(
                        "station {}: transfer override key {key:?} is not \"routeA|routeB\"",
                        def.id
                    ))
                })?;
                let pair = if a <= b { (a, b) } else { (b, a) };
                transfer_overrides.insert(pair, dist);
            }
            stations.push(Station {
                code: def.id,
                name: def.name,
                coords,
                gate_default_m: def.gate_distance_m,
                gate_overrides: def.gate_overrides,
                transfer_default_m: def.transfer_distance_m,
                transfer_overrides,
            });
        }

        let mut lines = Vec::with_capacity(line_defs.len());
        let mut line_by_code = BTreeMap::new();
        let mut lines_at = vec![Vec::new(); stations.len()];
        for (i, def) in line_defs.into_iter().enumerate() {
            let id = LineId(i as u32);
            if line_by_code.insert(def.id.clone(), id).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate line id {}", def.id)));
            }
            if def.stops.len() < 2 {
                return Err(Error::InvalidNetwork(format!(
                    "line {} has fewer than 2 stops",
                    def.id
                )));
            }
            if def.run_times_s.len() != def.stops.len() - 1 {
                return Err(Error::InvalidNetwork(format!(
                    "line {}: {} stops need {} run times, got {}",
                    def.id,
                    def.stops.len(),
                    def.stops.len() - 1,
                    def.run_times_s.len()
                )));
            }
            if def.run_times_s.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::InvalidNetwork(format!(
                    "line {} has a non-positive run time",
                    def.id
                )));
            }
            if let Some(lengths) = &def.segment_lengths_m {
                if lengths.len() != def.run_times_s.len() {
                    return Err(Error::InvalidNetwork(format!(
                        "line {}: segment length count differs from segment count",
                        def.id
                    )));
                }
            }
            let mut stops = Vec::with_capacity(def.stops.len());
            for (k, code) in def.stops.iter().enumerate() {
                let sid = *station_by_code.get(code).ok_or_else(|| {
                    Error::InvalidNetwork(format!("line {} references unknown station {code}", def.id))
                })?;
                if k > 0 && stops[k - 1] == sid {
                    return Err(Error::InvalidNetwork(format!(
                        "line {} repeats station {code} consecutively",
                        def.id
                    )));
                }
                stops.push(sid);
            }
            for &sid in &stops {
                if !lines_at[sid.idx()].contains(&id) {
                    lines_at[sid.idx()].push(id);
                }
            }
            lines.push(Line {
                code: def.id,
                route: def.route,
                direction: def.direction,
                stops,
                run_times_s: def.run_times_s,
                segment_lengths_m: def.segment_lengths_m,
                capacity: def.capacity,
            });
        }

        Ok(Network {
            stations,
            lines,
            station_by_code,
            line_by_code,
            lines_at,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn station(&self, id: StationId) -> &Station {
        &self.stations[id.idx()]
    }

    pub fn line(&self, id: LineId) -> &Line {
        &self.lines[id.idx()]
    }

    pub fn station_id(&self, code: &str) -> Option<StationId> {
        self.station_by_code.get(code).copied()
    }

    pub fn line_id(&self, code: &str) -> Option<LineId> {
        self.line_by_code.get(code).copied()
    }

    pub fn station_code(&self, id: StationId) -> &str {
        &self.stations[id.idx()].code
    }

    pub fn line_code(&self, id: LineId) -> &str {
        &self.lines[id.idx()].code
    }

    pub fn stations(&self) -> impl Iterator<Item = (StationId, &Station)> {
        self.stations
            .iter()
            .enumerate()
            .map(|(i, s)| (StationId(i as u32), s))
    }

    pub fn lines(&self) -> impl Iterator<Item = (LineId, &Line)> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, l)| (LineId(i as u32), l))
    }

    /// Lines serving a station.
    pub fn lines_at(&self, station: StationId) -> &[LineId] {
        &self.lines_at[station.idx()]
    }

    /// Gate-to-platform walk distance for a given route at a station.
    pub fn gate_distance_m(&self, station: StationId, route: &str) -> Real {
        let s = &self.stations[station.idx()];
        s.gate_overrides
            .get(route)
            .copied()
            .unwrap_or(s.gate_default_m)
    }

    /// Platform-to-platform transfer walk distance between two routes.
    pub fn transfer_distance_m(&self, station: StationId, route_a: &str, route_b: &str) -> Real {
        let s = &self.stations[station.idx()];
        let pair = if route_a <= route_b {
            (route_a.to_string(), route_b.to_string())
        } else {
            (route_b.to_string(), route_a.to_string())
        };
        s.transfer_overrides
            .get(&pair)
            .copied()
            .unwrap_or(s.transfer_default_m)
    }

    /// Straight-line distance between two stations, when both have coordinates.
    pub fn straight_line_m(&self, a: StationId, b: StationId) -> Option<Real> {
        let ca = self.stations[a.idx()].coords?;
        let cb = self.stations[b.idx()].coords?;
        Some(((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt())
    }

    /// Sum of run times along `line` from `from` to `to` (must appear in
    /// that order in the stop sequence).
    pub fn run_time_between(&self, line: LineId, from: StationId, to: StationId) -> Result<Real> {
        let l = &self.lines[line.idx()];
        let missing = || Error::MissingRunTime {
            line: l.code.clone(),
            from: self.station_code(from).to_string(),
            to: self.station_code(to).to_string(),
        };
        let i = l.stop_position(from).ok_or_else(missing)?;
        let j = l.stop_position(to).ok_or_else(missing)?;
        if i >= j {
            return Err(missing());
        }
        Ok(l.run_times_s[i..j].iter().sum())
    }

    /// Round-trip to the serialized definition form.
    pub fn to_defs(&self) -> (Vec<StationDef>, Vec<LineDef>) {
        let stations = self
            .stations
            .iter()
            .map(|s| StationDef {
                id: s.code.clone(),
                name: s.name.clone(),
                x_m: s.coords.map(|c| c.0),
                y_m: s.coords.map(|c| c.1),
                gate_distance_m: s.gate_default_m,
                gate_overrides: s.gate_overrides.clone(),
                transfer_distance_m: s.transfer_default_m,
                transfer_overrides: s
                    .transfer_overrides
                    .iter()
                    .map(|((a, b), d)| (format!("{a}|{b}"), *d))
                    .collect(),
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| LineDef {
                id: l.code.clone(),
                route: l.route.clone(),
                direction: l.direction.clone(),
                stops: l
                    .stops
                    .iter()
                    .map(|&s| self.station_code(s).to_string())
                    .collect(),
                run_times_s: l.run_times_s.clone(),
                segment_lengths_m: l.segment_lengths_m.clone(),
                capacity: l.capacity,
            })
            .collect();
        (stations, lines)
    }
}

/// Walking-speed parameters (walk distances live on the network).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub speed_mps: Real,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams { speed_mps: 1.5 }
    }
}

impl WalkParams {
    pub fn time_s(&self, distance_m: Real) -> Real {
        distance_m / self.speed_mps
    }
}

/// Scheduled stop of one trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopTime {
    pub station: StationId,
    pub arrival_s: Real,
    pub departure_s: Real,
}

/// One train run over (part of) a line.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub train_id: String,
    pub line: LineId,
    pub stops: Vec<StopTime>,
}

impl Trip {
    pub fn stop_position(&self, station: StationId) -> Option<usize> {
        self.stops.iter().position(|st| st.station == station)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timetable {
    pub trips: Vec<Trip>,
}

impl Timetable {
    /// Checks trip consistency against the network: times strictly increase
    /// along the stop sequence, departures never precede arrivals, and each
    /// trip follows a contiguous run of its line's stops.
    pub fn validate(&self, network: &Network) -> Result<()> {
        for trip in &self.trips {
            if trip.stops.len() < 2 {
                return Err(Error::InvalidTimetable(format!(
                    "trip {} has fewer than 2 stops",
                    trip.train_id
                )));
            }
            let line = network.line(trip.line);
            let first = trip.stops[0].station;
            let offset = line.stop_position(first).ok_or_else(|| {
                Error::InvalidTimetable(format!(
                    "trip {}: station {} not on line {}",
                    trip.train_id,
                    network.station_code(first),
                    line.code
                ))
            })?;
            for (k, stop) in trip.stops.iter().enumerate() {
                let expect = line.stops.get(offset + k).copied();
                if expect != Some(stop.station) {
                    return Err(Error::InvalidTimetable(format!(
                        "trip {} does not follow line {} stop sequence",
                        trip.train_id, line.code
                    )));
                }
                if stop.departure_s < stop.arrival_s {
                    return Err(Error::InvalidTimetable(format!(
                        "trip {}: departure before arrival at {}",
                        trip.train_id,
                        network.station_code(stop.station)
                    )));
                }
                if k > 0 && stop.arrival_s <= trip.stops[k - 1].departure_s {
                    return Err(Error::InvalidTimetable(format!(
                        "trip {}: times do not increase at {}",
                        trip.train_id,
                        network.station_code(stop.station)
                    )));
                }
            }
        }
        Ok(())
    }
}
