//! Path choice sets: loop-free path enumeration, attribute computation, and
//! overlap (commonality) factors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::network::{LineId, Network, StationId, WalkParams};
use crate::scalar::Scalar;
use crate::Real;

/// One ride on a single line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Leg {
    pub board: StationId,
    pub alight: StationId,
    pub line: LineId,
}

/// Path attributes entering the choice model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAttributes {
    /// Total scheduled in-vehicle time, minutes.
    pub in_vehicle_time_min: Real,
    /// Total walk time (access + transfers + egress) in minutes divided by
    /// the map distance of the path in kilometers.
    pub relative_walk_time: Real,
    /// Number of transfers (legs minus one).
    pub n_transfers: usize,
}

impl PathAttributes {
    /// Attribute vector in model order.
    pub fn as_vector(&self) -> [Real; 3] {
        [
            self.in_vehicle_time_min,
            self.relative_walk_time,
            self.n_transfers as Real,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub od: (StationId, StationId),
    pub legs: Vec<Leg>,
    /// All stations traversed in order; junction stations appear once.
    pub stations: Vec<StationId>,
    pub attributes: PathAttributes,
    /// Commonality factor within the owning choice set.
    pub commonality: Real,
    /// Ordering key used during enumeration: in-vehicle + walk +
    /// transfer-penalty minutes.
    pub generalized_time_min: Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    pub od: (StationId, StationId),
    pub paths: Vec<Path>,
}

impl ChoiceSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Knobs for choice-set generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceSetConfig {
    /// Maximum number of paths to keep.
    pub k: usize,
    /// Paths with in-vehicle time above `detour_cap` times the minimum are
    /// discarded.
    pub detour_cap: Real,
    /// Hard cap on legs per path; bounds the search.
    pub max_legs: usize,
    /// Fixed penalty per transfer in the generalized-time ordering, minutes.
    pub transfer_penalty_min: Real,
    /// Commonality-factor exponent.
    pub gamma: Real,
    pub walk: WalkParams,
}

impl Default for ChoiceSetConfig {
    fn default() -> Self {
        ChoiceSetConfig {
            k: 5,
            detour_cap: 2.0,
            max_legs: 4,
            transfer_penalty_min: 5.0,
            gamma: 5.0,
            walk: WalkParams::default(),
        }
    }
}

/// Stations traversed by a chain of legs, with each junction counted once.
/// Fails if the legs do not chain contiguously or ride against a line.
pub fn path_station_list(network: &Network, legs: &[Leg]) -> Result<Vec<StationId>> {
    if legs.is_empty() {
        return Err(Error::InvalidNetwork("path with no legs".to_string()));
    }
    let mut stations = Vec::new();
    for (k, leg) in legs.iter().enumerate() {
        if k > 0 && legs[k - 1].alight != leg.board {
            return Err(Error::InvalidNetwork(format!(
                "legs do not chain at {}",
                network.station_code(leg.board)
            )));
        }
        let line = network.line(leg.line);
        let missing = || Error::MissingRunTime {
            line: line.code.clone(),
            from: network.station_code(leg.board).to_string(),
            to: network.station_code(leg.alight).to_string(),
        };
        let i = line.stop_position(leg.board).ok_or_else(missing)?;
        let j = line.stop_position(leg.alight).ok_or_else(missing)?;
        if i >= j {
            return Err(missing());
        }
        let from = if k == 0 { i } else { i + 1 };
        stations.extend_from_slice(&line.stops[from..=j]);
    }
    Ok(stations)
}

/// Map distance of a path in kilometers: straight-line distances between
/// consecutive traversed stations when coordinates exist, physical segment
/// lengths otherwise.
fn map_distance_km(network: &Network, legs: &[Leg], stations: &[StationId]) -> Result<Real> {
    let by_coords: Option<Real> = stations
        .windows(2)
        .map(|w| network.straight_line_m(w[0], w[1]))
        .sum();
    if let Some(m) = by_coords {
        if m > 0.0 {
            return Ok(m / 1000.0);
        }
    }
    // Fallback: physical track lengths.
    let mut total = 0.0;
    for leg in legs {
        let line = network.line(leg.line);
        let lengths = line.segment_lengths_m.as_ref().ok_or_else(|| {
            Error::MissingGeometry(format!(
                "line {} has neither station coordinates nor segment lengths",
                line.code
            ))
        })?;
        let i = line.stop_position(leg.board).unwrap_or(0);
        let j = line.stop_position(leg.alight).unwrap_or(0);
        total += lengths[i..j].iter().sum::<Real>();
    }
    if total > 0.0 {
        Ok(total / 1000.0)
    } else {
        Err(Error::MissingGeometry(
            "path has zero map distance".to_string(),
        ))
    }
}

/// Total walk time along a path in seconds: gate access at the origin,
/// each platform transfer, and gate egress at the destination.
pub(crate) fn walk_time_s(network: &Network, legs: &[Leg], walk: &WalkParams) -> Real {
    let first = &legs[0];
    let last = &legs[legs.len() - 1];
    let mut total = walk.time_s(network.gate_distance_m(first.board, &network.line(first.line).route));
    for pair in legs.windows(2) {
        let at = pair[0].alight;
        total += walk.time_s(network.transfer_distance_m(
            at,
            &network.line(pair[0].line).route,
            &network.line(pair[1].line).route,
        ));
    }
    total += walk.time_s(network.gate_distance_m(last.alight, &network.line(last.line).route));
    total
}

/// Computes the attribute vector of a leg chain against the network.
pub fn path_attributes(network: &Network, legs: &[Leg], walk: &WalkParams) -> Result<PathAttributes> {
    let stations = path_station_list(network, legs)?;
    let mut ivt_s = 0.0;
    for leg in legs {
        ivt_s += network.run_time_between(leg.line, leg.board, leg.alight)?;
    }
    let dist_km = map_distance_km(network, legs, &stations)?;
    let walk_min = walk_time_s(network, legs, walk) / 60.0;
    Ok(PathAttributes {
        in_vehicle_time_min: ivt_s / 60.0,
        relative_walk_time: walk_min / dist_km,
        n_transfers: legs.len() - 1,
    })
}

/// Commonality factors for every path in a set, from the traversed-station
/// lists alone: `F_i = ln Σ_j (N_ij / (N_i N_j))^γ` where `N_ij` counts
/// stations shared by paths `i` and `j`.
pub fn commonality_factors<S: Scalar>(station_lists: &[Vec<StationId>], gamma: S) -> Vec<S> {
    let counts: Vec<S> = station_lists.iter().map(|l| S::of_usize(l.len())).collect();
    let mut factors = Vec::with_capacity(station_lists.len());
    for (i, list_i) in station_lists.iter().enumerate() {
        let mut sum = S::zero();
        for (j, list_j) in station_lists.iter().enumerate() {
            let shared = list_i.iter().filter(|s| list_j.contains(s)).count();
            if shared == 0 {
                continue;
            }
            let ratio = S::of_usize(shared) / (counts[i] * counts[j]);
            sum = sum + ratio.powf(gamma);
        }
        factors.push(sum.ln());
    }
    factors
}

/// Commonality factor of one path within a choice set.
pub fn commonality_factor(set: &ChoiceSet, path_index: usize, gamma: Real) -> Real {
    let lists: Vec<Vec<StationId>> = set.paths.iter().map(|p| p.stations.clone()).collect();
    commonality_factors(&lists, gamma)[path_index]
}

/// Search node: a partial or completed path.
struct Node {
    /// Generalized time so far, minutes (includes egress once complete).
    g_min: Real,
    ivt_s: Real,
    walk_s: Real,
    legs: Vec<Leg>,
    stations: Vec<StationId>,
    /// Board station of the open leg; `None` once the path is complete.
    open_board: Option<StationId>,
    line: LineId,
    at: StationId,
    seq: u64,
}

impl Node {
    fn complete(&self) -> bool {
        self.open_board.is_none()
    }

    fn n_transfers(&self) -> usize {
        self.legs.len().saturating_sub(if self.complete() { 1 } else { 0 })
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the cheapest node pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .g_min
            .total_cmp(&self.g_min)
            .then_with(|| other.n_transfers().cmp(&self.n_transfers()))
            .then_with(|| other.legs.cmp(&self.legs))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Cost model for the best-first search.
#[derive(Clone, Copy, PartialEq)]
enum CostModel {
    /// In-vehicle time only (used to find the minimum in-vehicle-time path).
    InVehicle,
    /// In-vehicle + walk + transfer penalty.
    Generalized,
}

struct Search<'a> {
    network: &'a Network,
    od: (StationId, StationId),
    cfg: &'a ChoiceSetConfig,
    cost: CostModel,
    /// In-vehicle cap in seconds; `None` disables the cap.
    ivt_cap_s: Option<Real>,
    heap: BinaryHeap<Node>,
    seq: u64,
}

impl<'a> Search<'a> {
    fn new(
        network: &'a Network,
        od: (StationId, StationId),
        cfg: &'a ChoiceSetConfig,
        cost: CostModel,
        ivt_cap_s: Option<Real>,
    ) -> Self {
        let mut s = Search {
            network,
            od,
            cfg,
            cost,
            ivt_cap_s,
            heap: BinaryHeap::new(),
            seq: 0,
        };
        for &line in network.lines_at(od.0) {
            s.push_board(Node {
                g_min: 0.0,
                ivt_s: 0.0,
                walk_s: 0.0,
                legs: Vec::new(),
                stations: vec![od.0],
                open_board: Some(od.0),
                line,
                at: od.0,
                seq: 0,
            });
        }
        s
    }

    fn push(&mut self, mut node: Node) {
        self.seq += 1;
        node.seq = self.seq;
        self.heap.push(node);
    }

    /// Queues a node that just opened a leg on `node.line` at `node.at`,
    /// charging the boarding walk (access or transfer) which is already in
    /// `walk_s`/`g_min`.
    fn push_board(&mut self, node: Node) {
        // Only useful if the line continues past the boarding station.
        let line = self.network.line(node.line);
        if let Some(pos) = line.stop_position(node.at) {
            if pos + 1 < line.stops.len() {
                self.push(node);
            }
        }
    }

    fn walk_cost_min(&self, seconds: Real) -> Real {
        match self.cost {
            CostModel::InVehicle => 0.0,
            CostModel::Generalized => seconds / 60.0,
        }
    }

    /// Pops completed paths in cost order.
    fn next_path(&mut self) -> Option<Node> {
        while let Some(node) = self.heap.pop() {
            if node.complete() {
                return Some(node);
            }
            self.expand(node);
        }
        None
    }

    fn expand(&mut self, node: Node) {
        let line = self.network.line(node.line);
        let pos = line.stop_position(node.at).expect("node is on its line");
        let board = node.open_board.expect("incomplete node has an open leg");

        // Charge the access walk lazily when the first leg opens its ride.
        let (base_walk, base_g) = if node.legs.is_empty() && node.at == board && node.walk_s == 0.0 {
            let access =
                self.cfg.walk.time_s(self.network.gate_distance_m(board, &line.route));
            (access, node.g_min + self.walk_cost_min(access))
        } else {
            (node.walk_s, node.g_min)
        };

        // Ride one segment forward.
        if pos + 1 < line.stops.len() {
            let next = line.stops[pos + 1];
            if !node.stations.contains(&next) {
                let run = line.run_times_s[pos];
                let ivt = node.ivt_s + run;
                if self.ivt_cap_s.map_or(true, |cap| ivt <= cap) {
                    let mut stations = node.stations.clone();
                    stations.push(next);
                    let mut n = Node {
                        g_min: base_g + run / 60.0,
                        ivt_s: ivt,
                        walk_s: base_walk,
                        legs: node.legs.clone(),
                        stations,
                        open_board: Some(board),
                        line: node.line,
                        at: next,
                        seq: 0,
                    };
                    if next == self.od.1 {
                        // Arrived: close the leg and charge the egress walk.
                        n.legs.push(Leg { board, alight: next, line: node.line });
                        let egress = self
                            .cfg
                            .walk
                            .time_s(self.network.gate_distance_m(next, &line.route));
                        n.walk_s += egress;
                        n.g_min += self.walk_cost_min(egress);
                        n.open_board = None;
                    }
                    self.push(n);
                }
            }
        }

        // Transfer: close the current leg here and board another line.
        // Requires having ridden at least one segment.
        if node.at != board && node.legs.len() + 1 < self.cfg.max_legs.max(1) {
            for &other in self.network.lines_at(node.at) {
                if other == node.line {
                    continue;
                }
                let transfer = self.cfg.walk.time_s(self.network.transfer_distance_m(
                    node.at,
                    &line.route,
                    &self.network.line(other).route,
                ));
                let mut legs = node.legs.clone();
                legs.push(Leg { board, alight: node.at, line: node.line });
                let penalty = match self.cost {
                    CostModel::InVehicle => 0.0,
                    CostModel::Generalized => self.cfg.transfer_penalty_min,
                };
                self.push_board(Node {
                    g_min: base_g + self.walk_cost_min(transfer) + penalty,
                    ivt_s: node.ivt_s,
                    walk_s: base_walk + transfer,
                    legs,
                    stations: node.stations.clone(),
                    open_board: Some(node.at),
                    line: other,
                    at: node.at,
                    seq: 0,
                });
            }
        }
    }
}

/// Enumerates up to `cfg.k` loop-free paths for an OD pair, ordered by
/// generalized time. The minimum in-vehicle-time path is always a member;
/// paths with in-vehicle time beyond `cfg.detour_cap` times the minimum are
/// excluded. Attributes and commonality factors are filled in.
pub fn enumerate_choice_set(
    network: &Network,
    od: (StationId, StationId),
    cfg: &ChoiceSetConfig,
) -> Result<ChoiceSet> {
    if od.0 == od.1 {
        return Err(Error::Config("origin equals destination".to_string()));
    }
    if cfg.k < 1 {
        return Err(Error::Config("choice set size must be at least 1".to_string()));
    }

    // Pass 1: minimum in-vehicle-time path (ties: fewest transfers, then
    // lexicographic legs — the heap pop order).
    let mut ivt_search = Search::new(network, od, cfg, CostModel::InVehicle, None);
    let best = ivt_search.next_path().ok_or_else(|| Error::NoPath {
        origin: network.station_code(od.0).to_string(),
        destination: network.station_code(od.1).to_string(),
    })?;
    let min_ivt_s = best.ivt_s;
    let min_ivt_legs = best.legs;
    let cap_s = cfg.detour_cap * min_ivt_s;

    // Pass 2: paths in generalized-time order under the detour cap.
    let mut search = Search::new(network, od, cfg, CostModel::Generalized, Some(cap_s));
    let mut accepted: Vec<Node> = Vec::new();
    while accepted.len() < cfg.k {
        match search.next_path() {
            Some(node) => {
                if !accepted.iter().any(|a| a.legs == node.legs) {
                    accepted.push(node);
                }
            }
            None => break,
        }
    }

    // Guarantee the minimum in-vehicle-time path is present.
    if !accepted.iter().any(|a| a.legs == min_ivt_legs) {
        if accepted.len() == cfg.k {
            accepted.pop();
        }
        let stations = path_station_list(network, &min_ivt_legs)?;
        let walk = walk_time_s(network, &min_ivt_legs, &cfg.walk);
        accepted.push(Node {
            g_min: min_ivt_s / 60.0
                + walk / 60.0
                + cfg.transfer_penalty_min * (min_ivt_legs.len() - 1) as Real,
            ivt_s: min_ivt_s,
            walk_s: walk,
            legs: min_ivt_legs,
            stations,
            open_board: None,
            line: LineId(0),
            at: od.1,
            seq: 0,
        });
        accepted.sort_by(|a, b| {
            a.g_min
                .total_cmp(&b.g_min)
                .then_with(|| a.legs.len().cmp(&b.legs.len()))
                .then_with(|| a.legs.cmp(&b.legs))
        });
    }

    let mut paths = Vec::with_capacity(accepted.len());
    for node in &accepted {
        let attributes = path_attributes(network, &node.legs, &cfg.walk)?;
        paths.push(Path {
            od,
            legs: node.legs.clone(),
            stations: node.stations.clone(),
            attributes,
            commonality: 0.0,
            generalized_time_min: node.g_min,
        });
    }
    let lists: Vec<Vec<StationId>> = paths.iter().map(|p| p.stations.clone()).collect();
    let factors = commonality_factors::<Real>(&lists, cfg.gamma);
    for (path, f) in paths.iter_mut().zip(factors) {
        path.commonality = f;
    }
    Ok(ChoiceSet { od, paths })
}
