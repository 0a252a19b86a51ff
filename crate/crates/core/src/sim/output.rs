//! Simulation outputs: per-passenger records, train loads, queue traces,
//! and the aggregated performance indicators.

use std::collections::BTreeMap;

use crate::network::{Leg, LineId, StationId};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassengerStatus {
    /// Tapped out before the run ended.
    Exited,
    /// Still on a train when the event list ran out.
    Onboard,
    /// Still waiting at a platform when the event list ran out.
    Queued,
    /// Dropped because the OD pair has no path.
    Dropped,
}

impl PassengerStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PassengerStatus::Exited => "exited",
            PassengerStatus::Onboard => "onboard",
            PassengerStatus::Queued => "queued",
            PassengerStatus::Dropped => "dropped",
        }
    }
}

/// One boarding a passenger made.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegEvent {
    pub board: StationId,
    pub line: LineId,
    pub platform_arrival_s: Real,
    pub board_time_s: Real,
    pub trip: usize,
}

/// Where a still-queued passenger is waiting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingWait {
    pub station: StationId,
    pub line: LineId,
    pub platform_arrival_s: Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassengerRecord {
    pub id: u64,
    pub origin: StationId,
    pub destination: StationId,
    pub tap_in_s: Real,
    pub tap_out_s: Option<Real>,
    /// Index of the OD's choice set in the run's [`super::ChoiceSets`];
    /// `usize::MAX` for dropped passengers.
    pub choice_set: usize,
    pub path: usize,
    pub legs: Vec<Leg>,
    pub times_left_behind: u32,
    pub status: PassengerStatus,
    pub leg_events: Vec<LegEvent>,
    /// Set while the passenger is queued at a platform.
    pub pending: Option<PendingWait>,
}

impl PassengerRecord {
    pub fn journey_s(&self) -> Option<Real> {
        self.tap_out_s.map(|out| out - self.tap_in_s)
    }
}

/// Train load on one segment, sampled at departure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSample {
    pub trip: usize,
    pub from: StationId,
    pub to: StationId,
    pub departure_s: Real,
    pub load: u32,
    pub capacity: u32,
}

/// Queue length at a platform right after an event touched it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSample {
    pub station: StationId,
    pub line: LineId,
    pub time_s: Real,
    pub len: u32,
}

/// Boarding outcome of one departure at one platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardingSample {
    pub station: StationId,
    pub line: LineId,
    pub time_s: Real,
    pub boarded: u32,
    pub denied: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOutput {
    /// Per-passenger records sorted by passenger id.
    pub records: Vec<PassengerRecord>,
    pub loads: Vec<LoadSample>,
    pub queues: Vec<QueueSample>,
    pub boardings: Vec<BoardingSample>,
    /// Ids of passengers dropped as unreachable.
    pub dropped: Vec<u64>,
}

impl SimOutput {
    /// `(origin, destination, tap_out_s)` for every exited passenger.
    pub fn exit_records(&self) -> impl Iterator<Item = (StationId, StationId, Real)> + '_ {
        self.records
            .iter()
            .filter_map(|r| r.tap_out_s.map(|out| (r.origin, r.destination, out)))
    }

    /// Per-status counts keyed by OD pair, for conservation checks.
    pub fn od_accounting(&self) -> BTreeMap<(StationId, StationId), [u32; 4]> {
        let mut acc: BTreeMap<(StationId, StationId), [u32; 4]> = BTreeMap::new();
        for r in &self.records {
            let slot = match r.status {
                PassengerStatus::Exited => 0,
                PassengerStatus::Onboard => 1,
                PassengerStatus::Queued => 2,
                PassengerStatus::Dropped => 3,
            };
            acc.entry((r.origin, r.destination)).or_default()[slot] += 1;
        }
        acc
    }
}

/// Journey-time statistics for one (origin, destination, interval) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JourneyTimeRow {
    pub origin: StationId,
    pub destination: StationId,
    /// Tap-in interval index relative to the indicator origin time.
    pub interval: usize,
    pub count: u32,
    pub mean_s: Real,
    pub p50_s: Real,
    pub p90_s: Real,
}

/// Left-behind statistics per platform and interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeftBehindRow {
    pub station: StationId,
    pub line: LineId,
    pub interval: usize,
    pub boarded: u32,
    pub denied: u32,
}

impl LeftBehindRow {
    pub fn denial_rate(&self) -> Real {
        let attempts = self.boarded + self.denied;
        if attempts == 0 {
            0.0
        } else {
            self.denied as Real / attempts as Real
        }
    }
}

/// Peak queue length observed per platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakQueueRow {
    pub station: StationId,
    pub line: LineId,
    pub peak: u32,
    pub at_s: Real,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Indicators {
    pub journey_times: Vec<JourneyTimeRow>,
    pub left_behind: Vec<LeftBehindRow>,
    pub peak_queues: Vec<PeakQueueRow>,
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[Real], q: Real) -> Real {
    let n = sorted.len();
    let rank = ((q * n as Real).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Aggregates a run into indicator tables with intervals of length `tau_s`
/// starting at `t0_s`. Journey-time cells are keyed by the tap-in interval.
pub fn extract_indicators(output: &SimOutput, tau_s: Real, t0_s: Real) -> Indicators {
    let interval_of = |t: Real| -> Option<usize> {
        let i = ((t - t0_s) / tau_s).floor();
        if i >= 0.0 {
            Some(i as usize)
        } else {
            None
        }
    };

    let mut journeys: BTreeMap<(StationId, StationId, usize), Vec<Real>> = BTreeMap::new();
    for r in &output.records {
        if let (Some(jt), Some(interval)) = (r.journey_s(), interval_of(r.tap_in_s)) {
            journeys.entry((r.origin, r.destination, interval)).or_default().push(jt);
        }
    }
    let journey_times = journeys
        .into_iter()
        .map(|((origin, destination, interval), mut times)| {
            times.sort_by(Real::total_cmp);
            let mean = times.iter().sum::<Real>() / times.len() as Real;
            JourneyTimeRow {
                origin,
                destination,
                interval,
                count: times.len() as u32,
                mean_s: mean,
                p50_s: percentile(&times, 0.5),
                p90_s: percentile(&times, 0.9),
            }
        })
        .collect();

    let mut lb: BTreeMap<(StationId, LineId, usize), (u32, u32)> = BTreeMap::new();
    for b in &output.boardings {
        if let Some(interval) = interval_of(b.time_s) {
            let cell = lb.entry((b.station, b.line, interval)).or_default();
            cell.0 += b.boarded;
            cell.1 += b.denied;
        }
    }
    let left_behind = lb
        .into_iter()
        .map(|((station, line, interval), (boarded, denied))| LeftBehindRow {
            station,
            line,
            interval,
            boarded,
            denied,
        })
        .collect();

    let mut peaks: BTreeMap<(StationId, LineId), (u32, Real)> = BTreeMap::new();
    for q in &output.queues {
        let entry = peaks.entry((q.station, q.line)).or_insert((0, q.time_s));
        if q.len > entry.0 {
            *entry = (q.len, q.time_s);
        }
    }
    let peak_queues = peaks
        .into_iter()
        .map(|((station, line), (peak, at_s))| PeakQueueRow { station, line, peak, at_s })
        .collect();

    Indicators {
        journey_times,
        left_behind,
        peak_queues,
    }
}
