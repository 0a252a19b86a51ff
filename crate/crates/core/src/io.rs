//! File formats: network JSON, timetable / demand / AFC CSV, parameter and
//! metadata JSON, and the tabular simulation outputs.
//!
//! Times in tabular files are `HH:MM:SS` (fractional seconds are floored on
//! write and accepted on read). All writers iterate in deterministic order
//! so identical inputs produce byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::JourneyRecord;
use crate::choice::ChoiceParams;
use crate::datagen::{DatasetMetadata, DemandRecord};
use crate::error::{Error, Result};
use crate::network::{LineDef, Network, StationDef, StopTime, Timetable, Trip};
use crate::sim::{ChoiceSets, Indicators, SimOutput, TapIn};
use crate::Real;

/// Parses `HH:MM:SS` (or `HH:MM:SS.fff`) into seconds from midnight.
pub fn parse_hms(text: &str) -> Option<Real> {
    let mut parts = text.split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let s: Real = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || !(0.0..60.0).contains(&s) {
        return None;
    }
    Some(h as Real * 3600.0 + m as Real * 60.0 + s)
}

/// Formats whole seconds from midnight as `HH:MM:SS`, flooring fractions.
pub fn format_hms(seconds: Real) -> String {
    let total = seconds.max(0.0).floor() as u64;
    format!("{:02}:{:02}:{:02}", total / 3600, (total / 60) % 60, total % 60)
}

fn file_err(path: &Path, source: std::io::Error) -> Error {
    Error::File {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub stations: Vec<StationDef>,
    pub lines: Vec<LineDef>,
}

pub fn load_network(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let file: NetworkFile =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    Network::new(file.stations, file.lines)
}

pub fn save_network(path: &Path, network: &Network) -> Result<()> {
    let (stations, lines) = network.to_defs();
    let file = NetworkFile { stations, lines };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| file_err(path, e))
}

/// Timetable CSV columns: `train_id,line_id,station_id,arrival_time,departure_time`.
pub fn load_timetable(path: &Path, network: &Network) -> Result<Timetable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e.to_string()))?;
    let mut trips: Vec<Trip> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(path, e.to_string()))?;
        if row.len() < 5 {
            return Err(parse_err(path, format!("expected 5 columns, got {}", row.len())));
        }
        let train_id = row[0].to_string();
        let line = network
            .line_id(&row[1])
            .ok_or_else(|| parse_err(path, format!("unknown line {}", &row[1])))?;
        let station = network
            .station_id(&row[2])
            .ok_or_else(|| parse_err(path, format!("unknown station {}", &row[2])))?;
        let arrival_s =
            parse_hms(&row[3]).ok_or_else(|| parse_err(path, format!("bad time {}", &row[3])))?;
        let departure_s =
            parse_hms(&row[4]).ok_or_else(|| parse_err(path, format!("bad time {}", &row[4])))?;
        let stop = StopTime { station, arrival_s, departure_s };
        match index.get(&train_id) {
            Some(&i) => trips[i].stops.push(stop),
            None => {
                index.insert(train_id.clone(), trips.len());
                trips.push(Trip { train_id, line, stops: vec![stop] });
            }
        }
    }
    let timetable = Timetable { trips };
    timetable.validate(network)?;
    Ok(timetable)
}

pub fn save_timetable(path: &Path, network: &Network, timetable: &Timetable) -> Result<()> {
    let mut out = String::from("train_id,line_id,station_id,arrival_time,departure_time\n");
    for trip in &timetable.trips {
        for stop in &trip.stops {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                trip.train_id,
                network.line_code(trip.line),
                network.station_code(stop.station),
                format_hms(stop.arrival_s),
                format_hms(stop.departure_s),
            ));
        }
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

/// One AFC row; `tap_out_s` is present in closed-system (ground truth)
/// files and absent in pure demand files.
#[derive(Debug, Clone, PartialEq)]
pub struct AfcRecord {
    pub id: u64,
    pub origin: String,
    pub destination: String,
    pub tap_in_s: Real,
    pub tap_out_s: Option<Real>,
}

/// Demand / AFC CSV columns:
/// `passenger_id,origin,destination,tap_in_time[,tap_out_time]`.
pub fn load_afc(path: &Path) -> Result<Vec<AfcRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(path, e.to_string()))?;
        if row.len() < 4 {
            return Err(parse_err(path, format!("expected at least 4 columns, got {}", row.len())));
        }
        let id: u64 = row[0]
            .parse()
            .map_err(|_| parse_err(path, format!("bad passenger id {}", &row[0])))?;
        let tap_in_s =
            parse_hms(&row[3]).ok_or_else(|| parse_err(path, format!("bad time {}", &row[3])))?;
        let tap_out_s = match row.get(4) {
            Some(text) if !text.is_empty() => Some(
                parse_hms(text).ok_or_else(|| parse_err(path, format!("bad time {text}")))?,
            ),
            _ => None,
        };
        if let Some(out) = tap_out_s {
            if out <= tap_in_s {
                return Err(parse_err(path, format!("passenger {id} taps out before tapping in")));
            }
        }
        records.push(AfcRecord {
            id,
            origin: row[1].to_string(),
            destination: row[2].to_string(),
            tap_in_s,
            tap_out_s,
        });
    }
    Ok(records)
}

pub fn save_demand(path: &Path, records: &[DemandRecord]) -> Result<()> {
    let mut out = String::from("passenger_id,origin,destination,tap_in_time\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.id,
            r.origin,
            r.destination,
            format_hms(r.tap_in_s)
        ));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Writes the closed-system AFC file from a ground-truth run; passengers
/// without a tap-out get an empty final column.
pub fn save_afc(path: &Path, network: &Network, output: &SimOutput) -> Result<()> {
    let mut out = String::from("passenger_id,origin,destination,tap_in_time,tap_out_time\n");
    for r in &output.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.id,
            network.station_code(r.origin),
            network.station_code(r.destination),
            format_hms(r.tap_in_s),
            r.tap_out_s.map(format_hms).unwrap_or_default(),
        ));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

pub fn afc_to_demand(records: &[AfcRecord]) -> Vec<DemandRecord> {
    records
        .iter()
        .map(|r| DemandRecord {
            id: r.id,
            origin: r.origin.clone(),
            destination: r.destination.clone(),
            tap_in_s: r.tap_in_s,
        })
        .collect()
}

/// Resolves AFC records with tap-outs into journey records; rows without a
/// tap-out are skipped.
pub fn afc_to_journeys(network: &Network, records: &[AfcRecord]) -> Result<Vec<JourneyRecord>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let Some(tap_out_s) = r.tap_out_s else { continue };
        let origin = network
            .station_id(&r.origin)
            .ok_or_else(|| Error::Config(format!("AFC references unknown station {}", r.origin)))?;
        let destination = network.station_id(&r.destination).ok_or_else(|| {
            Error::Config(format!("AFC references unknown station {}", r.destination))
        })?;
        out.push(JourneyRecord {
            origin,
            destination,
            tap_in_s: r.tap_in_s,
            tap_out_s,
        });
    }
    Ok(out)
}

pub fn resolve_afc_tapins(network: &Network, records: &[AfcRecord]) -> Result<Vec<TapIn>> {
    records
        .iter()
        .map(|r| {
            let origin = network.station_id(&r.origin).ok_or_else(|| {
                Error::Config(format!("AFC references unknown station {}", r.origin))
            })?;
            let destination = network.station_id(&r.destination).ok_or_else(|| {
                Error::Config(format!("AFC references unknown station {}", r.destination))
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

pub fn load_params(path: &Path) -> Result<ChoiceParams> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn save_params(path: &Path, params: &ChoiceParams) -> Result<()> {
    let mut text = serde_json::to_string_pretty(params)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn load_profile(path: &Path) -> Result<crate::datagen::DemandProfile> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let profile: crate::datagen::DemandProfile =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    profile.validate()?;
    Ok(profile)
}

pub fn save_profile(path: &Path, profile: &crate::datagen::DemandProfile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(profile)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn load_metadata(path: &Path) -> Result<DatasetMetadata> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn save_metadata(path: &Path, metadata: &DatasetMetadata) -> Result<()> {
    let mut text = serde_json::to_string_pretty(metadata)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| file_err(path, e))
}

fn leg_string(network: &Network, legs: &[crate::network::Leg]) -> String {
    legs.iter()
        .map(|l| {
            format!(
                "{}>{}@{}",
                network.station_code(l.board),
                network.station_code(l.alight),
                network.line_code(l.line)
            )
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Writes the tabular simulation outputs into `dir`:
/// `passengers.out`, `od_exit_flows.out`, `loads.out`, `queues.out`, plus
/// the indicator tables.
pub fn write_sim_output(
    dir: &Path,
    network: &Network,
    timetable: &Timetable,
    output: &SimOutput,
    tau_s: Real,
    t0_s: Real,
    n_intervals: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;

    let mut passengers = String::from(
        "passenger_id,origin,destination,tap_in,tap_out,journey_s,path,times_left_behind,status\n",
    );
    for r in &output.records {
        passengers.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.id,
            network.station_code(r.origin),
            network.station_code(r.destination),
            format_hms(r.tap_in_s),
            r.tap_out_s.map(format_hms).unwrap_or_default(),
            r.journey_s().map(|j| j.to_string()).unwrap_or_default(),
            leg_string(network, &r.legs),
            r.times_left_behind,
            r.status.as_str(),
        ));
    }
    write_file(&dir.join("passengers.out"), &passengers)?;

    let flows = crate::calib::exit_flows(output.exit_records(), tau_s, t0_s, n_intervals);
    let mut flows_text = String::from("origin,destination,interval_index,count\n");
    for (&(o, d, t), &count) in flows.iter() {
        flows_text.push_str(&format!(
            "{},{},{},{}\n",
            network.station_code(o),
            network.station_code(d),
            t,
            count
        ));
    }
    write_file(&dir.join("od_exit_flows.out"), &flows_text)?;

    let mut loads = String::from("train_id,line_id,from,to,departure_time,load,capacity\n");
    for l in &output.loads {
        loads.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            timetable.trips[l.trip].train_id,
            network.line_code(timetable.trips[l.trip].line),
            network.station_code(l.from),
            network.station_code(l.to),
            format_hms(l.departure_s),
            l.load,
            l.capacity,
        ));
    }
    write_file(&dir.join("loads.out"), &loads)?;

    let mut queues = String::from("station,line,time,queue_len\n");
    for q in &output.queues {
        queues.push_str(&format!(
            "{},{},{},{}\n",
            network.station_code(q.station),
            network.line_code(q.line),
            format_hms(q.time_s),
            q.len
        ));
    }
    write_file(&dir.join("queues.out"), &queues)?;

    Ok(())
}

pub fn write_indicators(dir: &Path, network: &Network, indicators: &Indicators) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;

    let mut jt = String::from("origin,destination,interval_index,count,mean_s,p50_s,p90_s\n");
    for row in &indicators.journey_times {
        jt.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            network.station_code(row.origin),
            network.station_code(row.destination),
            row.interval,
            row.count,
            row.mean_s,
            row.p50_s,
            row.p90_s,
        ));
    }
    write_file(&dir.join("journey_times.out"), &jt)?;

    let mut lb = String::from("station,line,interval_index,boarded,denied,denial_rate\n");
    for row in &indicators.left_behind {
        lb.push_str(&format!(
            "{},{},{},{},{},{}\n",
            network.station_code(row.station),
            network.line_code(row.line),
            row.interval,
            row.boarded,
            row.denied,
            row.denial_rate(),
        ));
    }
    write_file(&dir.join("left_behind.out"), &lb)?;

    let mut pq = String::from("station,line,peak_queue,at\n");
    for row in &indicators.peak_queues {
        pq.push_str(&format!(
            "{},{},{},{}\n",
            network.station_code(row.station),
            network.line_code(row.line),
            row.peak,
            format_hms(row.at_s),
        ));
    }
    write_file(&dir.join("peak_queues.out"), &pq)?;

    Ok(())
}

/// Writes `truth_paths.csv`: the held-out true path assignments of a
/// ground-truth run (evaluation only, never a calibration input).
pub fn save_truth_paths(path: &Path, network: &Network, output: &SimOutput) -> Result<()> {
    let mut out = String::from("passenger_id,path_index,legs\n");
    for r in &output.records {
        if r.status == crate::sim::PassengerStatus::Dropped {
            continue;
        }
        out.push_str(&format!("{},{},{}\n", r.id, r.path, leg_string(network, &r.legs)));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Serializes the choice sets a run used, for inspection.
pub fn save_choice_sets(path: &Path, network: &Network, sets: &ChoiceSets) -> Result<()> {
    let mut out = String::from(
        "origin,destination,path_index,in_vehicle_min,relative_walk,transfers,commonality,generalized_min,legs\n",
    );
    for set in sets.iter() {
        for (i, p) in set.paths.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                network.station_code(set.od.0),
                network.station_code(set.od.1),
                i,
                p.attributes.in_vehicle_time_min,
                p.attributes.relative_walk_time,
                p.attributes.n_transfers,
                p.commonality,
                p.generalized_time_min,
                leg_string(network, &p.legs),
            ));
        }
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| file_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| file_err(path, e))
}
