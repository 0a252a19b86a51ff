//! Path-choice calibration: the exit-flow + KL-divergence objective and the
//! surrogate-based optimizer that minimizes it, treating the simulator as a
//! black box.

pub mod cors;
pub mod rbf;

pub use cors::{cors_optimize, latin_hypercube, CorsConfig, CorsResult, Evaluation};
pub use rbf::RbfSurrogate;

use std::collections::BTreeMap;

use crate::choice::{ChoiceParams, PathChoice};
use crate::error::{Error, Result};
use crate::network::{Network, StationId, Timetable};
use crate::scalar::Scalar;
use crate::sim::{run_simulation, ChoiceSets, SimConfig, SimOutput, TapIn, Window};
use crate::Real;

/// A completed journey: what a closed AFC system observes per passenger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JourneyRecord {
    pub origin: StationId,
    pub destination: StationId,
    pub tap_in_s: Real,
    pub tap_out_s: Real,
}

impl JourneyRecord {
    pub fn journey_s(&self) -> Real {
        self.tap_out_s - self.tap_in_s
    }
}

/// Journey records of every exited passenger in a simulation output.
pub fn journey_records(output: &SimOutput) -> Vec<JourneyRecord> {
    output
        .records
        .iter()
        .filter_map(|r| {
            r.tap_out_s.map(|out| JourneyRecord {
                origin: r.origin,
                destination: r.destination,
                tap_in_s: r.tap_in_s,
                tap_out_s: out,
            })
        })
        .collect()
}

/// OD exit-flow counts per interval: `q[o, d, t]` counts passengers of pair
/// `(o, d)` tapping out during interval `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitFlowTensor {
    pub tau_s: Real,
    pub t0_s: Real,
    pub n_intervals: usize,
    counts: BTreeMap<(StationId, StationId, usize), u32>,
}

impl ExitFlowTensor {
    pub fn interval_of(&self, t: Real) -> Option<usize> {
        let i = ((t - self.t0_s) / self.tau_s).floor();
        if i >= 0.0 && (i as usize) < self.n_intervals {
            Some(i as usize)
        } else {
            None
        }
    }

    pub fn get(&self, o: StationId, d: StationId, t: usize) -> u32 {
        self.counts.get(&(o, d, t)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(StationId, StationId, usize), &u32)> {
        self.counts.iter()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    /// Flows summed over destinations, keyed by (origin, interval).
    pub fn by_origin(&self) -> BTreeMap<(StationId, usize), u32> {
        let mut agg: BTreeMap<(StationId, usize), u32> = BTreeMap::new();
        for (&(o, _, t), &c) in &self.counts {
            *agg.entry((o, t)).or_default() += c;
        }
        agg
    }
}

/// Builds the exit-flow tensor from `(origin, destination, tap_out)`
/// triples; exits outside the covered intervals are ignored.
pub fn exit_flows(
    exits: impl IntoIterator<Item = (StationId, StationId, Real)>,
    tau_s: Real,
    t0_s: Real,
    n_intervals: usize,
) -> ExitFlowTensor {
    let mut tensor = ExitFlowTensor {
        tau_s,
        t0_s,
        n_intervals,
        counts: BTreeMap::new(),
    };
    for (o, d, out) in exits {
        if let Some(t) = tensor.interval_of(out) {
            *tensor.counts.entry((o, d, t)).or_default() += 1;
        }
    }
    tensor
}

/// Fixed-width journey-time histogram; durations beyond the last edge are
/// clamped into the final bin.
#[derive(Debug, Clone, PartialEq)]
pub struct JtHistogram {
    pub bin_s: Real,
    pub counts: Vec<u32>,
    pub total: u32,
}

impl JtHistogram {
    pub fn new(bin_s: Real, n_bins: usize) -> Self {
        JtHistogram {
            bin_s,
            counts: vec![0; n_bins],
            total: 0,
        }
    }

    pub fn add(&mut self, journey_s: Real) {
        let bin = ((journey_s / self.bin_s).floor().max(0.0) as usize).min(self.counts.len() - 1);
        self.counts[bin] += 1;
        self.total += 1;
    }

    pub fn probs(&self) -> Vec<Real> {
        let n = self.total.max(1) as Real;
        self.counts.iter().map(|&c| c as Real / n).collect()
    }

    /// Probability masses after adding `eps` to every bin and renormalizing.
    pub fn smoothed_probs(&self, eps: Real) -> Vec<Real> {
        let n = self.total as Real + eps * self.counts.len() as Real;
        self.counts.iter().map(|&c| (c as Real + eps) / n).collect()
    }

    fn same_bins(&self, other: &JtHistogram) -> bool {
        self.bin_s == other.bin_s && self.counts.len() == other.counts.len()
    }
}

/// Discrete KL divergence `Σ p ln(p/q)` over probability masses; bins with
/// zero `p` contribute nothing.
pub fn kl_divergence_mass<S: Scalar>(p: &[S], q: &[S]) -> S {
    let mut acc = S::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > S::zero() {
            acc = acc + pi * (pi / qi).ln();
        }
    }
    acc
}

/// KL divergence between two journey-time histograms on identical bins.
/// Both sides receive the same additive `eps` smoothing, so identical
/// histograms give exactly zero and the denominator never vanishes.
pub fn kl_divergence(p: &JtHistogram, q: &JtHistogram, eps: Real) -> Result<Real> {
    if !p.same_bins(q) {
        return Err(Error::BinMismatch(format!(
            "{} bins of {} s vs {} bins of {} s",
            p.counts.len(),
            p.bin_s,
            q.counts.len(),
            q.bin_s
        )));
    }
    if p.counts == q.counts {
        return Ok(0.0);
    }
    Ok(kl_divergence_mass(&p.smoothed_probs(eps), &q.smoothed_probs(eps)))
}

/// Journey-time histograms keyed by `(origin, destination, departure
/// interval)`, the departure interval being the tap-in interval.
pub fn journey_time_distributions(
    records: &[JourneyRecord],
    tau_s: Real,
    t0_s: Real,
    n_intervals: usize,
    bin_s: Real,
    max_s: Real,
) -> BTreeMap<(StationId, StationId, usize), JtHistogram> {
    let n_bins = (max_s / bin_s).ceil() as usize;
    let mut out: BTreeMap<(StationId, StationId, usize), JtHistogram> = BTreeMap::new();
    for r in records {
        let i = ((r.tap_in_s - t0_s) / tau_s).floor();
        if i < 0.0 || i as usize >= n_intervals {
            continue;
        }
        out.entry((r.origin, r.destination, i as usize))
            .or_insert_with(|| JtHistogram::new(bin_s, n_bins))
            .add(r.journey_s());
    }
    out
}

/// Calibration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibConfig {
    /// Trade-off weight on the KL term.
    pub eta: Real,
    /// Minimum observed exit flow for a cell to enter the KL term.
    pub q_kl: u32,
    pub tau_s: Real,
    /// Window the objective is evaluated over.
    pub estimation: Window,
    pub jt_bin_s: Real,
    pub jt_max_s: Real,
    pub kl_eps: Real,
    /// Box bounds per coefficient.
    pub bounds: Vec<(Real, Real)>,
    /// Total objective evaluations.
    pub budget: usize,
    /// Optimizer seed (the simulator seed lives in the sim config).
    pub seed: u64,
}

impl CalibConfig {
    pub fn new(estimation: Window) -> Self {
        CalibConfig {
            eta: 600.0,
            q_kl: 50,
            tau_s: 900.0,
            estimation,
            jt_bin_s: 60.0,
            jt_max_s: 7200.0,
            kl_eps: 1e-6,
            bounds: vec![(-10.0, 0.0); ChoiceParams::DIM],
            budget: 100,
            seed: 0,
        }
    }

    pub fn n_intervals(&self) -> usize {
        (self.estimation.len_s() / self.tau_s).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 0.0 {
            return Err(Error::Config("eta must be nonnegative".to_string()));
        }
        if self.q_kl < 1 {
            return Err(Error::Config("q_kl must be at least 1".to_string()));
        }
        if self.bounds.len() != ChoiceParams::DIM {
            return Err(Error::Config(format!(
                "expected {} coefficient bounds",
                ChoiceParams::DIM
            )));
        }
        if !(self.tau_s > 0.0) || !(self.jt_bin_s > 0.0) || !(self.jt_max_s > self.jt_bin_s) {
            return Err(Error::Config("invalid interval or bin lengths".to_string()));
        }
        if self.estimation.len_s() <= 0.0 {
            return Err(Error::Config("empty estimation window".to_string()));
        }
        Ok(())
    }
}

/// Observed (data-side) aggregates the objective compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub flows: ExitFlowTensor,
    pub journey_times: BTreeMap<(StationId, StationId, usize), JtHistogram>,
}

impl Observed {
    pub fn from_records(records: &[JourneyRecord], cfg: &CalibConfig) -> Observed {
        let n = cfg.n_intervals();
        Observed {
            flows: exit_flows(
                records.iter().map(|r| (r.origin, r.destination, r.tap_out_s)),
                cfg.tau_s,
                cfg.estimation.start_s,
                n,
            ),
            journey_times: journey_time_distributions(
                records,
                cfg.tau_s,
                cfg.estimation.start_s,
                n,
                cfg.jt_bin_s,
                cfg.jt_max_s,
            ),
        }
    }

    /// Cells with observed exit flow at or above the KL threshold.
    pub fn wt_star(&self, q_kl: u32) -> Vec<(StationId, StationId, usize)> {
        self.flows
            .iter()
            .filter(|(_, &c)| c >= q_kl)
            .map(|(&k, _)| k)
            .collect()
    }
}

/// Decomposed objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub total: Real,
    pub flow_term: Real,
    /// Unweighted KL sum; `total = flow_term + eta * kl_term`.
    pub kl_term: Real,
    pub kl_contributions: Vec<((StationId, StationId, usize), Real)>,
}

/// Combines model and observed aggregates into the calibration objective.
pub fn combine_objective(
    model_flows: &ExitFlowTensor,
    model_jt: &BTreeMap<(StationId, StationId, usize), JtHistogram>,
    observed: &Observed,
    cfg: &CalibConfig,
) -> Result<ObjectiveValue> {
    let mut flow_term = 0.0;
    let mut keys: std::collections::BTreeSet<(StationId, StationId, usize)> =
        model_flows.iter().map(|(&k, _)| k).collect();
    keys.extend(observed.flows.iter().map(|(&k, _)| k));
    for (o, d, t) in keys {
        let q = model_flows.get(o, d, t) as Real;
        let q_hat = observed.flows.get(o, d, t) as Real;
        flow_term += (q - q_hat) * (q - q_hat);
    }

    let mut kl_term = 0.0;
    let mut kl_contributions = Vec::new();
    let wt_star = if cfg.eta > 0.0 {
        observed.wt_star(cfg.q_kl)
    } else {
        Vec::new()
    };
    for key in wt_star {
        let (Some(model), Some(obs)) = (model_jt.get(&key), observed.journey_times.get(&key))
        else {
            continue;
        };
        if model.total == 0 || obs.total == 0 {
            continue;
        }
        let d = kl_divergence(model, obs, cfg.kl_eps)?;
        kl_term += d;
        kl_contributions.push((key, d));
    }

    Ok(ObjectiveValue {
        total: flow_term + cfg.eta * kl_term,
        flow_term,
        kl_term,
        kl_contributions,
    })
}

/// Everything one simulator evaluation needs, shared immutably across
/// evaluations.
#[derive(Debug, Clone, Copy)]
pub struct SimBundle<'a> {
    pub network: &'a Network,
    pub timetable: &'a Timetable,
    pub choice_sets: &'a ChoiceSets,
    pub demand: &'a [TapIn],
    pub sim_config: &'a SimConfig,
}

impl<'a> SimBundle<'a> {
    /// Runs the simulator at `params` and aggregates the model-side tensors.
    pub fn evaluate(
        &self,
        params: &ChoiceParams,
        cfg: &CalibConfig,
    ) -> Result<(ExitFlowTensor, BTreeMap<(StationId, StationId, usize), JtHistogram>)> {
        let output = run_simulation(
            self.network,
            self.timetable,
            self.choice_sets,
            &PathChoice::Params(*params),
            self.demand,
            self.sim_config,
        )?;
        let records = journey_records(&output);
        let n = cfg.n_intervals();
        let flows = exit_flows(
            records.iter().map(|r| (r.origin, r.destination, r.tap_out_s)),
            cfg.tau_s,
            cfg.estimation.start_s,
            n,
        );
        let jt = journey_time_distributions(
            &records,
            cfg.tau_s,
            cfg.estimation.start_s,
            n,
            cfg.jt_bin_s,
            cfg.jt_max_s,
        );
        Ok((flows, jt))
    }
}

/// The full simulation-based objective at one parameter vector.
pub fn objective(
    params: &ChoiceParams,
    observed: &Observed,
    bundle: &SimBundle,
    cfg: &CalibConfig,
) -> Result<ObjectiveValue> {
    let (flows, jt) = bundle.evaluate(params, cfg)?;
    combine_objective(&flows, &jt, observed, cfg)
}

/// One row of the calibration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub index: usize,
    pub params: ChoiceParams,
    pub flow_term: Real,
    pub kl_term: Real,
    pub total: Real,
    pub best_so_far: Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub best: ChoiceParams,
    pub best_value: ObjectiveValue,
    pub trace: Vec<TraceEntry>,
    pub wt_star_size: usize,
    pub warnings: Vec<String>,
}

/// Estimates choice parameters from observed journey records by wiring the
/// simulation objective into the CORS optimizer.
pub fn calibrate(
    observed_records: &[JourneyRecord],
    bundle: &SimBundle,
    cfg: &CalibConfig,
) -> Result<CalibrationReport> {
    cfg.validate()?;
    let observed = Observed::from_records(observed_records, cfg);
    let wt_star_size = observed.wt_star(cfg.q_kl).len();
    let mut warnings = Vec::new();
    if wt_star_size == 0 {
        warnings.push(format!(
            "no (o,d,t) cell reaches the KL threshold {}; the KL term is zero",
            cfg.q_kl
        ));
    }

    let mut decompositions: Vec<ObjectiveValue> = Vec::with_capacity(cfg.budget);
    let cors_cfg = CorsConfig::<Real> {
        budget: cfg.budget,
        seed: cfg.seed,
        ..CorsConfig::default()
    };
    let result = cors_optimize(
        |x: &[Real]| {
            let params = ChoiceParams::from_slice(x)?;
            let value = objective(&params, &observed, bundle, cfg)?;
            let total = value.total;
            decompositions.push(value);
            Ok(total)
        },
        &cfg.bounds,
        &cors_cfg,
    )?;

    let trace: Vec<TraceEntry> = result
        .trace
        .iter()
        .zip(&decompositions)
        .zip(&result.incumbent)
        .enumerate()
        .map(|(index, ((eval, value), &best_so_far))| TraceEntry {
            index,
            params: ChoiceParams::from_slice(&eval.x).expect("trace dimension checked"),
            flow_term: value.flow_term,
            kl_term: value.kl_term,
            total: value.total,
            best_so_far,
        })
        .collect();

    let best_index = trace
        .iter()
        .position(|t| t.total == result.best.value)
        .expect("best value is in the trace");

    Ok(CalibrationReport {
        best: trace[best_index].params,
        best_value: decompositions[best_index].clone(),
        trace,
        wt_star_size,
        warnings,
    })
}
