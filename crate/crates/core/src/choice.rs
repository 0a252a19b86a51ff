//! C-logit path choice: probabilities, sampling, and benchmark rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ChoiceSet, StationId};
use crate::scalar::Scalar;
use crate::Real;

/// Choice-model coefficients: one per path attribute plus the commonality
/// coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceParams {
    pub in_vehicle_time: Real,
    pub relative_walk_time: Real,
    pub n_transfers: Real,
    pub commonality: Real,
}

impl ChoiceParams {
    pub const DIM: usize = 4;

    pub fn zero() -> Self {
        ChoiceParams {
            in_vehicle_time: 0.0,
            relative_walk_time: 0.0,
            n_transfers: 0.0,
            commonality: 0.0,
        }
    }

    pub fn from_slice(v: &[Real]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::Config(format!(
                "expected {} coefficients, got {}",
                Self::DIM,
                v.len()
            )));
        }
        Ok(ChoiceParams {
            in_vehicle_time: v[0],
            relative_walk_time: v[1],
            n_transfers: v[2],
            commonality: v[3],
        })
    }

    pub fn as_array(&self) -> [Real; 4] {
        [
            self.in_vehicle_time,
            self.relative_walk_time,
            self.n_transfers,
            self.commonality,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|c| c.is_finite())
    }
}

/// Per-path choice probabilities for one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProbabilities {
    pub od: (StationId, StationId),
    pub probs: Vec<Real>,
}

/// Numerically stable softmax: subtracts the maximum before exponentiation,
/// so utilities up to |1e4| do not overflow.
pub fn softmax_stable<S: Scalar>(utilities: &[S]) -> Vec<S> {
    let max = utilities
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<S> = utilities.iter().map(|&u| (u - max).exp()).collect();
    let total = exps.iter().fold(S::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

/// Systematic utility of each path in a choice set.
pub fn utilities(set: &ChoiceSet, params: &ChoiceParams) -> Result<Vec<Real>> {
    if !params.is_finite() {
        return Err(Error::NonFiniteUtility { index: 0 });
    }
    let mut out = Vec::with_capacity(set.paths.len());
    for (i, path) in set.paths.iter().enumerate() {
        let x = path.attributes.as_vector();
        let u = params.in_vehicle_time * x[0]
            + params.relative_walk_time * x[1]
            + params.n_transfers * x[2]
            + params.commonality * path.commonality;
        if !u.is_finite() {
            return Err(Error::NonFiniteUtility { index: i });
        }
        out.push(u);
    }
    Ok(out)
}

/// C-logit probabilities over a choice set.
pub fn choice_probabilities(set: &ChoiceSet, params: &ChoiceParams) -> Result<PathProbabilities> {
    if set.is_empty() {
        return Err(Error::Config("empty choice set".to_string()));
    }
    let u = utilities(set, params)?;
    Ok(PathProbabilities {
        od: set.od,
        probs: softmax_stable(&u),
    })
}

/// Index drawn by inverse CDF at a uniform variate `u ∈ [0, 1)`.
///
/// Exposed separately from [`sample_path`] so callers can hold the variate
/// fixed across parameter values (common random numbers).
pub fn sample_index_at(probs: &[Real], u: Real) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples a path index from the given probabilities.
pub fn sample_path<R: Rng + ?Sized>(probabilities: &PathProbabilities, rng: &mut R) -> usize {
    sample_index_at(&probabilities.probs, rng.random::<Real>())
}

/// Index of the minimum in-vehicle-time path, ties broken by fewest
/// transfers and then lexicographic leg order.
pub fn shortest_path_index(set: &ChoiceSet) -> usize {
    let mut best = 0;
    for i in 1..set.paths.len() {
        let a = &set.paths[i];
        let b = &set.paths[best];
        let ord = a
            .attributes
            .in_vehicle_time_min
            .total_cmp(&b.attributes.in_vehicle_time_min)
            .then_with(|| a.attributes.n_transfers.cmp(&b.attributes.n_transfers))
            .then_with(|| a.legs.cmp(&b.legs));
        if ord == std::cmp::Ordering::Less {
            best = i;
        }
    }
    best
}

/// How passengers are assigned to paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathChoice {
    /// C-logit with the given coefficients.
    Params(ChoiceParams),
    /// Deterministic assignment to the minimum in-vehicle-time path.
    ShortestPath,
}

/// Benchmark assignment rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// Equal probability over all paths of the choice set (all-zero β).
    Uniform,
    /// Everyone on the minimum in-vehicle-time path.
    ShortestPath,
}

pub fn benchmark_params(kind: Benchmark) -> PathChoice {
    match kind {
        Benchmark::Uniform => PathChoice::Params(ChoiceParams::zero()),
        Benchmark::ShortestPath => PathChoice::ShortestPath,
    }
}
