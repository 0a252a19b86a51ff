//! Black-box minimization by constrained optimization using response
//! surfaces (CORS): evaluate a space-filling design, fit an RBF surrogate,
//! then repeatedly evaluate the surrogate minimizer subject to a
//! minimum-distance constraint that cycles from global (a large fraction of
//! the box diagonal) to local (zero).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calib::rbf::RbfSurrogate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Latin hypercube sample of `n` points in the unit cube `[0, 1)^dim`:
/// each dimension is stratified into `n` intervals visited exactly once.
pub fn latin_hypercube<S: Scalar, R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<S>> {
    let mut samples = vec![vec![S::zero(); dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        // Fisher-Yates shuffle of the stratum order.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (i, sample) in samples.iter_mut().enumerate() {
            let u: f64 = rng.random();
            sample[d] = S::of((strata[i] as f64 + u) / n as f64);
        }
    }
    samples
}

#[derive(Debug, Clone)]
pub struct CorsConfig<S> {
    /// Total number of true-objective evaluations.
    pub budget: usize,
    /// Initial design size; defaults to `2 * (dim + 1)`.
    pub design_size: Option<usize>,
    pub seed: u64,
    /// Minimum-distance requirements as fractions of the unit-cube diagonal,
    /// cycled in order across refinement iterations (global to local).
    pub distance_cycle: Vec<S>,
    /// Random candidate points scored per refinement iteration.
    pub candidates: usize,
    /// Interpolation tolerance checked after each refit, per unit of the
    /// evaluated value range (values spanning less than one unit use the
    /// tolerance as an absolute bound).
    pub interp_tol: S,
}

impl<S: Scalar> Default for CorsConfig<S> {
    fn default() -> Self {
        CorsConfig {
            budget: 100,
            design_size: None,
            seed: 0,
            distance_cycle: vec![
                S::of(0.3),
                S::of(0.15),
                S::of(0.05),
                S::of(0.02),
                S::of(0.01),
                S::zero(),
                S::of(0.005),
                S::zero(),
            ],
            candidates: 3000,
            interp_tol: S::of(1e-6),
        }
    }
}

/// One true-objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub x: Vec<S>,
    pub value: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorsResult<S> {
    pub best: Evaluation<S>,
    /// Every evaluation in order.
    pub trace: Vec<Evaluation<S>>,
    /// Best value seen up to and including each trace entry.
    pub incumbent: Vec<S>,
    /// Largest interpolation error of any refit, measured at the evaluated
    /// points on the original value scale.
    pub max_interp_residual: S,
}

fn min_distance<S: Scalar>(x: &[S], points: &[Vec<S>]) -> S {
    points
        .iter()
        .map(|p| {
            let mut acc = S::zero();
            for (a, b) in x.iter().zip(p) {
                let d = *a - *b;
                acc = acc + d * d;
            }
            acc.sqrt()
        })
        .fold(S::infinity(), |a, b| if b < a { b } else { a })
}

/// The surrogate is fitted to `ln(1 + v - vmin)`: the objective often spans
/// orders of magnitude and the compressed scale keeps the basin geometry
/// visible to the interpolant.
struct LogScale<S> {
    vmin: S,
}

impl<S: Scalar> LogScale<S> {
    fn new(values: &[S]) -> Self {
        LogScale {
            vmin: values.iter().copied().fold(S::infinity(), S::min),
        }
    }

    fn forward(&self, v: S) -> S {
        (S::one() + (v - self.vmin)).ln()
    }

    fn back(&self, t: S) -> S {
        self.vmin + (t.exp() - S::one())
    }
}

/// Minimizes `objective` over a box, spending exactly `cfg.budget`
/// evaluations. Deterministic for a given seed.
pub fn cors_optimize<S: Scalar>(
    mut objective: impl FnMut(&[S]) -> Result<S>,
    bounds: &[(S, S)],
    cfg: &CorsConfig<S>,
) -> Result<CorsResult<S>> {
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::Config("empty bounds".to_string()));
    }
    for (lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(
                "bounds must be finite with lower < upper".to_string(),
            ));
        }
    }
    let design_size = cfg.design_size.unwrap_or(2 * (dim + 1));
    if cfg.budget < design_size {
        return Err(Error::Config(format!(
            "budget {} is below the initial design size {design_size}",
            cfg.budget
        )));
    }

    let denorm = |x: &[S]| -> Vec<S> {
        x.iter()
            .zip(bounds)
            .map(|(&u, (lo, hi))| *lo + u * (*hi - *lo))
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points: Vec<Vec<S>> = Vec::with_capacity(cfg.budget);
    let mut values: Vec<S> = Vec::with_capacity(cfg.budget);
    let mut trace = Vec::with_capacity(cfg.budget);
    let mut incumbent = Vec::with_capacity(cfg.budget);
    let mut best_idx = 0usize;

    let evaluate = |x_unit: Vec<S>,
                    points: &mut Vec<Vec<S>>,
                    values: &mut Vec<S>,
                    trace: &mut Vec<Evaluation<S>>,
                    incumbent: &mut Vec<S>,
                    best_idx: &mut usize,
                    objective: &mut dyn FnMut(&[S]) -> Result<S>|
     -> Result<()> {
        let x = denorm(&x_unit);
        let value = objective(&x)?;
        points.push(x_unit);
        values.push(value);
        trace.push(Evaluation { x, value });
        if values[*best_idx] > value {
            *best_idx = values.len() - 1;
        }
        incumbent.push(values[*best_idx]);
        Ok(())
    };

    for x in latin_hypercube::<S, _>(design_size, dim, &mut rng) {
        evaluate(x, &mut points, &mut values, &mut trace, &mut incumbent, &mut best_idx, &mut objective)?;
    }

    let diagonal = S::of_usize(dim).sqrt();
    let mut iteration = 0usize;
    let mut max_interp_residual = S::zero();
    while trace.len() < cfg.budget {
        let scale = LogScale::new(&values);
        let transformed: Vec<S> = values.iter().map(|&v| scale.forward(v)).collect();
        let surrogate = RbfSurrogate::fit(&points, &transformed)?;
        let residual = check_interpolation(&surrogate, &scale, &points, &values, cfg.interp_tol)?;
        if residual > max_interp_residual {
            max_interp_residual = residual;
        }

        let frac = cfg.distance_cycle[iteration % cfg.distance_cycle.len()];
        iteration += 1;
        let delta = frac * diagonal;

        let candidate = propose(&surrogate, &points, &points[best_idx], delta, cfg, &mut rng);
        evaluate(candidate, &mut points, &mut values, &mut trace, &mut incumbent, &mut best_idx, &mut objective)?;
    }

    Ok(CorsResult {
        best: trace[best_idx].clone(),
        trace,
        incumbent,
        max_interp_residual,
    })
}

/// Verifies the fitted surrogate reproduces the evaluated values. The guard
/// runs on the surrogate's own (log) scale; the returned residual is on the
/// original scale for reporting.
fn check_interpolation<S: Scalar>(
    surrogate: &RbfSurrogate<S>,
    scale: &LogScale<S>,
    points: &[Vec<S>],
    values: &[S],
    tol: S,
) -> Result<S> {
    let mut fit_residual = S::zero();
    let mut residual = S::zero();
    for (p, &v) in points.iter().zip(values) {
        let t = surrogate.predict(p);
        let rf = (t - scale.forward(v)).abs();
        if rf > fit_residual {
            fit_residual = rf;
        }
        let r = (scale.back(t) - v).abs();
        if r > residual {
            residual = r;
        }
    }
    let lo = values.iter().copied().fold(S::infinity(), S::min);
    let hi = values.iter().copied().fold(S::neg_infinity(), S::max);
    let log_range = (S::one() + (hi - lo)).ln();
    let allowed = tol * log_range.max(S::one());
    if fit_residual <= allowed {
        Ok(residual)
    } else {
        Err(Error::SurrogateDegenerate(format!(
            "interpolation residual {fit_residual} above tolerance {allowed}"
        )))
    }
}

/// Scores candidates against the surrogate and returns the best one at
/// least `delta` away from every evaluated point. Candidates mix global
/// uniform draws with Gaussian clouds and axial moves around the incumbent
/// at several scales, so both box corners and flat basins stay reachable.
/// Falls back to the most isolated candidate when none satisfies the
/// distance constraint.
fn propose<S: Scalar>(
    surrogate: &RbfSurrogate<S>,
    points: &[Vec<S>],
    best_point: &[S],
    delta: S,
    cfg: &CorsConfig<S>,
    rng: &mut ChaCha8Rng,
) -> Vec<S> {
    let dim = best_point.len();
    let n_uniform = cfg.candidates / 3;
    let n_local = cfg.candidates - n_uniform;
    let scales = [
        if delta > S::of(0.2) { delta } else { S::of(0.2) },
        S::of(0.05),
        S::of(0.015),
        S::of(0.004),
    ];

    let mut candidates: Vec<Vec<S>> = Vec::with_capacity(cfg.candidates + 8 * dim + 8);
    for _ in 0..n_uniform {
        candidates.push((0..dim).map(|_| clamp01(S::of(rng.random::<f64>()))).collect());
    }
    let per_scale = n_local / scales.len();
    for (si, &spread) in scales.iter().enumerate() {
        for i in 0..per_scale {
            let mut c = Vec::with_capacity(dim);
            for d in 0..dim {
                let u: f64 = rng.random();
                let step = S::of(2.0 * u - 1.0) * spread;
                c.push(clamp01(best_point[d] + step));
            }
            candidates.push(c);
            // Axial move: a single coordinate changes, at this scale.
            if i < 2 * dim {
                let d = i % dim;
                let sign = if i / dim == 0 { S::one() } else { -S::one() };
                let mut axial = best_point.to_vec();
                axial[d] = clamp01(axial[d] + sign * spread);
                candidates.push(axial);
            }
        }
        // A coordinate resampled uniformly reaches distant faces.
        if si == 0 {
            for d in 0..dim {
                let mut far = best_point.to_vec();
                far[d] = S::of(rng.random::<f64>());
                candidates.push(far);
            }
        }
    }

    // Floor on inter-point distance: the cubic kernel's conditioning
    // degrades like separation³, so packing tighter than this buys no
    // usable precision in f64.
    let min_sep = S::of(2e-3);
    let required = if delta > min_sep { delta } else { min_sep };
    let mut best_feasible: Option<(S, usize)> = None;
    let mut most_isolated: (S, usize) = (S::neg_infinity(), 0);
    for (i, c) in candidates.iter().enumerate() {
        let d = min_distance(c, points);
        if d > most_isolated.0 {
            most_isolated = (d, i);
        }
        if d < required {
            continue;
        }
        let s = surrogate.predict(c);
        match best_feasible {
            Some((bs, _)) if bs <= s => {}
            _ => best_feasible = Some((s, i)),
        }
    }
    let idx = best_feasible.map(|(_, i)| i).unwrap_or(most_isolated.1);
    candidates.swap_remove(idx)
}

/// Clamps into the open unit interval: exact bound values would pin a
/// coefficient to its box edge, which a finite-sample objective cannot
/// distinguish from nearby interior points anyway.
fn clamp01<S: Scalar>(x: S) -> S {
    let margin = S::of(1e-3);
    if x < margin {
        margin
    } else if x > S::one() - margin {
        S::one() - margin
    } else {
        x
    }
}
