//! Cubic radial-basis-function interpolation with a linear polynomial tail.
//!
//! The interpolant is `s(x) = Σ λ_k φ(‖x − x_k‖) + c_0 + c·x` with
//! `φ(r) = r³`, fitted by solving the saddle-point system
//!
//! ```text
//! | Φ  P | |λ|   |f|
//! | Pᵀ 0 | |c| = |0|
//! ```
//!
//! where `P = [1, x_k]`. The linear tail makes the system unconditionally
//! solvable for distinct centers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct RbfSurrogate<S> {
    centers: Vec<Vec<S>>,
    weights: Vec<S>,
    /// `[c_0, c_1, ..., c_d]`.
    tail: Vec<S>,
}

fn distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc.sqrt()
}

/// Copies the point set, displacing any point that coincides with an
/// earlier one so every center is distinct.
fn jitter_duplicates<S: Scalar>(points: &[Vec<S>]) -> Vec<Vec<S>> {
    let eps = S::of(1e-7);
    let near = S::of(1e-9);
    let mut out: Vec<Vec<S>> = Vec::with_capacity(points.len());
    for p in points {
        let mut candidate = p.clone();
        let mut bump = S::one();
        while out.iter().any(|q| distance(q, &candidate) < near) {
            for (k, v) in candidate.iter_mut().enumerate() {
                *v = *v + eps * bump * S::of_usize(k + 1);
            }
            bump = bump + S::one();
        }
        out.push(candidate);
    }
    out
}

/// Gaussian elimination with partial pivoting. Returns `None` when the
/// matrix is numerically singular.
fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            let v = a[row][col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if !(best > S::zero()) || !best.is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == S::zero() {
                continue;
            }
            for k in col..n {
                let delta = factor * a[col][k];
                a[row][k] = a[row][k] - delta;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

impl<S: Scalar> RbfSurrogate<S> {
    /// Fits an interpolant through `(points[i], values[i])`. When the plain
    /// system is singular, duplicate centers are perturbed and the fit
    /// retried; a full-diagonal ridge is the last resort.
    pub fn fit(points: &[Vec<S>], values: &[S]) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::SurrogateDegenerate(
                "need one value per point".to_string(),
            ));
        }
        let dim = points[0].len();
        if let Some(model) = Self::fit_exact(points, values, S::zero()) {
            return Ok(model);
        }
        let jittered = jitter_duplicates(points);
        if let Some(model) = Self::fit_exact(&jittered, values, S::zero()) {
            return Ok(model);
        }
        Self::fit_exact(&jittered, values, S::of(1e-10)).ok_or_else(|| {
            Error::SurrogateDegenerate(format!(
                "singular system for {} points in {} dims",
                points.len(),
                dim
            ))
        })
    }

    fn fit_exact(points: &[Vec<S>], values: &[S], ridge: S) -> Option<Self> {
        let n = points.len();
        let dim = points[0].len();
        let m = n + dim + 1;
        let mut a = vec![vec![S::zero(); m]; m];
        let mut b = vec![S::zero(); m];
        for i in 0..n {
            for j in 0..n {
                let r = distance(&points[i], &points[j]);
                a[i][j] = r * r * r;
            }
            a[i][n] = S::one();
            a[n][i] = S::one();
            for k in 0..dim {
                a[i][n + 1 + k] = points[i][k];
                a[n + 1 + k][i] = points[i][k];
            }
            b[i] = values[i];
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = row[i] + ridge;
        }
        let solution = solve_dense(a, b)?;
        Some(RbfSurrogate {
            centers: points.to_vec(),
            weights: solution[..n].to_vec(),
            tail: solution[n..].to_vec(),
        })
    }

    pub fn predict(&self, x: &[S]) -> S {
        let mut acc = self.tail[0];
        for (k, &c) in self.tail[1..].iter().enumerate() {
            acc = acc + c * x[k];
        }
        for (center, &w) in self.centers.iter().zip(&self.weights) {
            let r = distance(center, x);
            acc = acc + w * r * r * r;
        }
        acc
    }

    /// Largest absolute interpolation error over the fitted points.
    pub fn max_residual(&self, points: &[Vec<S>], values: &[S]) -> S {
        points
            .iter()
            .zip(values)
            .map(|(p, &v)| (self.predict(p) - v).abs())
            .fold(S::zero(), |a, b| if b > a { b } else { a })
    }
}
