//! Event-based transit network simulation with self-calibrated path choice.
//!
//! The crate models a closed (tap-in/tap-out) rail system and estimates
//! passenger path-choice parameters from fare-collection style data:
//!
//! * [`network`] — stations, lines, timetables, and path choice sets with
//!   overlap (commonality) attributes,
//! * [`choice`] — C-logit choice probabilities, sampling, and the uniform /
//!   shortest-path benchmark rules,
//! * [`sim`] — event-based loading of passengers onto capacity-constrained
//!   trains with FCFS platform queues,
//! * [`calib`] — the exit-flow + KL-divergence objective and a CORS
//!   radial-basis-function surrogate optimizer,
//! * [`datagen`] — synthetic networks, Poisson demand, and ground-truth
//!   datasets produced by simulating a known parameter vector,
//! * [`io`] — the tabular and JSON file formats shared by the CLI.
//!
//! Numeric kernels (softmax, commonality factors, KL divergence, Latin
//! hypercube sampling, RBF interpolation, CORS search) are generic over a
//! [`Scalar`] so they run at `f32` or `f64`; the domain model is fixed to
//! [`Real`].

pub mod calib;
pub mod choice;
pub mod datagen;
pub mod error;
pub mod io;
pub mod network;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the domain model (times, distances, probabilities).
pub type Real = f64;
