//! Design and analysis of computer experiments whose inputs mix scalars
//! with bounded functions on [0,1].
//!
//! Functional inputs are represented by clamped B-spline coefficient
//! vectors, so L2 distances between curves reduce to quadratic forms on a
//! precomputed Gram matrix. On top of that the crate provides
//!
//! * space-filling "generalized Latin hypercube" designs built in two
//!   stages by simulated annealing ([`design`]),
//! * Gaussian-process surrogates whose kernels act on the functional
//!   distances, with an optional beta-density weighting that localizes
//!   which part of a functional input's domain matters ([`gp`]),
//! * the analytic test functions and replication studies used to validate
//!   the approach ([`testbed`]).

pub mod bspline;
pub mod design;
mod error;
pub mod gp;
pub mod metric;
pub mod testbed;

pub use bspline::{BSplineBasis, FunctionalCurve};
pub use design::{Design, SaConfig};
pub use error::{Error, Result};
pub use gp::{FitConfig, GpModel, GpParams, KernelFamily};
pub use metric::{RunPoint, WeightMatrix};
