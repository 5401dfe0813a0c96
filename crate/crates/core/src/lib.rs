//! Highway merge planning.
//!
//! The pipeline has three stages:
//!
//! 1. [`opportunity`] samples ego accelerations and adjustment times, predicts
//!    the traffic with [`prediction`], and decides whether the ego is in a
//!    position to start merging.
//! 2. [`planner`] sweeps the terminal time of the manoeuvre, builds one lateral
//!    and one longitudinal quadratic program per sample, solves them with
//!    [`qp`] and keeps the cheapest pair of polynomials.
//! 3. [`smoother`] post-processes the resulting trajectory with a
//!    per-point gradient descent that lowers curvature while staying inside a
//!    buffer band around the original.
//!
//! [`simulator`] closes the loop with point-mass kinematics, and [`config`]
//! holds the scenario file schema shared with the command-line tool.

pub mod config;
pub mod frenet;
pub mod io;
pub mod opportunity;
pub mod planner;
pub mod poly;
pub mod prediction;
pub mod qp;
pub mod simulator;
pub mod smoother;
pub mod trajectory;

pub use frenet::{Point2, ReferenceLine};
pub use poly::Polynomial;
pub use trajectory::{Trajectory, TrajectoryPoint};

use thiserror::Error;

/// Errors shared by the geometric building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polynomial must have 5 or 6 coefficients, got {0}")]
    CoefficientCount(usize),
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("t = {t} lies outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
    #[error("derivative order {0} not supported (0..=3)")]
    Order(usize),
    #[error("lane width must be positive, got {0}")]
    LaneWidth(f64),
    #[error("trajectory needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("trajectory sampling step must be positive, got {0}")]
    Step(f64),
    #[error("trajectory times must be uniformly spaced and increasing (index {0})")]
    NonUniform(usize),
    #[error("coincident consecutive points at index {0}")]
    Degenerate(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
