//! Online learning of risk-aware upper bounds on model disturbances.
//!
//! A reduced-order model (here a single integrator) is run against a stochastic
//! true system. Every model step yields one sample of the disturbance norm at
//! the current model state. Batches of samples are turned into exact targets for
//! an upper bound on the Value-at-Risk of that norm (the *Surface-at-Risk*), and a
//! Gaussian process fitted to those targets gives a state-dependent bound that a
//! waypoint controller can reject.
//!
//! Modules:
//!
//! * [`riskcore`]: Value-at-Risk / Surface-at-Risk estimators and reference distributions.
//! * [`gpr`]: Gaussian process regression with cached Cholesky factor.
//! * [`sysmodel`]: true system, sim model, maps and disturbance-norm sampling.
//! * [`sarfit`]: batch fitting of the upper-bounding surface.
//! * [`control`]: baseline and risk-aware waypoint controllers.
//! * [`harness`]: two-phase experiments, reports, plot exports.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the simulator and harness use.

// `!(x > 0)` is how NaN parameters get rejected alongside non-positive ones
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod geometry;
pub mod gpr;
pub mod harness;
pub mod riskcore;
pub mod sarfit;
pub mod scalar;
pub mod sysmodel;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RiskLevel = riskcore::RiskLevel<f64>;
pub type SampleSet = riskcore::SampleSet<f64>;
pub type Kernel = gpr::SquaredExponential<f64>;
pub type GaussianProcess = gpr::GpPosterior<f64>;
pub type ConfidenceParams = gpr::ConfidenceParams<f64>;
pub type DisturbanceRecord = sysmodel::DisturbanceRecord<f64>;
pub type SarModel = sarfit::SarModel<f64>;
pub type FitConfig = sarfit::FitConfig<f64>;
pub type ControllerConfig = control::ControllerConfig<f64>;
pub type WaypointCourse = control::WaypointCourse<f64>;
