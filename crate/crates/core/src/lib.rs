//! Deterministic simulation of scalar event-triggered extremum seeking.
//!
//! Implements the Newton-based scheme (with a Riccati Hessian-inverse
//! filter) and the gradient-based baseline on a quadratic static map, with
//! a static event trigger in the actuation path, plus the averaged
//! closed-loop system used as the analysis oracle and the post-run checks
//! for the associated stability claims.
//!
//! Everything is plain `f64` arithmetic with no randomness: identical
//! configurations produce bit-identical trajectories and event logs.
//!
//! ```
//! use etes::*;
//!
//! let dither = Dither::new(0.1, 3.0)?;
//! let cfg = SimConfig {
//!     map: MapParams::new(7.0, -0.15, 5.0)?,
//!     dither,
//!     gains: Gains::new(18.0, 1.0)?,
//!     trigger: TriggerConfig::new(0.9, 1.0, 1e-9)?,
//!     scheme: Scheme::Newton,
//!     demod: DemodMode::Instantaneous,
//!     extremum: ExtremumKind::Maximum,
//!     theta_hat0: 2.0,
//!     gamma0: -0.1,
//!     dt: dither.period() / 200.0,
//!     t_end: 500.0,
//!     record_stride: 10,
//!     storm_cap: None,
//! };
//! let out = sim::run_average(&cfg, AverageVariant::Nonlinear)?;
//! assert!(out.completed());
//! let last = out.trajectory.last().unwrap();
//! assert!((last.theta - 5.0).abs() < 1e-6);        // at the extremum
//! assert!((last.gamma - (-1.0 / 0.15)).abs() < 1e-6); // Hessian inverse
//! # Ok::<(), etes::SimError>(())
//! ```

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod etc;
pub mod plant;
pub mod sim;

pub use error::{ConfigError, SimError};
pub use estimators::Gains;
pub use etc::{HoldState, TriggerConfig};
pub use plant::{Dither, MapParams};
pub use sim::{
    AverageVariant, DemodMode, EventLog, ExtremumKind, Sample, Scheme, SimConfig, SimOutput,
    Termination, Trajectory,
};
