//! Fault-tolerant control toolkit for a 2DOF bi-rotor helicopter.
//!
//! The crate closes the loop between an LQR-controlled LTI plant,
//! multiplicative actuator fault injection, an augmented-state Kalman filter
//! that estimates per-rotor loss of control effectiveness, and an
//! accommodation law that restores nominal tracking. A deterministic
//! scenario runner records traces, and a metrics engine evaluates rise time,
//! overshoot, steady-state error, vibration, and natural frequency.

pub mod accommodation;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod lqr;
pub mod metrics;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
