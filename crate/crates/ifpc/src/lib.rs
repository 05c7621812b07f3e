//! Simulation toolkit for integrated flight and propulsion control of a
//! turbojet-powered fixed-wing UAV.
//!
//! The crate is layered bottom-up:
//!
//! * [`simkit`]: RK4, angle wrapping, second-order command filters.
//! * [`environment`]: atmosphere, Mach number, inlet totals.
//! * [`airframe`]: 6-DOF wind-axis dynamics and their control-affine split.
//! * [`turbojet`]: component-level single-spool engine with map-based
//!   balance, trim and small-signal linearisation.
//! * [`estimation`]: extended disturbance observers.
//! * [`guidance`]: planner, backstepping direction loop, airspeed and fuel loop.
//! * [`harness`]: scenario files, closed-loop runs, ablations, logs.

pub mod airframe;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod guidance;
pub mod harness;
pub mod simkit;
pub mod turbojet;

pub use error::{Error, Result};
