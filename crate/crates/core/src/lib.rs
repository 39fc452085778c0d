//! Hierarchical jumping controller for quadruped robots.
//!
//! The crate contains the low-level leg controller (phase-based gait
//! generator, closed-form and QP ground reaction force solvers, Raibert swing
//! controller), a centroidal rigid-body simulator that runs it at 500 Hz, and
//! the continuous-jumping environment driven by a high-level centroidal
//! policy at 100 Hz.

pub mod bench;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod gait;
pub mod kinematics;
pub mod log;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
