//! Simulation, joint state estimation, intrusion detection and stealthy
//! false-data-injection attack synthesis for power grids modeled as
//! nonlinear differential-algebraic systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod case;
pub mod data;
pub mod detectors;
pub mod error;
pub mod harness;
mod linalg;
pub mod observer;
pub mod sim;

pub use error::{Error, Result};
