//! Reactive-mixing workbench: a bound-preserving reaction-dispersion solver
//! driven by an oscillating vortex flow, the mixing quantities of interest
//! it produces, and a suite of machine-learning emulators trained to replace
//! the solver.
//!
//! The numerical core ([`pde`], [`qoi`], [`linalg`], [`metrics`]) is generic
//! over [`Real`]; the aliases below fix the scalar to `f64` (or `f32` where a
//! `32` suffix says so).

pub mod campaign;
pub mod codec;
pub mod config;
pub mod emu;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pde;
pub mod qoi;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = pde::Mesh<f64>;
pub type Mesh32 = pde::Mesh<f32>;
pub type SimulationConfig = pde::SimulationConfig<f64>;
pub type SimulationConfig32 = pde::SimulationConfig<f32>;
pub type Trajectory = pde::Trajectory<f64>;
pub type Trajectory32 = pde::Trajectory<f32>;
pub type QoiSeries = qoi::QoiSeries<f64>;
pub type QoiSeries32 = qoi::QoiSeries<f32>;
