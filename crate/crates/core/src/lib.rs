//! Simulation of a one-step three-qubit holonomic gate in a chain of
//! fiber-linked cavities: pulse engineering, full and effective models,
//! unitary and dissipative dynamics, and gate-fidelity metrics.

pub mod dynamics;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod gates;
pub mod model;
pub mod sparse;
pub mod sta;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
