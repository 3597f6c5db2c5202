//! Scalar stop operator with Kurzweil-Stieltjes calculus, directional
//! derivatives, strong stationarity checks and optimal control.

pub mod control;
pub mod error;
pub mod grid;
pub mod hysteresis;
pub mod instances;
pub mod ksint;
pub mod scenario;
pub mod selftest;
pub mod sensitivity;
pub mod smooth;
pub mod stationarity;

pub use error::{Error, Result};
