//! Susceptibility functions of piecewise expanding unimodal interval maps.

pub mod acim;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod map;
pub mod observable;
pub mod response;
pub mod right_limits;
pub mod run;
pub mod scenario;
pub mod series;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
