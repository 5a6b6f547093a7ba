//! Coverage probability and ergodic rate of mmWave networks assisted by
//! distributed reconfigurable intelligent surfaces. Two engines are provided:
//! a quadrature engine over the stochastic-geometry model and a Monte Carlo
//! simulator over sampled scenes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod geom;
pub mod interp;
pub mod mc;
pub mod multi_cell;
pub mod params;
pub mod quad;
pub mod runner;
pub mod single_cell;

pub use error::{Error, Result};
pub use params::{ParamsConfig, Scenario, SystemParams};
