//! Arterial Windkessel toolkit: deterministic WK2/WK3 simulation, synthetic
//! data generation, nonlinear least-squares fitting, Gaussian-process
//! regression and Bayesian calibration of the WK2 model with an explicit
//! model-discrepancy term.

pub mod calibration;
pub mod config;
pub mod error;
pub mod gp;
pub mod inflow;
pub mod io;
pub mod nls;
pub mod optim;
pub mod stats;
pub mod synthetic;
pub mod windkessel;

pub use error::{Error, Result};
