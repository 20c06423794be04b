//! Symbol-error-rate analysis and simulation of clipped OFDM links driven by
//! nonlinear power amplifiers.
//!
//! The analytic chain runs `clipping` and `bfpa` coefficients through
//! `link_analysis` to a Rayleigh-averaged SER, `optimize` searches the
//! operating point and clipping level, and `simulator` checks everything by
//! Monte Carlo.

pub mod bfpa;
pub mod clipping;
pub mod error;
pub mod imp_count;
pub mod link_analysis;
pub mod optimize;
pub mod simulator;
pub mod specfun;

pub use error::{Error, Result};
