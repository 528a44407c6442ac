//! Time-tag simulation and analysis for heralded multi-photon correlation
//! experiments.

pub mod analysis;
pub mod budget;
pub mod cli;
pub mod config;
pub mod correlator;
pub mod detector;
pub mod error;
pub mod nonclassicality;
pub mod pipeline;
pub mod rng;
pub mod source;
pub mod timetag;

pub use error::{Error, Result};
pub use timetag::{TagStream, TimeTag};
