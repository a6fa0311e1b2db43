//! Post-silicon performance bug localization from hardware counter traces.

pub mod cbc;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod error;
mod fsio;
pub mod label;
pub mod ml;
pub mod p2bc;
pub mod score;
pub mod select;
pub mod simgen;
pub mod trace;

pub use error::{Error, Result};
pub use label::{UnitLabel, UNITS};
