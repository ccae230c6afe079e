//! Semblance velocity analysis for CMP and CRS stacking.

pub mod bench;
pub mod cache;
pub mod cli;
pub mod cmp;
pub mod crs;
pub mod data;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod output;
pub mod traveltime;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
