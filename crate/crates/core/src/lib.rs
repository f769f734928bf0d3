//! Robust control barrier function verification and synthesis through
//! polynomial optimization and moment-SOS relaxations.

pub mod benchmarks;
pub mod error;
pub mod model;
pub mod momentrelax;
pub mod polyalg;
pub mod popbuild;
pub mod synth;

pub use error::{CoreError, Result};
