//! Case configuration, metrics, output and study drivers.

pub mod cases;
pub mod config;
pub mod io;
pub mod metrics;
