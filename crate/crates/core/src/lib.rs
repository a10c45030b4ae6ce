//! Analytical energy, throughput and mapping-space exploration for SRAM
//! in-memory-computing macros (analog and digital).

pub mod dse;
pub mod error;
pub mod fixtures;
pub mod imc_cost;
pub mod mapping;
pub mod tech_model;
pub mod workload;

pub use error::{Error, Result};
