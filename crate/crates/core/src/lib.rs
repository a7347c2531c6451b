//! Trace-driven multicore last-level-cache simulator with cache-coloring
//! reconfiguration, set-sampled profiling, a memory-subsystem energy model and
//! a family of leakage-energy saving policies.

pub mod cache;
pub mod coloring;
pub mod error;
pub mod harness;
pub mod perf;
pub mod policies;
pub mod textfmt;
pub mod workload;
pub mod profiler;

pub use error::{Error, Result};
