//! Interval-driven simulation of a trace under one policy.

mod config;
mod report;
mod run;

pub use config::{
    BaselineMode, CacheOverrides, EnergyOverrides, IntervalConfig, IntervalMode, Overheads, PolicyName, ScenarioConfig,
};
pub use report::{compare, totals_from_records, Comparison, CoreInterval, CoreLedger, IntervalRecord, MidInterval, RunReport};
pub use run::{check_compatible, run, run_baseline};
