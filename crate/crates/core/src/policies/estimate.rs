use serde::{Deserialize, Serialize};

use super::Observation;
use crate::perf::{energy, estimate_cycles, EnergyInputs, EnergyMode};

/// How a candidate's interval time is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeModel {
    /// The interval length is taken as fixed; only leakage share and
    /// miss-driven energy vary.
    FixedInterval,
    /// Each core's time is re-estimated from its stall cycles per load miss;
    /// the interval lasts as long as the slowest core.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEstimate {
    pub energy_j: f64,
    pub core_cycles: Vec<f64>,
    pub time_seconds: f64,
    pub misses: Vec<f64>,
    pub load_misses: Vec<f64>,
}

/// Estimated interval energy if each core had `colors[n]` colors (its curve
/// evaluated there) and `active_colors` were powered.
pub fn estimate_config(obs: &Observation<'_>, colors: &[f64], active_colors: f64, time: TimeModel) -> ConfigEstimate {
    let misses: Vec<f64> = obs
        .curves
        .iter()
        .zip(colors)
        .map(|(c, &k)| c.interpolate_misses(k).value)
        .collect();
    let load_misses: Vec<f64> = obs
        .curves
        .iter()
        .zip(colors)
        .map(|(c, &k)| c.interpolate_load_misses(k).value)
        .collect();
    let fraction = active_colors / f64::from(obs.num_colors);
    estimate_from_misses(obs, misses, load_misses, fraction, f64::from(obs.assoc), time)
}

/// Estimated interval energy from explicit per-core miss estimates.
pub fn estimate_from_misses(
    obs: &Observation<'_>,
    misses: Vec<f64>,
    load_misses: Vec<f64>,
    active_fraction: f64,
    active_ways: f64,
    time: TimeModel,
) -> ConfigEstimate {
    let core_cycles: Vec<f64> = obs
        .cores
        .iter()
        .zip(&load_misses)
        .map(|(c, &lm)| estimate_cycles(c.base_cycles, c.spm, lm))
        .collect();
    let cycles = match time {
        TimeModel::FixedInterval => obs.interval_cycles,
        TimeModel::Estimated => core_cycles.iter().copied().fold(0.0, f64::max),
    };
    let time_seconds = cycles / obs.params.frequency_hz;
    let total_misses: f64 = misses.iter().sum();
    let accesses: f64 = obs.cores.iter().map(|c| c.accesses).sum();
    let writebacks: f64 = obs.cores.iter().map(|c| c.writebacks).sum();
    let inputs = EnergyInputs {
        hits: (accesses - total_misses).max(0.0),
        misses: total_misses,
        dram_accesses: total_misses + writebacks,
        rce_accesses: obs.rce_accesses,
        transitions: 0.0,
        active_fraction,
        active_ways,
        assoc: f64::from(obs.assoc),
        time_seconds,
    };
    ConfigEstimate {
        energy_j: energy(&inputs, obs.params, EnergyMode::Technique).total,
        core_cycles,
        time_seconds,
        misses,
        load_misses,
    }
}
