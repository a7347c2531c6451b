use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stall cycles per load miss; zero when there were no load misses.
pub fn spm(stall_cycles: f64, load_misses: f64) -> Result<f64> {
    if stall_cycles < 0.0 || load_misses < 0.0 || stall_cycles.is_nan() || load_misses.is_nan() {
        return Err(Error::config("stall cycles and load misses must be non-negative"));
    }
    Ok(if load_misses == 0.0 { 0.0 } else { stall_cycles / load_misses })
}

pub fn estimate_cycles(base_cycles: f64, spm: f64, load_misses: f64) -> f64 {
    base_cycles + spm * load_misses
}

/// Ground-truth core clock: compute cycles plus overlapped miss stalls.
pub fn simulate_cycles(instructions: f64, load_misses: f64, base_cpi: f64, miss_penalty: f64, overlap: f64) -> f64 {
    instructions * base_cpi + load_misses * miss_penalty * overlap
}

/// Static timing parameters of one core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreTiming {
    pub base_cpi: f64,
    pub miss_penalty: f64,
    pub overlap: f64,
}

impl Default for CoreTiming {
    fn default() -> Self {
        Self {
            base_cpi: 1.0,
            miss_penalty: 200.0,
            overlap: 1.0,
        }
    }
}

impl CoreTiming {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_cpi > 0.0 && self.base_cpi.is_finite()) {
            return Err(Error::config("base_cpi must be positive"));
        }
        if !(self.miss_penalty >= 0.0 && self.miss_penalty.is_finite()) {
            return Err(Error::config("miss_penalty must be non-negative"));
        }
        if !(self.overlap > 0.0 && self.overlap <= 1.0) {
            return Err(Error::config("overlap must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn stall_per_load_miss(&self) -> f64 {
        self.miss_penalty * self.overlap
    }
}

/// A core clock kept as exact integer components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoreClock {
    pub instructions: u64,
    pub load_misses: u64,
    pub overhead_cycles: u64,
}

impl CoreClock {
    pub fn cycles(&self, t: &CoreTiming) -> f64 {
        simulate_cycles(
            self.instructions as f64,
            self.load_misses as f64,
            t.base_cpi,
            t.miss_penalty,
            t.overlap,
        ) + self.overhead_cycles as f64
    }

    /// Compute-only cycles (no stalls), including overheads.
    pub fn base_cycles(&self, t: &CoreTiming) -> f64 {
        self.instructions as f64 * t.base_cpi + self.overhead_cycles as f64
    }

    pub fn since(&self, earlier: &CoreClock) -> CoreClock {
        CoreClock {
            instructions: self.instructions - earlier.instructions,
            load_misses: self.load_misses - earlier.load_misses,
            overhead_cycles: self.overhead_cycles - earlier.overhead_cycles,
        }
    }
}
