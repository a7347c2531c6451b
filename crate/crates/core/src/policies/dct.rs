use serde::{Deserialize, Serialize};

use crate::cache::CacheState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DctConfig {
    /// Idle cycles before a line is gated off; derived from the energy
    /// constants when absent.
    pub decay_interval: Option<f64>,
    /// How often idle lines are swept, in global cycles; defaults to an
    /// eighth of the decay interval.
    pub tick_cycles: Option<f64>,
}

impl Default for DctConfig {
    fn default() -> Self {
        Self {
            decay_interval: None,
            tick_cycles: None,
        }
    }
}

/// Per-line decay: lines idle for a full decay interval are gated off.
#[derive(Debug, Clone)]
pub struct Dct {
    decay_interval: f64,
    tick_cycles: f64,
    assoc: u32,
    last_access: Vec<f64>,
}

impl Dct {
    pub fn new(decay_interval: f64, tick_cycles: f64, sets: u64, assoc: u32) -> Result<Self> {
        if !(decay_interval > 0.0) || !(tick_cycles > 0.0) {
            return Err(Error::config("decay interval and tick must be positive"));
        }
        Ok(Self {
            decay_interval,
            tick_cycles,
            assoc,
            last_access: vec![0.0; (sets * u64::from(assoc)) as usize],
        })
    }

    pub fn decay_interval(&self) -> f64 {
        self.decay_interval
    }

    pub fn tick_cycles(&self) -> f64 {
        self.tick_cycles
    }

    pub fn observe(&mut self, set: u64, way: u32, now: f64) {
        self.last_access[(set * u64::from(self.assoc) + u64::from(way)) as usize] = now;
    }

    /// Powered lines idle for at least the decay interval.
    pub fn tick(&self, now: f64, cache: &CacheState) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        for (i, &last) in self.last_access.iter().enumerate() {
            let set = i as u64 / u64::from(self.assoc);
            let way = (i as u64 % u64::from(self.assoc)) as u32;
            if now - last >= self.decay_interval && !cache.is_decayed(set, way) {
                out.push((set, way));
            }
        }
        out
    }
}
