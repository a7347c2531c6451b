use serde::{Deserialize, Serialize};

use super::Action;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WacConfig {
    pub shrink_below: f64,
    pub grow_above: f64,
    /// Cache hits between checks.
    pub check_hits: u64,
    pub min_ways: u32,
}

impl Default for WacConfig {
    fn default() -> Self {
        Self {
            shrink_below: 0.005,
            grow_above: 0.02,
            check_hits: 100_000,
            min_ways: 2,
        }
    }
}

/// Way-adaptable cache: grows or shrinks active ways from the ratio of hits
/// in the least-recently-used active way to hits in the MRU way.
#[derive(Debug, Clone)]
pub struct Wac {
    pub config: WacConfig,
    assoc: u32,
    /// Hits by recency position, 1-based positions at index `k - 1`.
    position_hits: Vec<u64>,
    hits: u64,
}

impl Wac {
    pub fn new(config: WacConfig, assoc: u32) -> Result<Self> {
        if config.shrink_below > config.grow_above || config.check_hits == 0 {
            return Err(Error::config("wac thresholds must be ordered and check_hits positive"));
        }
        if config.min_ways == 0 || config.min_ways > assoc {
            return Err(Error::config("wac min_ways out of range"));
        }
        Ok(Self {
            config,
            assoc,
            position_hits: vec![0; assoc as usize],
            hits: 0,
        })
    }

    /// Records a hit; returns true when a check is due.
    pub fn observe_hit(&mut self, position: u32) -> bool {
        self.position_hits[(position - 1) as usize] += 1;
        self.hits += 1;
        self.hits >= self.config.check_hits
    }

    /// Decides from the counters gathered since the last check and clears them.
    pub fn check(&mut self, active_ways: u32) -> Action {
        let mru = self.position_hits[0];
        let lru = self.position_hits[(active_ways - 1) as usize];
        self.position_hits.iter_mut().for_each(|h| *h = 0);
        self.hits = 0;
        decide_ways(&self.config, self.assoc, active_ways, lru, mru)
    }
}

pub(crate) fn decide_ways(cfg: &WacConfig, assoc: u32, active: u32, lru_hits: u64, mru_hits: u64) -> Action {
    if mru_hits == 0 {
        return Action::NoChange;
    }
    let z = lru_hits as f64 / mru_hits as f64;
    if z < cfg.shrink_below && active > cfg.min_ways {
        Action::Ways(active - 1)
    } else if z > cfg.grow_above && active < assoc {
        Action::Ways(active + 1)
    } else {
        Action::NoChange
    }
}
