use serde::{Deserialize, Serialize};

use super::{estimate_from_misses, Action, Decision, EvaluatedConfig, Observation, TimeModel};
use crate::error::{Error, Result};

/// Set states, largest first: state `k` keeps `1 / 2^k` of the sets.
pub const SET_STATES: [&str; 4] = ["full", "half", "quarter", "eighth"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncacheConfig {
    /// Largest estimated slowdown versus the full configuration, percent.
    pub max_slowdown_pct: f64,
}

impl Default for EncacheConfig {
    fn default() -> Self {
        Self { max_slowdown_pct: 3.0 }
    }
}

/// Set-and-way resizing of a shared cache driven by per-way profiles.
#[derive(Debug, Clone)]
pub struct Encache {
    pub config: EncacheConfig,
}

impl Encache {
    pub fn new(config: EncacheConfig) -> Result<Self> {
        if !(config.max_slowdown_pct >= 0.0) {
            return Err(Error::config("encache slowdown bound must be non-negative"));
        }
        Ok(Self { config })
    }

    /// Scores every (set state, ways) pair. Requires an emulator profiling the
    /// four set states (smallest point first) under LRU.
    pub fn decide(&mut self, obs: &Observation<'_>) -> Result<Decision> {
        let rce = obs
            .rce
            .ok_or_else(|| Error::config("encache needs the profiling emulator"))?;
        let points = rce.points().len();
        if points != SET_STATES.len() {
            return Err(Error::config("encache needs four set-state profiling points"));
        }
        let r = f64::from(rce.config().sample_ratio);
        let assoc = obs.assoc;
        let mut scored = Vec::new();
        for state in 0..SET_STATES.len() as u32 {
            let point = points - 1 - state as usize;
            for ways in (1..=assoc).rev() {
                let mut misses = Vec::with_capacity(obs.cores.len());
                let mut loads = Vec::with_capacity(obs.cores.len());
                for core in 0..obs.cores.len() {
                    let p = rce.way_profile(core, point, ways)?;
                    misses.push(p.misses as f64 * r);
                    loads.push(p.load_misses as f64 * r);
                }
                let fraction = f64::from(ways) / f64::from(assoc) / f64::from(1u32 << state);
                let est = estimate_from_misses(obs, misses, loads, fraction, f64::from(ways), TimeModel::Estimated);
                scored.push((state, ways, est));
            }
        }
        let reference = scored[0].2.time_seconds;
        let mut evaluated = Vec::with_capacity(scored.len());
        let mut best: Option<(f64, u32, u32)> = None;
        for (state, ways, est) in &scored {
            evaluated.push(EvaluatedConfig {
                config: vec![*state, *ways],
                energy_j: est.energy_j,
            });
            let slowdown = if reference > 0.0 {
                (est.time_seconds - reference) * 100.0 / reference
            } else {
                0.0
            };
            if slowdown > self.config.max_slowdown_pct {
                continue;
            }
            if best.map_or(true, |(e, _, _)| est.energy_j < e) {
                best = Some((est.energy_j, *state, *ways));
            }
        }
        let (_, state, ways) = best.expect("the full configuration always passes");
        let action = if state == obs.set_state && ways == obs.active_ways {
            Action::NoChange
        } else {
            Action::SetState { state, ways }
        };
        Ok(Decision {
            action,
            evaluated,
            limit_relaxed: false,
            slack: None,
        })
    }
}
