use serde::{Deserialize, Serialize};

use super::{
    allocate_or_keep, band_candidates, estimate_config, Action, Decision, EvaluatedConfig, Observation, TimeModel,
};
use crate::error::{Error, Result};
use crate::perf::{energy, EnergyInputs, EnergyMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasterConfig {
    /// Candidate color values generated per core.
    pub t_max: usize,
    /// Values kept per core after pruning; defaults to `t_max` for up to two
    /// cores and 2 otherwise.
    pub t_keep: Option<usize>,
    pub thresholds: [f64; 4],
    /// Minimum colors per core; defaults to `M / 64` (at least 1).
    pub min_colors: Option<u32>,
    pub vicinity: u32,
    /// Required relative improvement over the current configuration, percent.
    pub improve_min_pct: f64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            t_max: 4,
            t_keep: None,
            thresholds: [50.0, 200.0, 300.0, 1000.0],
            min_colors: None,
            vicinity: 10,
            improve_min_pct: 0.3,
        }
    }
}

impl MasterConfig {
    pub fn min_for(&self, m: u32) -> u32 {
        self.min_colors.unwrap_or((m / 64).max(1))
    }

    pub fn keep_for(&self, cores: usize) -> usize {
        self.t_keep.unwrap_or(if cores <= 2 { self.t_max } else { 2 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 || self.t_max > 4 {
            return Err(Error::config("master t_max must be in 1..=4"));
        }
        if self.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("master thresholds must be ascending"));
        }
        Ok(())
    }
}

/// Partitioned energy-saving search over per-core color counts.
#[derive(Debug, Clone)]
pub struct Master {
    pub config: MasterConfig,
}

impl Master {
    pub fn new(config: MasterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Candidate values per core after pruning.
    pub fn candidate_values(&self, obs: &Observation<'_>) -> Vec<Vec<u32>> {
        let m = obs.num_colors;
        let n = obs.counts.len() as u32;
        let min = self.config.min_for(m);
        let keep = self.config.keep_for(obs.counts.len()).min(self.config.t_max);
        obs.counts
            .iter()
            .enumerate()
            .map(|(core, &c)| {
                let lo = min.max(c.saturating_sub(self.config.vicinity));
                let hi = (m.saturating_sub((n - 1) * min)).min(c + self.config.vicinity);
                let gain = obs.curves[core].mcu(f64::from(c));
                let mut vals = band_candidates(c, gain, &self.config.thresholds, lo, hi);
                vals.truncate(self.config.t_max);
                if keep < vals.len() {
                    let mut scored: Vec<(f64, u32)> =
                        vals.iter().map(|&v| (core_energy(obs, core, v), v)).collect();
                    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    vals = scored.into_iter().take(keep).map(|(_, v)| v).collect();
                    vals.sort_unstable();
                }
                vals
            })
            .collect()
    }

    pub fn decide(&mut self, obs: &Observation<'_>) -> Decision {
        let m = obs.num_colors;
        let per_core = self.candidate_values(obs);
        let estimate = |cfg: &[u32]| {
            let colors: Vec<f64> = cfg.iter().map(|&c| f64::from(c)).collect();
            estimate_config(obs, &colors, colors.iter().sum(), TimeModel::FixedInterval).energy_j
        };
        let current = obs.counts.to_vec();
        let current_energy = estimate(&current);
        let mut evaluated = vec![EvaluatedConfig {
            config: current.clone(),
            energy_j: current_energy,
        }];
        let mut best: Option<(f64, Vec<u32>)> = None;
        for cfg in cross_product(&per_core) {
            if cfg.iter().sum::<u32>() > m {
                continue;
            }
            let e = estimate(&cfg);
            evaluated.push(EvaluatedConfig {
                config: cfg.clone(),
                energy_j: e,
            });
            if best.as_ref().map_or(true, |(b, _)| e < *b) {
                best = Some((e, cfg));
            }
        }
        let action = match best {
            Some((e, cfg)) if e <= current_energy * (1.0 - self.config.improve_min_pct / 100.0) => {
                allocate_or_keep(&current, cfg)
            }
            _ => Action::NoChange,
        };
        Decision {
            action,
            evaluated,
            limit_relaxed: false,
            slack: None,
        }
    }
}

/// One core's share of memory-subsystem energy at `colors`, over a fixed
/// interval, with writebacks taken as unchanged and therefore left out.
pub(crate) fn core_energy(obs: &Observation<'_>, core: usize, colors: u32) -> f64 {
    let miss = obs.curves[core].interpolate_misses(f64::from(colors)).value;
    let acc = obs.cores[core].accesses;
    let inputs = EnergyInputs {
        hits: (acc - miss).max(0.0),
        misses: miss,
        dram_accesses: miss,
        active_fraction: f64::from(colors) / f64::from(obs.num_colors),
        active_ways: f64::from(obs.assoc),
        assoc: f64::from(obs.assoc),
        time_seconds: obs.interval_cycles / obs.params.frequency_hz,
        ..EnergyInputs::default()
    };
    let e = energy(&inputs, obs.params, EnergyMode::Technique);
    // DRAM leakage and emulator energy are common to every value
    e.le_l2 + e.de_l2 + obs.params.dram_dyn_nj * 1e-9 * miss
}

/// All combinations, first core varying slowest.
pub(crate) fn cross_product(sets: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![Vec::new()];
    for set in sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}
