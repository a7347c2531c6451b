use serde::{Deserialize, Serialize};

use super::master::cross_product;
use super::{
    allocate_or_keep, band_candidates, estimate_config, Action, Decision, EvaluatedConfig, Observation,
    SlackSnapshot, TimeModel,
};
use crate::error::{Error, Result};
use crate::perf::estimate_cycles;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerConfig {
    /// Core whose slowdown is bounded.
    pub target: Option<usize>,
    /// Allowed slowdown of the target, percent.
    pub omega_pct: f64,
    /// Safety margin below `omega_pct`, percent.
    pub margin_pct: f64,
    /// Minimum colors per core; defaults to `M / 32`.
    pub min_colors: Option<u32>,
    /// Largest change of one core's colors per interval.
    pub max_transfer: u32,
    pub thresholds: [f64; 4],
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            target: Some(0),
            omega_pct: 5.0,
            margin_pct: 0.4,
            min_colors: None,
            max_transfer: 12,
            thresholds: [50.0, 200.0, 300.0, 1000.0],
        }
    }
}

impl ManagerConfig {
    pub fn min_for(&self, m: u32) -> u32 {
        self.min_colors.unwrap_or((m / 32).max(1))
    }
}

/// Partitioned energy saving with a slowdown bound on one target core,
/// measured against an equal static partition.
#[derive(Debug, Clone)]
pub struct Manager {
    pub config: ManagerConfig,
    target: usize,
    extra: f64,
    history: Vec<f64>,
}

impl Manager {
    pub fn new(config: ManagerConfig, cores: usize) -> Result<Self> {
        let target = config
            .target
            .ok_or_else(|| Error::config("manager needs a target core"))?;
        if target >= cores {
            return Err(Error::config(format!("manager target core {target} does not exist")));
        }
        if config.thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("manager thresholds must be ascending"));
        }
        if !(config.omega_pct >= 0.0) {
            return Err(Error::config("manager omega must be non-negative"));
        }
        Ok(Self {
            config,
            target,
            extra: 0.0,
            history: Vec::new(),
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Accumulated estimated extra time of the target, seconds.
    pub fn extra_time(&self) -> f64 {
        self.extra
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn decide(&mut self, obs: &Observation<'_>) -> Decision {
        let m = obs.num_colors;
        let n = obs.counts.len() as u32;
        let f = obs.params.frequency_hz;
        let t = self.target;
        let core = &obs.cores[t];
        let curve = &obs.curves[t];
        let baseline_colors = f64::from(m / n);
        let est = |colors: f64| estimate_cycles(core.base_cycles, core.spm, curve.interpolate_load_misses(colors).value);
        let base_cycles = est(baseline_colors);

        let tau = (estimate_cycles(core.base_cycles, core.spm, core.load_misses) - base_cycles) / f;
        self.extra += tau;
        self.history.push(tau);

        let elapsed = core.elapsed_cycles / f;
        let baseline_time = elapsed - self.extra;
        let loss = if baseline_time > 0.0 {
            self.extra * 100.0 / baseline_time
        } else {
            0.0
        };
        let allowed = (self.config.omega_pct - self.config.margin_pct - loss).max(0.0);

        let min = self.config.min_for(m);
        let max_per_core = m.saturating_sub((n - 1) * min);
        let floor = (min..=max_per_core)
            .find(|&c| {
                let slowdown = if base_cycles > 0.0 {
                    (est(f64::from(c)) - base_cycles) * 100.0 / base_cycles
                } else {
                    0.0
                };
                slowdown <= allowed
            })
            .unwrap_or(max_per_core);

        let step = self.config.max_transfer;
        let mut relaxed = false;
        let per_core: Vec<Vec<u32>> = obs
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let gain = obs.curves[i].mcu(f64::from(c));
                let mut lo = min.max(c.saturating_sub(step));
                let mut hi = max_per_core.min(c + step);
                let mut centre = c;
                if i == t {
                    if floor > hi {
                        relaxed = true;
                        centre = floor;
                        hi = max_per_core.min(floor + step);
                    }
                    lo = lo.max(floor);
                }
                band_candidates(centre, gain, &self.config.thresholds, lo, hi)
            })
            .collect();

        let mut evaluated = Vec::new();
        let mut best: Option<(f64, Vec<u32>)> = None;
        for cfg in cross_product(&per_core) {
            if cfg.iter().sum::<u32>() > m {
                continue;
            }
            let colors: Vec<f64> = cfg.iter().map(|&c| f64::from(c)).collect();
            let e = estimate_config(obs, &colors, colors.iter().sum(), TimeModel::Estimated).energy_j;
            evaluated.push(EvaluatedConfig {
                config: cfg.clone(),
                energy_j: e,
            });
            if best.as_ref().map_or(true, |(b, _)| e < *b) {
                best = Some((e, cfg));
            }
        }
        let action = match best {
            Some((_, cfg)) => allocate_or_keep(obs.counts, cfg),
            None => self.fallback(obs.counts, floor, min, m),
        };
        Decision {
            action,
            evaluated,
            limit_relaxed: relaxed,
            slack: Some(SlackSnapshot {
                extra_time_s: self.extra,
                loss_pct: loss,
                budget: allowed,
                floor: Some(floor),
            }),
        }
    }

    /// Raises the target to its floor and takes the colors from the others,
    /// largest first.
    fn fallback(&self, counts: &[u32], floor: u32, min: u32, m: u32) -> Action {
        let mut next = counts.to_vec();
        next[self.target] = next[self.target].max(floor);
        while next.iter().sum::<u32>() > m {
            let donor = (0..next.len())
                .filter(|&i| i != self.target && next[i] > min)
                .max_by_key(|&i| (next[i], std::cmp::Reverse(i)));
            match donor {
                Some(i) => next[i] -= 1,
                None => {
                    next[self.target] -= 1;
                }
            }
        }
        allocate_or_keep(counts, next)
    }
}
