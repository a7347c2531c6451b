use serde::{Deserialize, Serialize};

use super::{
    allocate_or_keep, estimate_config, Decision, EvaluatedConfig, Observation, SlackSnapshot, TimeModel,
};
use crate::error::{Error, Result};
use crate::perf::estimate_cycles;

/// How the allowed slowdown is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum CashierMode {
    /// Absolute slack in seconds for the whole run.
    Absolute(f64),
    /// Percentage slack relative to the baseline execution time.
    Percent(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CashierConfig {
    pub mode: CashierMode,
    /// Safety margin below the percentage slack, percent.
    pub margin_pct: f64,
    /// Largest change in colors per interval.
    pub max_step: u32,
    /// Minimum colors; defaults to `M / 16`.
    pub min_colors: Option<u32>,
    /// Intervals over which remaining absolute slack is spread.
    pub horizon: u32,
    /// Fraction of absolute slack held in reserve.
    pub reserve_fraction: f64,
}

impl Default for CashierConfig {
    fn default() -> Self {
        Self {
            mode: CashierMode::Percent(5.0),
            margin_pct: 0.3,
            max_step: 8,
            min_colors: None,
            horizon: 10,
            reserve_fraction: 0.1,
        }
    }
}

impl CashierConfig {
    pub fn min_for(&self, m: u32) -> u32 {
        self.min_colors.unwrap_or((m / 16).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let slack = match self.mode {
            CashierMode::Absolute(v) | CashierMode::Percent(v) => v,
        };
        if !(slack >= 0.0 && slack.is_finite()) {
            return Err(Error::config("cashier slack must be non-negative"));
        }
        if self.horizon == 0 || !(0.0..=1.0).contains(&self.reserve_fraction) {
            return Err(Error::config("cashier horizon must be positive and reserve in [0, 1]"));
        }
        Ok(())
    }
}

/// Shared-cache resizing under a slowdown budget.
#[derive(Debug, Clone)]
pub struct Cashier {
    pub config: CashierConfig,
    /// Accumulated estimated extra time per core, seconds.
    extra: Vec<f64>,
    /// Per-interval extra-time deltas, for replay.
    history: Vec<Vec<f64>>,
}

impl Cashier {
    pub fn new(config: CashierConfig, cores: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            extra: vec![0.0; cores],
            history: Vec::new(),
        })
    }

    pub fn extra_time(&self) -> &[f64] {
        &self.extra
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    pub fn decide(&mut self, obs: &Observation<'_>) -> Decision {
        let m = obs.num_colors;
        let f = obs.params.frequency_hz;
        let current = obs.active_colors();
        let full = f64::from(m);

        // baseline (full cache) cycle estimate per core for this interval
        let base_est: Vec<f64> = obs
            .cores
            .iter()
            .zip(obs.curves)
            .map(|(c, k)| estimate_cycles(c.base_cycles, c.spm, k.interpolate_load_misses(full).value))
            .collect();
        // the running configuration is charged with its observed load misses
        let cur_est: Vec<f64> = obs
            .cores
            .iter()
            .map(|c| estimate_cycles(c.base_cycles, c.spm, c.load_misses))
            .collect();
        let deltas: Vec<f64> = cur_est.iter().zip(&base_est).map(|(a, b)| (a - b) / f).collect();
        for (t, d) in self.extra.iter_mut().zip(&deltas) {
            *t += d;
        }
        self.history.push(deltas);

        // how much extra time (seconds) each candidate may cost next interval
        let (budget, loss_pct, allowed): (f64, f64, Vec<f64>) = match self.config.mode {
            CashierMode::Absolute(slack) => {
                let effective = slack * (1.0 - self.config.reserve_fraction);
                let used = self.extra.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mas = (effective - used).max(0.0) / f64::from(self.config.horizon);
                (mas, f64::NAN, vec![mas; obs.cores.len()])
            }
            CashierMode::Percent(limit) => {
                let target = limit - self.config.margin_pct;
                let mut worst = f64::NEG_INFINITY;
                let mut min_mps = f64::INFINITY;
                let allowed = obs
                    .cores
                    .iter()
                    .zip(&self.extra)
                    .zip(&base_est)
                    .map(|((c, &t), &b)| {
                        let elapsed = c.elapsed_cycles / f;
                        let loss = pct(t, elapsed - t);
                        worst = worst.max(loss);
                        let next_base = b / f;
                        let mps = if loss >= target || next_base <= 0.0 {
                            0.0
                        } else {
                            let room = target / 100.0 * (elapsed - t + next_base) - t;
                            (room / next_base * 100.0).max(0.0)
                        };
                        min_mps = min_mps.min(mps);
                        mps / 100.0 * next_base
                    })
                    .collect();
                (min_mps, worst, allowed)
            }
        };

        let min = self.config.min_for(m);
        let lo = current.saturating_sub(self.config.max_step).max(min);
        let hi = (current + self.config.max_step).min(m);
        let mut evaluated = Vec::new();
        let mut best: Option<(f64, u32)> = None;
        for v in lo..=hi {
            let colors = vec![f64::from(v); obs.cores.len()];
            let est = estimate_config(obs, &colors, f64::from(v), TimeModel::Estimated);
            let fits = est
                .core_cycles
                .iter()
                .zip(&base_est)
                .zip(&allowed)
                .all(|((c, b), a)| (c - b) / f <= *a);
            if !fits {
                continue;
            }
            evaluated.push(EvaluatedConfig {
                config: vec![v],
                energy_j: est.energy_j,
            });
            if best.map_or(true, |(e, _)| est.energy_j < e) {
                best = Some((est.energy_j, v));
            }
        }
        let next = best.map_or((current + self.config.max_step).min(m), |(_, v)| v);
        let loss_pct = if loss_pct.is_nan() {
            let t = self.extra.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let elapsed = obs.cores.iter().map(|c| c.elapsed_cycles).fold(0.0, f64::max) / f;
            pct(t, elapsed - t)
        } else {
            loss_pct
        };
        Decision {
            action: allocate_or_keep(&[current], vec![next]),
            evaluated,
            limit_relaxed: false,
            slack: Some(SlackSnapshot {
                extra_time_s: self.extra.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                loss_pct,
                budget,
                floor: None,
            }),
        }
    }
}

fn pct(extra: f64, base: f64) -> f64 {
    if base > 0.0 {
        extra * 100.0 / base
    } else {
        0.0
    }
}
