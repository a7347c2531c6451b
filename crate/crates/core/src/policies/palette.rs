use serde::{Deserialize, Serialize};

use super::{allocate_or_keep, estimate_config, Decision, EvaluatedConfig, Observation, TimeModel};
use crate::error::{Error, Result};
use crate::profiler::MissCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaletteConfig {
    /// Candidate configurations per interval, the current one included.
    pub candidates: usize,
    /// Allocation step in colors.
    pub granularity: u32,
    /// Minimum colors; defaults to `M / 16`.
    pub min_colors: Option<u32>,
    /// Below this gain most candidates are smaller than the current size.
    pub low_gain: f64,
    /// Above this gain most candidates are larger.
    pub high_gain: f64,
}

impl Default for PaletteConfig {
    fn default() -> Self {
        Self {
            candidates: 11,
            granularity: 2,
            min_colors: None,
            low_gain: 50.0,
            high_gain: 300.0,
        }
    }
}

impl PaletteConfig {
    pub fn min_for(&self, m: u32) -> u32 {
        self.min_colors.unwrap_or((m / 16).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.granularity == 0 {
            return Err(Error::config("palette candidates and granularity must be positive"));
        }
        if self.low_gain > self.high_gain {
            return Err(Error::config("palette low_gain must not exceed high_gain"));
        }
        Ok(())
    }
}

/// Shared-cache resizing: one active color count for the whole cache.
#[derive(Debug, Clone)]
pub struct Palette {
    pub config: PaletteConfig,
}

/// Sum of per-core curves: misses of the whole shared cache.
pub(crate) fn aggregate_curve(curves: &[MissCurve]) -> MissCurve {
    let mut total = curves[0].clone();
    for c in &curves[1..] {
        for (a, b) in total.misses.iter_mut().zip(&c.misses) {
            *a += b;
        }
        for (a, b) in total.load_misses.iter_mut().zip(&c.load_misses) {
            *a += b;
        }
        total.accesses += c.accesses;
    }
    total
}

impl Palette {
    pub fn new(config: PaletteConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Candidate color counts around `current`, ascending.
    pub fn candidate_values(&self, current: u32, gain: f64, m: u32) -> Vec<u32> {
        let cfg = &self.config;
        let min = cfg.min_for(m);
        let step = cfg.granularity;
        let others = cfg.candidates - 1;
        let (mut below, mut above) = if gain < cfg.low_gain {
            (others * 7 / 10, others - others * 7 / 10)
        } else if gain > cfg.high_gain {
            (others - others * 7 / 10, others * 7 / 10)
        } else {
            (others / 2, others - others / 2)
        };
        let down: Vec<u32> = (1..=others as u32)
            .map_while(|k| current.checked_sub(k * step).filter(|&v| v >= min))
            .collect();
        let up: Vec<u32> = (1..=others as u32)
            .map(|k| current + k * step)
            .take_while(|&v| v <= m)
            .collect();
        if down.len() < below {
            above += below - down.len();
            below = down.len();
        }
        if up.len() < above {
            below = (below + above - up.len()).min(down.len());
            above = up.len();
        }
        let mut out: Vec<u32> = down[..below].to_vec();
        out.push(current);
        out.extend_from_slice(&up[..above]);
        out.sort_unstable();
        out
    }

    pub fn decide(&mut self, obs: &Observation<'_>) -> Decision {
        let current = obs.active_colors();
        let gain = aggregate_curve(obs.curves).mcu(f64::from(current));
        let values = self.candidate_values(current, gain, obs.num_colors);
        let mut evaluated = Vec::with_capacity(values.len());
        let mut best = (f64::INFINITY, current);
        for &v in &values {
            let colors = vec![f64::from(v); obs.cores.len()];
            let e = estimate_config(obs, &colors, f64::from(v), TimeModel::Estimated).energy_j;
            evaluated.push(EvaluatedConfig {
                config: vec![v],
                energy_j: e,
            });
            if e < best.0 {
                best = (e, v);
            }
        }
        Decision {
            action: allocate_or_keep(&[current], vec![best.1]),
            evaluated,
            limit_relaxed: false,
            slack: None,
        }
    }
}
