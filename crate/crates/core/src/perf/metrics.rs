use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whole-run totals that the comparison metrics are computed from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTotals {
    pub instructions: Vec<u64>,
    pub cycles: Vec<f64>,
    pub misses: u64,
    pub dram_accesses: u64,
    pub energy_j: f64,
    pub time_seconds: f64,
    /// Time-weighted mean of the active fraction.
    pub active_ratio: f64,
}

impl RunTotals {
    pub fn ipc(&self) -> Vec<f64> {
        self.instructions
            .iter()
            .zip(&self.cycles)
            .map(|(&i, &c)| if c > 0.0 { i as f64 / c } else { 0.0 })
            .collect()
    }

    fn total_instructions(&self) -> f64 {
        self.instructions.iter().sum::<u64>() as f64
    }

    pub fn apki(&self) -> f64 {
        per_kilo(self.dram_accesses, self.total_instructions())
    }

    pub fn mpki(&self) -> f64 {
        per_kilo(self.misses, self.total_instructions())
    }

    pub fn edp(&self) -> f64 {
        self.energy_j * self.time_seconds
    }
}

fn per_kilo(count: u64, instructions: f64) -> f64 {
    if instructions > 0.0 {
        count as f64 * 1000.0 / instructions
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pct_energy_saved: f64,
    pub weighted_speedup: f64,
    pub fair_speedup: f64,
    pub active_ratio: f64,
    pub apki_delta: f64,
    pub mpki_delta: f64,
    pub edp_saved: f64,
}

pub fn weighted_speedup(ratios: &[f64]) -> f64 {
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// Harmonic mean of per-core IPC ratios.
pub fn fair_speedup(ratios: &[f64]) -> f64 {
    ratios.len() as f64 / ratios.iter().map(|r| 1.0 / r).sum::<f64>()
}

fn pct_saved(base: f64, tech: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - tech) * 100.0 / base
    }
}

pub fn metrics(base: &RunTotals, tech: &RunTotals) -> Result<Metrics> {
    if base.instructions != tech.instructions {
        return Err(Error::Mismatch(format!(
            "runs cover different instruction windows: {:?} vs {:?}",
            base.instructions, tech.instructions
        )));
    }
    let ratios: Vec<f64> = tech
        .ipc()
        .iter()
        .zip(base.ipc())
        .map(|(t, b)| if b > 0.0 { t / b } else { 1.0 })
        .collect();
    Ok(Metrics {
        pct_energy_saved: pct_saved(base.energy_j, tech.energy_j),
        weighted_speedup: weighted_speedup(&ratios),
        fair_speedup: fair_speedup(&ratios),
        active_ratio: tech.active_ratio,
        apki_delta: tech.apki() - base.apki(),
        mpki_delta: tech.mpki() - base.mpki(),
        edp_saved: pct_saved(base.edp(), tech.edp()),
    })
}

fn gmean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x.ln(), n + 1));
    (s / n as f64).exp()
}

fn amean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Suite aggregate: geometric mean for the speedups, arithmetic elsewhere.
pub fn suite_summary(rows: &[Metrics]) -> Result<Metrics> {
    if rows.is_empty() {
        return Err(Error::config("cannot summarize an empty suite"));
    }
    Ok(Metrics {
        pct_energy_saved: amean(rows.iter().map(|m| m.pct_energy_saved)),
        weighted_speedup: gmean(rows.iter().map(|m| m.weighted_speedup)),
        fair_speedup: gmean(rows.iter().map(|m| m.fair_speedup)),
        active_ratio: amean(rows.iter().map(|m| m.active_ratio)),
        apki_delta: amean(rows.iter().map(|m| m.apki_delta)),
        mpki_delta: amean(rows.iter().map(|m| m.mpki_delta)),
        edp_saved: amean(rows.iter().map(|m| m.edp_saved)),
    })
}
