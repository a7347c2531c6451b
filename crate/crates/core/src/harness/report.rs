use serde::{Deserialize, Serialize};

use super::config::{PolicyName, ScenarioConfig};
use crate::cache::CacheGeometry;
use crate::error::{Error, Result};
use crate::perf::{self, CoreClock, CoreTiming, EnergyBreakdown, EnergyMode, Metrics, RunTotals};
use crate::policies::Decision;
use crate::profiler::MissCurve;

/// One core's activity within an interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoreInterval {
    pub instructions: u64,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub load_misses: u64,
    /// Dirty evictions caused by this core's fills.
    pub writebacks: u64,
    pub overhead_cycles: u64,
    pub cycles: f64,
}

impl CoreInterval {
    pub fn clock(&self) -> CoreClock {
        CoreClock {
            instructions: self.instructions,
            load_misses: self.load_misses,
            overhead_cycles: self.overhead_cycles,
        }
    }
}

/// Reconfigurations performed between boundaries (decay sweeps, way checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MidInterval {
    pub checks: u64,
    pub changes: u64,
    pub decayed_lines: u64,
    pub woken_lines: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub index: usize,
    /// Global clock at the start and end of the interval.
    pub start_cycle: f64,
    pub end_cycle: f64,
    pub time_seconds: f64,
    /// Color IDs per partition in effect during the interval.
    pub allocation: Vec<Vec<u32>>,
    pub colors_off: u32,
    pub cores: Vec<CoreInterval>,
    pub hits: u64,
    pub misses: u64,
    pub eviction_writebacks: u64,
    pub flush_writebacks: u64,
    pub dram_accesses: u64,
    pub rce_accesses: u64,
    pub transitions: u64,
    /// Time-weighted powered fraction and active way count.
    pub active_fraction: f64,
    pub active_ways: f64,
    /// Policy work and reconfiguration cycles added to every core.
    pub algo_cycles: u64,
    pub reconfig_cycles: u64,
    pub mid_interval: MidInterval,
    pub energy: EnergyBreakdown,
    /// Present when the policy was consulted at the closing boundary.
    pub decision: Option<Decision>,
    /// Emulator miss curves the decision was based on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<MissCurve>,
}

/// Whole-run integer clock components of one core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreLedger {
    pub clock: CoreClock,
    pub cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: PolicyName,
    pub config: ScenarioConfig,
    pub geometry: CacheGeometry,
    pub energy_mode: EnergyMode,
    pub trace_fingerprint: String,
    pub timing: Vec<CoreTiming>,
    pub intervals: Vec<IntervalRecord>,
    /// Final clocks over the whole trace, including skipped intervals.
    pub ledger: Vec<CoreLedger>,
    /// Totals over the counted intervals.
    pub totals: RunTotals,
    pub energy: EnergyBreakdown,
    /// Host time spent simulating; not part of the deterministic output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Totals recomputed from interval records, skipping the first `skip`.
pub fn totals_from_records(records: &[IntervalRecord], timing: &[CoreTiming], skip: usize) -> (RunTotals, EnergyBreakdown) {
    let counted = records.get(skip..).unwrap_or(&[]);
    let mut clocks = vec![CoreClock::default(); timing.len()];
    let mut totals = RunTotals::default();
    let mut energy = EnergyBreakdown::default();
    let mut weighted_fraction = 0.0;
    for r in counted {
        for (c, ci) in clocks.iter_mut().zip(&r.cores) {
            c.instructions += ci.instructions;
            c.load_misses += ci.load_misses;
            c.overhead_cycles += ci.overhead_cycles;
        }
        totals.misses += r.misses;
        totals.dram_accesses += r.dram_accesses;
        totals.time_seconds += r.time_seconds;
        weighted_fraction += r.active_fraction * r.time_seconds;
        energy += r.energy;
    }
    totals.instructions = clocks.iter().map(|c| c.instructions).collect();
    totals.cycles = clocks.iter().zip(timing).map(|(c, t)| c.cycles(t)).collect();
    totals.energy_j = energy.total;
    totals.active_ratio = if totals.time_seconds > 0.0 {
        weighted_fraction / totals.time_seconds
    } else {
        counted.last().map_or(1.0, |r| r.active_fraction)
    };
    (totals, energy)
}

impl RunReport {
    /// Checks the conservation laws and that the stored totals match the
    /// records.
    pub fn audit(&self) -> Result<()> {
        for r in &self.intervals {
            if r.dram_accesses != r.misses + r.eviction_writebacks + r.flush_writebacks {
                return Err(Error::invariant(format!("interval {}: DRAM accesses not conserved", r.index)));
            }
            let per_core_misses: u64 = r.cores.iter().map(|c| c.misses).sum();
            if per_core_misses != r.misses {
                return Err(Error::invariant(format!("interval {}: per-core misses disagree", r.index)));
            }
        }
        for (i, w) in self.intervals.windows(2).enumerate() {
            if w[1].index != w[0].index + 1 || w[1].start_cycle != w[0].end_cycle {
                return Err(Error::invariant(format!("intervals {i} and {} are not contiguous", i + 1)));
            }
        }
        let (all, _) = totals_from_records(&self.intervals, &self.timing, 0);
        for (core, (l, t)) in self.ledger.iter().zip(&self.timing).enumerate() {
            if all.instructions[core] != l.clock.instructions || all.cycles[core] != l.cycles || l.clock.cycles(t) != l.cycles
            {
                return Err(Error::invariant(format!("core {core}: cycle ledger not conserved")));
            }
        }
        let (totals, energy) = totals_from_records(&self.intervals, &self.timing, self.config.skip_intervals);
        if totals != self.totals || energy != self.energy {
            return Err(Error::invariant("stored totals differ from the interval records"));
        }
        Ok(())
    }

    /// Canonical JSON, without host timing.
    pub fn to_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_time_s = None;
        Ok(serde_json::to_string_pretty(&copy)?)
    }

    pub fn max_evaluated(&self) -> usize {
        self.intervals
            .iter()
            .filter_map(|r| r.decision.as_ref())
            .map(|d| d.evaluated.len())
            .max()
            .unwrap_or(0)
    }
}

/// Comparison of a technique run against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub base_policy: PolicyName,
    pub policy: PolicyName,
    pub trace_fingerprint: String,
    pub metrics: Metrics,
}

pub fn compare(base: &RunReport, tech: &RunReport) -> Result<Comparison> {
    if base.trace_fingerprint != tech.trace_fingerprint {
        return Err(Error::Mismatch(format!(
            "reports come from different traces ({} vs {})",
            base.trace_fingerprint, tech.trace_fingerprint
        )));
    }
    Ok(Comparison {
        base_policy: base.policy,
        policy: tech.policy,
        trace_fingerprint: tech.trace_fingerprint.clone(),
        metrics: perf::metrics(&base.totals, &tech.totals)?,
    })
}
