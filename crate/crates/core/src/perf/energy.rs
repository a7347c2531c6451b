use serde::{Deserialize, Serialize};

use crate::cache::{derive_geometry, CacheGeometry};
use crate::error::{Error, Result};

/// Memory-subsystem energy constants. Energies per access are in nJ, powers
/// in W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    pub l2_dyn_nj: f64,
    pub l2_leak_w: f64,
    pub dram_dyn_nj: f64,
    pub dram_leak_w: f64,
    pub rce_dyn_nj: f64,
    pub rce_leak_w: f64,
    /// Energy of one block power transition.
    pub transition_nj: f64,
    /// Residual leakage of a gated-off line, as a fraction of an active one.
    pub p_off: f64,
    /// Extra leakage from gated-Vdd area overhead.
    pub upsilon: f64,
    /// Share of dynamic energy that does not scale with active ways.
    pub g_f: f64,
    pub d_f: f64,
    pub frequency_hz: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Preset::cacti32nm_4mb().energy
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.l2_dyn_nj,
            self.l2_leak_w,
            self.dram_dyn_nj,
            self.dram_leak_w,
            self.rce_dyn_nj,
            self.rce_leak_w,
            self.transition_nj,
            self.p_off,
            self.upsilon,
            self.g_f,
            self.d_f,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("energy parameters must be finite and non-negative"));
        }
        for (name, v) in [("p_off", self.p_off), ("upsilon", self.upsilon), ("g_f", self.g_f), ("d_f", self.d_f)] {
            if v > 1.0 {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if (self.g_f + self.d_f - 1.0).abs() > 1e-9 {
            return Err(Error::config("g_f + d_f must equal 1"));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::config("frequency must be positive"));
        }
        Ok(())
    }

    /// The same constants for a technique that has no profiling hardware.
    pub fn without_rce(mut self) -> Self {
        self.rce_dyn_nj = 0.0;
        self.rce_leak_w = 0.0;
        self
    }
}

/// Named constant sets with the cache they were computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: &'static str,
    pub energy: EnergyParams,
    pub size_bytes: u64,
    pub assoc: u32,
    pub block_bytes: u64,
    pub page_bytes: u64,
    /// Core count the emulator constants were computed for.
    pub cores: u32,
    /// Tag width used when sizing the emulator.
    pub tag_bits: u32,
}

pub const PRESET_NAMES: [&str; 3] = ["cacti32nm-4mb", "cacti32nm-8mb", "cacti45nm-2mb"];

const MB: u64 = 1024 * 1024;

fn base_params(l2_dyn_nj: f64, l2_leak_w: f64, rce_dyn_nj: f64, rce_leak_w: f64, frequency_hz: f64) -> EnergyParams {
    EnergyParams {
        l2_dyn_nj,
        l2_leak_w,
        dram_dyn_nj: 70.0,
        dram_leak_w: 0.18,
        rce_dyn_nj,
        rce_leak_w,
        transition_nj: 0.002,
        p_off: 0.03,
        upsilon: 0.05,
        g_f: 0.03,
        d_f: 0.97,
        frequency_hz,
    }
}

impl Preset {
    pub fn cacti32nm_4mb() -> Self {
        Self {
            name: "cacti32nm-4mb",
            energy: base_params(0.289, 1.39, 0.005, 0.006, 2.8e9),
            size_bytes: 4 * MB,
            assoc: 8,
            block_bytes: 64,
            page_bytes: 4096,
            cores: 2,
            tag_bits: 28,
        }
    }

    pub fn cacti32nm_8mb() -> Self {
        Self {
            name: "cacti32nm-8mb",
            energy: base_params(0.438, 2.72, 0.016, 0.023, 2.8e9),
            size_bytes: 8 * MB,
            assoc: 8,
            block_bytes: 64,
            page_bytes: 4096,
            cores: 4,
            tag_bits: 28,
        }
    }

    pub fn cacti45nm_2mb() -> Self {
        Self {
            name: "cacti45nm-2mb",
            energy: base_params(0.985, 1.568, 0.004, 0.007, 1.5e9),
            size_bytes: 2 * MB,
            assoc: 8,
            block_bytes: 64,
            page_bytes: 4096,
            cores: 1,
            tag_bits: 27,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cacti32nm-4mb" => Ok(Self::cacti32nm_4mb()),
            "cacti32nm-8mb" => Ok(Self::cacti32nm_8mb()),
            "cacti45nm-2mb" => Ok(Self::cacti45nm_2mb()),
            other => Err(Error::config(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn geometry(&self) -> Result<CacheGeometry> {
        derive_geometry(self.size_bytes, self.assoc, self.block_bytes, self.page_bytes)
    }
}

/// How the energy of an interval is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    /// Conventional cache: no gating overhead, everything on, no algorithm cost.
    Baseline,
    Technique,
}

/// Everything the energy equations read for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyInputs {
    pub hits: f64,
    pub misses: f64,
    pub dram_accesses: f64,
    pub rce_accesses: f64,
    pub transitions: f64,
    /// Time-averaged fraction of lines powered on.
    pub active_fraction: f64,
    /// Time-averaged active way count.
    pub active_ways: f64,
    pub assoc: f64,
    pub time_seconds: f64,
}

/// Energy of one interval in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub le_l2: f64,
    pub de_l2: f64,
    pub e_dram: f64,
    /// Profiling plus transition energy.
    pub e_algo: f64,
    /// Transition part of `e_algo`.
    pub e_tran: f64,
    pub total: f64,
}

impl std::ops::AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.le_l2 += o.le_l2;
        self.de_l2 += o.de_l2;
        self.e_dram += o.e_dram;
        self.e_algo += o.e_algo;
        self.e_tran += o.e_tran;
        self.total += o.total;
    }
}

const NJ: f64 = 1e-9;

pub fn energy(inputs: &EnergyInputs, params: &EnergyParams, mode: EnergyMode) -> EnergyBreakdown {
    let time = inputs.time_seconds;
    let (upsilon, f_a, way_ratio) = match mode {
        EnergyMode::Baseline => (0.0, 1.0, 1.0),
        EnergyMode::Technique => (
            params.upsilon,
            inputs.active_fraction,
            if inputs.assoc > 0.0 { inputs.active_ways / inputs.assoc } else { 1.0 },
        ),
    };
    let le_l2 = params.l2_leak_w * (1.0 + upsilon) * (f_a + (1.0 - f_a) * params.p_off) * time;
    let de_l2 = params.l2_dyn_nj * NJ * (2.0 * inputs.misses + inputs.hits) * (params.g_f + params.d_f * way_ratio);
    let e_dram = params.dram_leak_w * time + params.dram_dyn_nj * NJ * inputs.dram_accesses;
    let (e_tran, e_algo) = match mode {
        EnergyMode::Baseline => (0.0, 0.0),
        EnergyMode::Technique => {
            let tran = params.transition_nj * NJ * inputs.transitions;
            let rce = params.rce_dyn_nj * NJ * inputs.rce_accesses + params.rce_leak_w * time;
            (tran, tran + rce)
        }
    };
    EnergyBreakdown {
        le_l2,
        de_l2,
        e_dram,
        e_algo,
        e_tran,
        total: le_l2 + de_l2 + e_dram + e_algo,
    }
}

/// Idle time, in cycles, after which keeping a block powered costs more than
/// refetching it from DRAM.
pub fn decay_interval(params: &EnergyParams, geometry: &CacheGeometry) -> f64 {
    let leak_per_block_cycle = params.l2_leak_w / (params.frequency_hz * geometry.total_blocks() as f64);
    params.dram_dyn_nj * NJ / leak_per_block_cycle
}
