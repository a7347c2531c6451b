use serde::{Deserialize, Serialize};

use crate::cache::{derive_geometry_with_address_bits, CacheGeometry, ReplacementPolicy, DEFAULT_ADDRESS_BITS};
use crate::error::{Error, Result};
use crate::perf::{EnergyParams, Preset};
use crate::policies::{
    CashierConfig, CashierMode, DctConfig, EncacheConfig, ManagerConfig, MasterConfig, PaletteConfig, WacConfig,
};
use crate::profiler::ProfilingVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    None,
    Master,
    Palette,
    Encache,
    CashierMsm,
    CashierPsm,
    Manager,
    Dct,
    Wac,
}

impl PolicyName {
    pub const ALL: [PolicyName; 9] = [
        PolicyName::None,
        PolicyName::Master,
        PolicyName::Palette,
        PolicyName::Encache,
        PolicyName::CashierMsm,
        PolicyName::CashierPsm,
        PolicyName::Manager,
        PolicyName::Dct,
        PolicyName::Wac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::None => "none",
            PolicyName::Master => "master",
            PolicyName::Palette => "palette",
            PolicyName::Encache => "encache",
            PolicyName::CashierMsm => "cashier-msm",
            PolicyName::CashierPsm => "cashier-psm",
            PolicyName::Manager => "manager",
            PolicyName::Dct => "dct",
            PolicyName::Wac => "wac",
        }
    }

    /// Emulator profiling points used unless the scenario overrides them.
    pub fn default_profiling(self) -> Option<ProfilingVariant> {
        match self {
            PolicyName::Master => Some(ProfilingVariant::Master7),
            PolicyName::Palette | PolicyName::CashierMsm | PolicyName::CashierPsm => Some(ProfilingVariant::Palette6),
            PolicyName::Manager => Some(ProfilingVariant::Manager6),
            PolicyName::Encache => Some(ProfilingVariant::Encache4),
            PolicyName::None | PolicyName::Dct | PolicyName::Wac => None,
        }
    }
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PolicyName::ALL.iter().map(|p| p.as_str()).collect();
                Error::config(format!("unknown policy '{s}' (known: {})", names.join(", ")))
            })
    }
}

/// When interval boundaries happen. Exactly one field must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    /// Cycles on the global clock (the furthest-ahead core).
    pub cycles: Option<u64>,
    /// Instructions retired by all cores together.
    pub instructions: Option<u64>,
    /// Instructions retired by the target core; the boundary lands on the
    /// next poll point after the count is reached.
    pub target_instructions: Option<u64>,
    pub poll_cycles: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMode {
    Cycles(u64),
    Instructions(u64),
    TargetInstructions { count: u64, poll_cycles: u64 },
}

impl IntervalConfig {
    pub fn mode(&self) -> Result<IntervalMode> {
        let set = [self.cycles.is_some(), self.instructions.is_some(), self.target_instructions.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if set != 1 {
            return Err(Error::config("exactly one interval mode must be given"));
        }
        let positive = |v: u64, what: &str| {
            if v == 0 {
                Err(Error::config(format!("interval {what} must be positive")))
            } else {
                Ok(v)
            }
        };
        if let Some(c) = self.cycles {
            return Ok(IntervalMode::Cycles(positive(c, "cycles")?));
        }
        if let Some(i) = self.instructions {
            return Ok(IntervalMode::Instructions(positive(i, "instructions")?));
        }
        Ok(IntervalMode::TargetInstructions {
            count: positive(self.target_instructions.unwrap_or(0), "target_instructions")?,
            poll_cycles: positive(self.poll_cycles.unwrap_or(1000), "poll_cycles")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// All colors shared by every core.
    Shared,
    /// Colors split evenly between cores, never changed.
    StaticEqual,
}

/// Cycles added to every core's clock for policy work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overheads {
    pub algo_master: u64,
    /// Other interval policies (resizing, slack-controlled, partitioning).
    pub algo_other: u64,
    pub algo_dct: u64,
    /// Per way-adaptation check.
    pub algo_wac: u64,
    /// Charged whenever a decision changes the configuration.
    pub reconfig: u64,
}

impl Default for Overheads {
    fn default() -> Self {
        Self {
            algo_master: 500,
            algo_other: 500,
            algo_dct: 300,
            algo_wac: 20,
            reconfig: 600,
        }
    }
}

/// Cache parameters that override the preset's.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheOverrides {
    pub size_bytes: Option<u64>,
    pub assoc: Option<u32>,
    pub block_bytes: Option<u64>,
    pub page_bytes: Option<u64>,
    pub address_bits: Option<u32>,
    pub replacement: Option<ReplacementPolicy>,
}

/// Energy constants that override the preset's.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyOverrides {
    pub l2_dyn_nj: Option<f64>,
    pub l2_leak_w: Option<f64>,
    pub dram_dyn_nj: Option<f64>,
    pub dram_leak_w: Option<f64>,
    pub rce_dyn_nj: Option<f64>,
    pub rce_leak_w: Option<f64>,
    pub transition_nj: Option<f64>,
    pub p_off: Option<f64>,
    pub upsilon: Option<f64>,
    pub g_f: Option<f64>,
    pub d_f: Option<f64>,
    pub frequency_hz: Option<f64>,
}

impl EnergyOverrides {
    fn apply(&self, mut p: EnergyParams) -> EnergyParams {
        let fields = [
            (self.l2_dyn_nj, &mut p.l2_dyn_nj),
            (self.l2_leak_w, &mut p.l2_leak_w),
            (self.dram_dyn_nj, &mut p.dram_dyn_nj),
            (self.dram_leak_w, &mut p.dram_leak_w),
            (self.rce_dyn_nj, &mut p.rce_dyn_nj),
            (self.rce_leak_w, &mut p.rce_leak_w),
            (self.transition_nj, &mut p.transition_nj),
            (self.p_off, &mut p.p_off),
            (self.upsilon, &mut p.upsilon),
            (self.g_f, &mut p.g_f),
            (self.d_f, &mut p.d_f),
            (self.frequency_hz, &mut p.frequency_hz),
        ];
        for (v, slot) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p
    }
}

const DEFAULT_ABSOLUTE_SLACK_S: f64 = 0.01;
const DEFAULT_PERCENT_SLACK: f64 = 5.0;

/// A complete simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: String,
    pub cache: CacheOverrides,
    pub energy: EnergyOverrides,
    pub policy: PolicyName,
    /// Expected core count; checked against the trace when given.
    pub cores: Option<u16>,
    pub interval: IntervalConfig,
    pub sample_ratio: u32,
    pub profiling: Option<ProfilingVariant>,
    pub baseline: BaselineMode,
    pub overheads: Overheads,
    /// Leading intervals left out of the run totals.
    pub skip_intervals: usize,
    /// Echoed in reports; the simulation itself is fully determined by the
    /// trace.
    pub seed: u64,
    pub master: MasterConfig,
    pub palette: PaletteConfig,
    pub encache: EncacheConfig,
    pub cashier: CashierConfig,
    pub manager: ManagerConfig,
    pub dct: DctConfig,
    pub wac: WacConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            preset: "cacti32nm-4mb".into(),
            cache: CacheOverrides::default(),
            energy: EnergyOverrides::default(),
            policy: PolicyName::None,
            cores: None,
            interval: IntervalConfig {
                cycles: Some(5_000_000),
                ..IntervalConfig::default()
            },
            sample_ratio: 64,
            profiling: None,
            baseline: BaselineMode::Shared,
            overheads: Overheads::default(),
            skip_intervals: 0,
            seed: 0,
            master: MasterConfig::default(),
            palette: PaletteConfig::default(),
            encache: EncacheConfig::default(),
            cashier: CashierConfig::default(),
            manager: ManagerConfig::default(),
            dct: DctConfig::default(),
            wac: WacConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn preset(&self) -> Result<Preset> {
        Preset::by_name(&self.preset)
    }

    pub fn geometry(&self) -> Result<CacheGeometry> {
        let p = self.preset()?;
        let c = &self.cache;
        derive_geometry_with_address_bits(
            c.size_bytes.unwrap_or(p.size_bytes),
            c.assoc.unwrap_or(p.assoc),
            c.block_bytes.unwrap_or(p.block_bytes),
            c.page_bytes.unwrap_or(p.page_bytes),
            c.address_bits.unwrap_or(DEFAULT_ADDRESS_BITS),
        )
    }

    pub fn replacement(&self) -> ReplacementPolicy {
        self.cache.replacement.unwrap_or(ReplacementPolicy::Lru)
    }

    pub fn energy_params(&self) -> Result<EnergyParams> {
        let p = self.energy.apply(self.preset()?.energy);
        p.validate()?;
        Ok(p)
    }

    pub fn profiling(&self) -> Option<ProfilingVariant> {
        self.policy.default_profiling().map(|v| self.profiling.unwrap_or(v))
    }

    /// Slack-controller settings with the mode matching the policy. A
    /// configured slack of the other kind is replaced by that kind's default.
    pub fn cashier_config(&self) -> CashierConfig {
        let mut c = self.cashier.clone();
        c.mode = match (self.policy, c.mode) {
            (PolicyName::CashierMsm, CashierMode::Absolute(s)) => CashierMode::Absolute(s),
            (PolicyName::CashierMsm, _) => CashierMode::Absolute(DEFAULT_ABSOLUTE_SLACK_S),
            (_, CashierMode::Percent(p)) => CashierMode::Percent(p),
            (_, _) => CashierMode::Percent(DEFAULT_PERCENT_SLACK),
        };
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.energy_params()?;
        self.interval.mode()?;
        if !self.sample_ratio.is_power_of_two() {
            return Err(Error::config("sample_ratio must be a power of two"));
        }
        self.master.validate()?;
        self.palette.validate()?;
        self.cashier_config().validate()?;
        if self.policy == PolicyName::Encache && self.replacement() != ReplacementPolicy::Lru {
            return Err(Error::config("encache requires LRU replacement"));
        }
        Ok(())
    }

    pub fn with_policy(&self, policy: PolicyName) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }
}
