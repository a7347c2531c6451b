//! Reconfiguration and turn-off policies.
//!
//! Interval policies are deterministic functions of an [`Observation`] of the
//! interval that just ended plus their own small state. They never touch the
//! cache; the harness applies the returned [`Decision`].

mod cashier;
mod dct;
mod encache;
mod estimate;
mod manager;
mod master;
mod palette;
mod wac;

pub use cashier::{Cashier, CashierConfig, CashierMode};
pub use dct::{Dct, DctConfig};
pub use encache::{Encache, EncacheConfig, SET_STATES};
pub use estimate::{estimate_config, estimate_from_misses, ConfigEstimate, TimeModel};
pub use manager::{Manager, ManagerConfig};
pub use master::{Master, MasterConfig};
pub use palette::{Palette, PaletteConfig};
pub use wac::{Wac, WacConfig};

use serde::{Deserialize, Serialize};

use crate::perf::EnergyParams;
use crate::profiler::{MissCurve, RceState};

/// What one core did during the interval that just ended.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoreObservation {
    pub instructions: f64,
    pub accesses: f64,
    pub hits: f64,
    pub misses: f64,
    pub load_misses: f64,
    pub writebacks: f64,
    /// Cycles this core spent in the interval.
    pub cycles: f64,
    /// The part of `cycles` that does not depend on LLC misses.
    pub base_cycles: f64,
    /// Measured stall cycles per load miss.
    pub spm: f64,
    /// Cycles since the start of the run, including this interval.
    pub elapsed_cycles: f64,
}

/// Inputs to an interval policy.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub interval: usize,
    pub num_colors: u32,
    pub assoc: u32,
    /// Colors per partition (one entry in shared mode).
    pub counts: &'a [u32],
    pub curves: &'a [MissCurve],
    pub cores: &'a [CoreObservation],
    /// Length of the interval on the global clock.
    pub interval_cycles: f64,
    pub rce_accesses: f64,
    pub params: &'a EnergyParams,
    pub rce: Option<&'a RceState>,
    /// Current set state and active ways, for set/way policies.
    pub set_state: u32,
    pub active_ways: u32,
}

impl Observation<'_> {
    pub fn active_colors(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// A policy's requested change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Action {
    NoChange,
    /// New color count per partition.
    Allocate(Vec<u32>),
    /// Set state `k` keeps `1 / 2^k` of the sets; `ways` ways stay on.
    SetState { state: u32, ways: u32 },
    /// Lines `(set, way)` to gate off.
    TurnOff(Vec<(u64, u32)>),
    Ways(u32),
}

/// One configuration a policy scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedConfig {
    pub config: Vec<u32>,
    pub energy_j: f64,
}

/// Bookkeeping of slack-controlled policies at decision time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackSnapshot {
    /// Accumulated estimated extra time, seconds.
    pub extra_time_s: f64,
    /// Accumulated extra time as a percentage of estimated baseline time.
    pub loss_pct: f64,
    /// Budget for the next interval: seconds (absolute mode) or percent.
    pub budget: f64,
    /// Minimum colors derived from the budget, where applicable.
    pub floor: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub evaluated: Vec<EvaluatedConfig>,
    /// The per-interval move limit was lifted to honor a QoS floor.
    pub limit_relaxed: bool,
    pub slack: Option<SlackSnapshot>,
}

impl Decision {
    pub fn no_change() -> Self {
        Self {
            action: Action::NoChange,
            evaluated: Vec::new(),
            limit_relaxed: false,
            slack: None,
        }
    }

    pub fn with_action(action: Action) -> Self {
        Self {
            action,
            ..Self::no_change()
        }
    }

    pub fn changes(&self) -> bool {
        !matches!(self.action, Action::NoChange)
    }
}

/// `Allocate(next)` unless it equals `current`.
pub(crate) fn allocate_or_keep(current: &[u32], next: Vec<u32>) -> Action {
    if next.as_slice() == current {
        Action::NoChange
    } else {
        Action::Allocate(next)
    }
}

/// Offsets around the current color count, one template per marginal-gain
/// band. Low gain leans toward fewer colors, high gain toward more.
const BAND_OFFSETS: [[i64; 4]; 5] = [
    [-6, -4, -1, 0],
    [-4, -1, 0, 1],
    [-1, 0, 4, 6],
    [0, 1, 4, 6],
    [0, 4, 6, 8],
];

pub(crate) fn gain_band(gain: f64, thresholds: &[f64; 4]) -> usize {
    thresholds.iter().take_while(|&&t| gain > t).count()
}

/// Up to four candidate color counts for one core inside `[lo, hi]`.
///
/// Template values outside the window are clamped; values lost to clamping
/// or duplication are replaced by the nearest unused valid values on the
/// band's preferred side.
pub(crate) fn band_candidates(current: u32, gain: f64, thresholds: &[f64; 4], lo: u32, hi: u32) -> Vec<u32> {
    if lo > hi {
        return Vec::new();
    }
    let band = gain_band(gain, thresholds);
    let clamp = |v: i64| v.clamp(i64::from(lo), i64::from(hi)) as u32;
    let mut out: Vec<u32> = Vec::with_capacity(4);
    for off in BAND_OFFSETS[band] {
        let v = clamp(i64::from(current) + off);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    let prefer_down = band < 2;
    let centre = clamp(i64::from(current));
    let mut d = 1i64;
    while out.len() < 4 && d <= i64::from(hi - lo) + 1 {
        let down = i64::from(centre) - d;
        let up = i64::from(centre) + d;
        let order = if prefer_down { [down, up] } else { [up, down] };
        for v in order {
            if out.len() < 4 && v >= i64::from(lo) && v <= i64::from(hi) && !out.contains(&(v as u32)) {
                out.push(v as u32);
            }
        }
        d += 1;
    }
    out.sort_unstable();
    out
}
