//! Set-sampled, tag-only emulation of several cache sizes per core.
//!
//! Only addresses whose low set-index bits are all zero are profiled. Each
//! profiling point keeps its own small tag store that decodes the set with a
//! plain modulo of the block address, so the emulated cache is independent of
//! the coloring of the real cache. Every hit also records its recency
//! position, which gives exact per-way hit counts under LRU.

mod curve;

pub use curve::{Interpolated, MissCurve};

use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, CacheGeometry, ReplacementPolicy};
use crate::error::{Error, Result};

/// Which set of cache sizes the emulator profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfilingVariant {
    /// Seven points, `2^(j-1) Q / 64` sets for `j = 1..=7`.
    Master7,
    /// `{1, 2, 4, 8, 12, 16} Q / 16` sets.
    Palette6,
    /// Six points, `2^(j-1) Q / 32` sets for `j = 1..=6`.
    Manager6,
    /// `{1/16, 1/8, 1/4, 1/2, 1, 2} Q` sets; the largest exceeds the real cache.
    Esto6,
    /// Full, half, quarter and eighth of the sets, all ways profiled.
    Encache4,
}

impl ProfilingVariant {
    /// Point sizes as (numerator, denominator) of the real set count.
    fn fractions(self) -> &'static [(u64, u64)] {
        match self {
            ProfilingVariant::Master7 => &[(1, 64), (2, 64), (4, 64), (8, 64), (16, 64), (32, 64), (64, 64)],
            ProfilingVariant::Palette6 => &[(1, 16), (2, 16), (4, 16), (8, 16), (12, 16), (16, 16)],
            ProfilingVariant::Manager6 => &[(1, 32), (2, 32), (4, 32), (8, 32), (16, 32), (32, 32)],
            ProfilingVariant::Esto6 => &[(1, 16), (1, 8), (1, 4), (1, 2), (1, 1), (2, 1)],
            ProfilingVariant::Encache4 => &[(1, 8), (1, 4), (1, 2), (1, 1)],
        }
    }

    /// Sum of point sizes as a fraction of the real set count.
    pub fn size_fraction(self) -> f64 {
        self.fractions().iter().map(|&(a, b)| a as f64 / b as f64).sum()
    }
}

/// Profiling points resolved against a cache geometry, smallest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingPoints {
    pub variant: ProfilingVariant,
    pub sets: Vec<u64>,
    /// Point size in colors (`sets / sets_per_color`).
    pub colors: Vec<f64>,
}

impl ProfilingPoints {
    pub fn new(variant: ProfilingVariant, geometry: &CacheGeometry) -> Result<Self> {
        let q = geometry.sets;
        let spc = geometry.blocks_per_page().min(q) as f64;
        let mut sets = Vec::new();
        for &(a, b) in variant.fractions() {
            if (q * a) % b != 0 {
                return Err(Error::config(format!(
                    "{q} sets cannot be divided into {a}/{b} for {variant:?} profiling"
                )));
            }
            sets.push(q * a / b);
        }
        let colors = sets.iter().map(|&s| s as f64 / spc).collect();
        Ok(Self {
            variant,
            sets,
            colors,
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Index of the point with exactly `sets` sets.
    pub fn index_of_sets(&self, sets: u64) -> Option<usize> {
        self.sets.iter().position(|&s| s == sets)
    }
}

/// True when the block belongs to a sampled set: the low `log2(r_s)` index
/// bits are all zero.
pub fn sample_filter(block_address: u64, r_s: u32) -> bool {
    debug_assert!(r_s.is_power_of_two());
    block_address & (u64::from(r_s) - 1) == 0
}

/// Whether emulator tag stores are private per core or shared by all cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RceDomain {
    PerCore,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RceConfig {
    pub variant: ProfilingVariant,
    pub sample_ratio: u32,
    pub domain: RceDomain,
    pub policy: ReplacementPolicy,
}

/// Raw counters of one core at one profiling point.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PointCounters {
    pub accesses: u64,
    pub loads: u64,
    pub hits: u64,
    pub misses: u64,
    pub load_misses: u64,
    /// `way_hits[k]` counts hits at recency position `k + 1` (1 = MRU).
    pub way_hits: Vec<u64>,
    pub way_load_hits: Vec<u64>,
}

impl PointCounters {
    fn new(assoc: u32) -> Self {
        Self {
            way_hits: vec![0; assoc as usize],
            way_load_hits: vec![0; assoc as usize],
            ..Self::default()
        }
    }

    fn reset(&mut self) {
        let assoc = self.way_hits.len() as u32;
        *self = Self::new(assoc);
    }
}

/// Sampled hits and misses that a cache with fewer ways would see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WayProfile {
    pub hits: u64,
    pub misses: u64,
    pub load_misses: u64,
}

/// Tag-only store with the same victim rules as the main cache.
#[derive(Debug, Clone)]
struct TagStore {
    sets: u64,
    assoc: usize,
    tags: Vec<u64>,
    stamp: Vec<u64>,
    inserted: Vec<u64>,
    mru: Vec<bool>,
    tick: u64,
}

const INVALID: u64 = u64::MAX;

impl TagStore {
    fn new(sets: u64, assoc: u32) -> Self {
        let n = sets as usize * assoc as usize;
        Self {
            sets,
            assoc: assoc as usize,
            tags: vec![INVALID; n],
            stamp: vec![0; n],
            inserted: vec![0; n],
            mru: vec![false; n],
            tick: 0,
        }
    }

    /// Returns the LRU recency position of a hit (1 = MRU), or `None`.
    fn access(&mut self, set: u64, tag: u64, policy: ReplacementPolicy) -> Option<u32> {
        self.tick += 1;
        let base = set as usize * self.assoc;
        let range = base..base + self.assoc;
        if let Some(w) = self.tags[range.clone()].iter().position(|&t| t == tag) {
            let last = self.stamp[base + w];
            let pos = 1 + self.tags[range.clone()]
                .iter()
                .zip(&self.stamp[range])
                .filter(|&(&t, &s)| t != INVALID && s > last)
                .count() as u32;
            self.stamp[base + w] = self.tick;
            self.touch(base, w, policy);
            return Some(pos);
        }
        let w = match self.tags[range.clone()].iter().position(|&t| t == INVALID) {
            Some(w) => w,
            None => match policy {
                ReplacementPolicy::Lru => argmin(&self.stamp[range]),
                ReplacementPolicy::Fifo => argmin(&self.inserted[range]),
                ReplacementPolicy::Plru => self.mru[range].iter().position(|&m| !m).unwrap_or(0),
            },
        };
        self.tags[base + w] = tag;
        self.stamp[base + w] = self.tick;
        self.inserted[base + w] = self.tick;
        self.mru[base + w] = false;
        self.touch(base, w, policy);
        None
    }

    fn touch(&mut self, base: usize, way: usize, policy: ReplacementPolicy) {
        if policy != ReplacementPolicy::Plru {
            return;
        }
        let bits = &mut self.mru[base..base + self.assoc];
        bits[way] = true;
        if bits.iter().all(|&b| b) {
            for (w, b) in bits.iter_mut().enumerate() {
                *b = w == way;
            }
        }
    }
}

fn argmin(v: &[u64]) -> usize {
    v.iter()
        .enumerate()
        .min_by_key(|&(_, &x)| x)
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// The reconfigurable cache emulator for all cores of a scenario.
#[derive(Debug, Clone)]
pub struct RceState {
    config: RceConfig,
    points: ProfilingPoints,
    assoc: u32,
    shift: u32,
    /// `[domain][point]`.
    stores: Vec<Vec<TagStore>>,
    /// `[core][point]`.
    counters: Vec<Vec<PointCounters>>,
    sampled: Vec<u64>,
}

impl RceState {
    pub fn new(config: RceConfig, geometry: &CacheGeometry, cores: usize) -> Result<Self> {
        if !config.sample_ratio.is_power_of_two() {
            return Err(Error::config(format!(
                "sampling ratio {} is not a power of two",
                config.sample_ratio
            )));
        }
        if cores == 0 {
            return Err(Error::config("emulator needs at least one core"));
        }
        let points = ProfilingPoints::new(config.variant, geometry)?;
        let assoc = geometry.assoc;
        let r = u64::from(config.sample_ratio);
        let domains = match config.domain {
            RceDomain::PerCore => cores,
            RceDomain::Shared => 1,
        };
        let stores = (0..domains)
            .map(|_| {
                points
                    .sets
                    .iter()
                    .map(|&s| TagStore::new(s.div_ceil(r).max(1), assoc))
                    .collect()
            })
            .collect();
        let counters = (0..cores)
            .map(|_| points.sets.iter().map(|_| PointCounters::new(assoc)).collect())
            .collect();
        Ok(Self {
            config,
            points,
            assoc,
            shift: config.sample_ratio.trailing_zeros(),
            stores,
            counters,
            sampled: vec![0; cores],
        })
    }

    pub fn config(&self) -> &RceConfig {
        &self.config
    }

    pub fn points(&self) -> &ProfilingPoints {
        &self.points
    }

    pub fn cores(&self) -> usize {
        self.counters.len()
    }

    /// Sampled set count of every point.
    pub fn sampled_sets(&self) -> Vec<u64> {
        self.stores[0].iter().map(|s| s.sets).collect()
    }

    /// Feeds one LLC access. Returns whether it passed the sampling filter.
    pub fn access(&mut self, core: usize, block_address: u64, kind: AccessKind) -> bool {
        if !sample_filter(block_address, self.config.sample_ratio) {
            return false;
        }
        self.sampled[core] += 1;
        let domain = match self.config.domain {
            RceDomain::PerCore => core,
            RceDomain::Shared => 0,
        };
        let idx = block_address >> self.shift;
        let policy = self.config.policy;
        for (store, c) in self.stores[domain].iter_mut().zip(&mut self.counters[core]) {
            let set = idx % store.sets;
            c.accesses += 1;
            if kind.is_load() {
                c.loads += 1;
            }
            match store.access(set, block_address, policy) {
                Some(pos) => {
                    c.hits += 1;
                    let k = (pos - 1) as usize;
                    c.way_hits[k] += 1;
                    if kind.is_load() {
                        c.way_load_hits[k] += 1;
                    }
                }
                None => {
                    c.misses += 1;
                    if kind.is_load() {
                        c.load_misses += 1;
                    }
                }
            }
        }
        true
    }

    /// Sampled accesses seen by `core` since the last reset.
    pub fn sampled_accesses(&self, core: usize) -> u64 {
        self.sampled[core]
    }

    /// Total emulator lookups since the last reset (one per sampled access).
    pub fn total_sampled(&self) -> u64 {
        self.sampled.iter().sum()
    }

    pub fn counters(&self, core: usize, point: usize) -> &PointCounters {
        &self.counters[core][point]
    }

    /// Full-cache estimate `(misses, load_misses)`: raw counters × R_s.
    pub fn miss_estimate(&self, core: usize, point: usize) -> Result<(u64, u64)> {
        let c = self
            .counters
            .get(core)
            .and_then(|v| v.get(point))
            .ok_or_else(|| Error::config(format!("no profiling point {point} for core {core}")))?;
        let r = u64::from(self.config.sample_ratio);
        Ok((c.misses * r, c.load_misses * r))
    }

    /// Scaled miss curve of one core over the color-count knots.
    pub fn curve(&self, core: usize) -> MissCurve {
        let r = f64::from(self.config.sample_ratio);
        let cs = &self.counters[core];
        MissCurve {
            colors: self.points.colors.clone(),
            misses: cs.iter().map(|c| c.misses as f64 * r).collect(),
            load_misses: cs.iter().map(|c| c.load_misses as f64 * r).collect(),
            accesses: self.sampled[core] as f64 * r,
        }
    }

    /// Raw sampled outcome of `core` at `point` if only `ways` ways existed.
    pub fn way_profile(&self, core: usize, point: usize, ways: u32) -> Result<WayProfile> {
        way_profile(&self.counters[core][point], self.config.policy, ways)
    }

    /// Like [`RceState::way_profile`] but summed over cores.
    pub fn way_profile_all(&self, point: usize, ways: u32) -> Result<WayProfile> {
        let mut total = WayProfile {
            hits: 0,
            misses: 0,
            load_misses: 0,
        };
        for core in 0..self.cores() {
            let p = self.way_profile(core, point, ways)?;
            total.hits += p.hits;
            total.misses += p.misses;
            total.load_misses += p.load_misses;
        }
        Ok(total)
    }

    pub fn assoc(&self) -> u32 {
        self.assoc
    }

    /// Clears counters; tag stores stay warm.
    pub fn reset_counters(&mut self) {
        for per_core in &mut self.counters {
            for c in per_core {
                c.reset();
            }
        }
        self.sampled.iter_mut().for_each(|s| *s = 0);
    }
}

/// Hits and misses at `ways` ways from a recency histogram.
pub fn way_profile(counters: &PointCounters, policy: ReplacementPolicy, ways: u32) -> Result<WayProfile> {
    if policy != ReplacementPolicy::Lru {
        return Err(Error::config("way profiling requires LRU replacement"));
    }
    if ways == 0 || ways as usize > counters.way_hits.len() {
        return Err(Error::config(format!("way count {ways} out of range")));
    }
    let w = ways as usize;
    let hits: u64 = counters.way_hits[..w].iter().sum();
    let load_hits: u64 = counters.way_load_hits[..w].iter().sum();
    Ok(WayProfile {
        hits,
        misses: counters.accesses - hits,
        load_misses: counters.loads - load_hits,
    })
}

/// Emulator storage requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RceSize {
    /// Sampled sets across all cores and points.
    pub total_sets: u64,
    /// Tag storage as a percentage of the LLC's tag+data storage.
    pub percent_of_llc: f64,
}

/// Storage of an `n`-core emulator: `n × Σ point_sets / R_s` sets of `G`-bit
/// tags, relative to the LLC's `Q × (L + G)` bits per way.
pub fn rce_size(
    geometry: &CacheGeometry,
    cores: u32,
    sample_ratio: u32,
    variant: ProfilingVariant,
    tag_bits: u32,
) -> Result<RceSize> {
    let points = ProfilingPoints::new(variant, geometry)?;
    let r = u64::from(sample_ratio);
    let total_sets = u64::from(cores) * points.sets.iter().map(|&s| s.div_ceil(r).max(1)).sum::<u64>();
    let g = f64::from(tag_bits);
    let l = (geometry.block_bytes * 8) as f64;
    let percent_of_llc =
        f64::from(cores) * variant.size_fraction() * g / (f64::from(sample_ratio) * (l + g)) * 100.0;
    Ok(RceSize {
        total_sets,
        percent_of_llc,
    })
}
