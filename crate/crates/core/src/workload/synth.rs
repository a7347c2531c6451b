use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trace::{Trace, TraceEvent, TraceHeader, TRACE_VERSION};
use crate::cache::AccessKind;
use crate::error::{Error, Result};
use crate::perf::CoreTiming;

/// Address pattern of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Pattern {
    /// Cycles through `wss_blocks` distinct blocks.
    Loop { wss_blocks: u64 },
    /// Never reuses a block.
    Stream {
        #[serde(default = "one")]
        stride_blocks: u64,
    },
    /// Uniform over `footprint_blocks` blocks.
    Random { footprint_blocks: u64 },
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub duration_events: u64,
    pub pattern: Pattern,
    #[serde(default)]
    pub store_fraction: f64,
    /// LLC accesses per thousand instructions.
    pub events_per_kilo_instr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSpec {
    /// Events this core emits per interleaving round.
    #[serde(default = "one")]
    pub weight: u64,
    #[serde(default = "default_cpi")]
    pub base_cpi: f64,
    #[serde(default = "default_penalty")]
    pub miss_penalty: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    #[serde(rename = "phase")]
    pub phases: Vec<Phase>,
}

fn default_cpi() -> f64 {
    1.0
}

fn default_penalty() -> f64 {
    200.0
}

fn default_overlap() -> f64 {
    1.0
}

/// Recipe for a synthetic multicore LLC access stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_page")]
    pub page_bytes: u64,
    #[serde(default = "default_block")]
    pub block_bytes: u64,
    #[serde(default = "default_address_bits")]
    pub address_bits: u32,
    #[serde(rename = "core")]
    pub cores: Vec<CoreSpec>,
}

fn default_page() -> u64 {
    4096
}

fn default_block() -> u64 {
    64
}

fn default_address_bits() -> u32 {
    crate::cache::DEFAULT_ADDRESS_BITS
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cores.is_empty() || self.cores.len() > usize::from(u16::MAX) {
            return Err(Error::config("spec needs at least one core"));
        }
        if !self.page_bytes.is_power_of_two()
            || !self.block_bytes.is_power_of_two()
            || self.page_bytes < self.block_bytes
        {
            return Err(Error::config("page and block sizes must be powers of two, page >= block"));
        }
        let page_bits = self.page_bytes.trailing_zeros();
        if self.address_bits <= page_bits + 8 || self.address_bits > 60 {
            return Err(Error::config("address_bits out of range"));
        }
        for (n, c) in self.cores.iter().enumerate() {
            if c.weight == 0 {
                return Err(Error::config(format!("core {n}: weight must be positive")));
            }
            CoreTiming {
                base_cpi: c.base_cpi,
                miss_penalty: c.miss_penalty,
                overlap: c.overlap,
            }
            .validate()
            .map_err(|e| Error::config(format!("core {n}: {e}")))?;
            if c.phases.is_empty() {
                return Err(Error::config(format!("core {n}: at least one phase required")));
            }
            for (p, ph) in c.phases.iter().enumerate() {
                let bad = |m: &str| Error::config(format!("core {n} phase {p}: {m}"));
                if ph.duration_events == 0 {
                    return Err(bad("duration_events must be positive"));
                }
                if !(0.0..=1.0).contains(&ph.store_fraction) {
                    return Err(bad("store_fraction must lie in [0, 1]"));
                }
                if !(ph.events_per_kilo_instr > 0.0 && ph.events_per_kilo_instr <= 1000.0) {
                    return Err(bad("events_per_kilo_instr must lie in (0, 1000]"));
                }
                let size = match ph.pattern {
                    Pattern::Loop { wss_blocks } => wss_blocks,
                    Pattern::Stream { stride_blocks } => stride_blocks,
                    Pattern::Random { footprint_blocks } => footprint_blocks,
                };
                if size == 0 || size > 1 << 32 {
                    return Err(bad("pattern size must lie in 1..=2^32 blocks"));
                }
            }
        }
        Ok(())
    }

    pub fn total_events(&self) -> u64 {
        self.cores
            .iter()
            .flat_map(|c| &c.phases)
            .map(|p| p.duration_events)
            .sum()
    }

    /// SHA-256 over the canonical JSON form of the spec and the seed.
    pub fn fingerprint(&self, seed: u64) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(b"\nseed=");
        h.update(seed.to_string().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Per-core generator state.
struct CoreGen {
    phase: usize,
    emitted_in_phase: u64,
    cursor: u64,
    done: bool,
}

/// Maps (core, virtual page) to distinct random physical pages.
struct PagePlacer {
    map: HashMap<(u16, u64), u64>,
    used: HashSet<u64>,
    pages: u64,
}

impl PagePlacer {
    fn place(&mut self, rng: &mut ChaCha8Rng, core: u16, vpage: u64) -> u64 {
        if let Some(&p) = self.map.get(&(core, vpage)) {
            return p;
        }
        let p = loop {
            let p = rng.gen_range(0..self.pages);
            if self.used.insert(p) {
                break p;
            }
        };
        self.map.insert((core, vpage), p);
        p
    }
}

/// Virtual blocks of different phases never overlap.
const PHASE_SPAN_BITS: u32 = 40;

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bpp = spec.page_bytes / spec.block_bytes;
    let page_bits = spec.page_bytes.trailing_zeros();
    let mut placer = PagePlacer {
        map: HashMap::new(),
        used: HashSet::new(),
        pages: 1u64 << (spec.address_bits - page_bits),
    };
    let mut gens: Vec<CoreGen> = spec
        .cores
        .iter()
        .map(|_| CoreGen {
            phase: 0,
            emitted_in_phase: 0,
            cursor: 0,
            done: false,
        })
        .collect();
    let mut events = Vec::with_capacity(spec.total_events() as usize);
    while gens.iter().any(|g| !g.done) {
        for (n, (cs, g)) in spec.cores.iter().zip(gens.iter_mut()).enumerate() {
            for _ in 0..cs.weight {
                if g.done {
                    break;
                }
                let ph = &cs.phases[g.phase];
                let offset = match ph.pattern {
                    Pattern::Loop { wss_blocks } => {
                        let b = g.cursor % wss_blocks;
                        g.cursor += 1;
                        b
                    }
                    Pattern::Stream { stride_blocks } => {
                        let b = g.cursor;
                        g.cursor += stride_blocks;
                        b
                    }
                    Pattern::Random { footprint_blocks } => rng.gen_range(0..footprint_blocks),
                };
                let vblock = ((g.phase as u64) << PHASE_SPAN_BITS) + offset;
                let ppage = placer.place(&mut rng, n as u16, vblock / bpp);
                let kind = if ph.store_fraction > 0.0 && rng.gen_bool(ph.store_fraction) {
                    AccessKind::Store
                } else {
                    AccessKind::Load
                };
                let mean = 1000.0 / ph.events_per_kilo_instr;
                let top = ((2.0 * mean - 1.0).round() as u64).max(1);
                let instr_delta = rng.gen_range(1..=top);
                events.push(TraceEvent {
                    core: n as u16,
                    block_address: ppage * bpp + vblock % bpp,
                    kind,
                    instr_delta,
                });
                g.emitted_in_phase += 1;
                if g.emitted_in_phase == ph.duration_events {
                    g.phase += 1;
                    g.emitted_in_phase = 0;
                    g.cursor = 0;
                    g.done = g.phase == cs.phases.len();
                }
            }
        }
    }
    let header = TraceHeader {
        version: TRACE_VERSION,
        cores: spec.cores.len() as u16,
        address_bits: spec.address_bits,
        page_bytes: spec.page_bytes,
        timing: spec
            .cores
            .iter()
            .map(|c| CoreTiming {
                base_cpi: c.base_cpi,
                miss_penalty: c.miss_penalty,
                overlap: c.overlap,
            })
            .collect(),
        fingerprint: spec.fingerprint(seed),
    };
    Ok(Trace { header, events })
}
