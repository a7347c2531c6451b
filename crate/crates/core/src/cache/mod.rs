//! Tag-only set-associative cache with color-granular power gating.
//!
//! The cache never stores data. Each line carries the bookkeeping needed for
//! miss/writeback accounting, per-core flushes and the three supported
//! replacement policies. Power can be removed per color (a contiguous run of
//! `blocks_per_page` sets), per way (the highest-indexed ways go first) or per
//! line (decay).

mod geometry;

pub use geometry::{
    derive_geometry, derive_geometry_with_address_bits, CacheGeometry, DEFAULT_ADDRESS_BITS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementPolicy {
    Lru,
    Fifo,
    /// MRU-bit pseudo-LRU.
    Plru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Load,
    Store,
}

impl AccessKind {
    pub fn is_load(self) -> bool {
        matches!(self, AccessKind::Load)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub evicted_dirty: bool,
    pub victim_tag: Option<u64>,
    pub is_load: bool,
    /// Recency rank of the hit line among the valid lines of its set (1 = MRU).
    pub hit_position: Option<u32>,
    /// Way that now holds the block.
    pub way: u32,
    /// The fill landed in a line that had been decayed and had to be woken.
    pub woke_line: bool,
}

/// Clean and dirty line counts removed by a flush.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushCount {
    pub clean: u64,
    pub dirty: u64,
}

impl FlushCount {
    pub fn total(&self) -> u64 {
        self.clean + self.dirty
    }
}

impl std::ops::AddAssign for FlushCount {
    fn add_assign(&mut self, rhs: Self) {
        self.clean += rhs.clean;
        self.dirty += rhs.dirty;
    }
}

/// Read-only view of a valid line, handed to flush predicates.
#[derive(Debug, Clone, Copy)]
pub struct LineView {
    pub set: u64,
    pub way: u32,
    pub tag: u64,
    pub owner: u16,
    pub dirty: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    tag: u64,
    last_use: u64,
    inserted: u64,
    owner: u16,
    valid: bool,
    dirty: bool,
    mru: bool,
    decayed: bool,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    geometry: CacheGeometry,
    policy: ReplacementPolicy,
    sets_per_color: u64,
    lines: Vec<Line>,
    color_on: Vec<bool>,
    active_ways: u32,
    decayed: u64,
    tick: u64,
}

impl CacheState {
    /// Creates an empty cache with every color and way powered on.
    pub fn new(geometry: CacheGeometry, policy: ReplacementPolicy) -> Self {
        let spc = geometry.blocks_per_page().min(geometry.sets);
        let colors = (geometry.sets / spc) as usize;
        Self {
            geometry,
            policy,
            sets_per_color: spc,
            lines: vec![Line::default(); geometry.total_blocks() as usize],
            color_on: vec![true; colors],
            active_ways: geometry.assoc,
            decayed: 0,
            tick: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn policy(&self) -> ReplacementPolicy {
        self.policy
    }

    pub fn num_colors(&self) -> u32 {
        self.color_on.len() as u32
    }

    pub fn sets_per_color(&self) -> u64 {
        self.sets_per_color
    }

    pub fn color_of_set(&self, set: u64) -> u32 {
        (set / self.sets_per_color) as u32
    }

    pub fn is_color_on(&self, color: u32) -> bool {
        self.color_on[color as usize]
    }

    pub fn colors_on(&self) -> u32 {
        self.color_on.iter().filter(|&&on| on).count() as u32
    }

    pub fn active_ways(&self) -> u32 {
        self.active_ways
    }

    fn idx(&self, set: u64, way: u32) -> usize {
        (set * u64::from(self.geometry.assoc) + u64::from(way)) as usize
    }

    fn set_lines(&self, set: u64) -> &[Line] {
        let a = self.geometry.assoc as usize;
        let base = set as usize * a;
        &self.lines[base..base + a]
    }

    /// Performs one tag-only access to `set`.
    ///
    /// Hits refresh replacement metadata and set the dirty bit on stores.
    /// Misses fill the block into an invalid way if there is one, otherwise into
    /// the policy victim, recording `core` as owner.
    pub fn access(&mut self, core: u16, kind: AccessKind, set: u64, tag: u64) -> Result<AccessOutcome> {
        if set >= self.geometry.sets {
            return Err(Error::invariant(format!("set {set} out of range")));
        }
        let color = self.color_of_set(set);
        if !self.color_on[color as usize] {
            return Err(Error::invariant(format!(
                "access routed to powered-off color {color}"
            )));
        }
        self.tick += 1;
        let now = self.tick;
        let ways = self.active_ways;
        let assoc = self.geometry.assoc as usize;
        let base = set as usize * assoc;

        let hit_way = (0..ways).find(|&w| {
            let l = &self.lines[base + w as usize];
            l.valid && l.tag == tag
        });

        if let Some(w) = hit_way {
            let last = self.lines[base + w as usize].last_use;
            let position = 1 + self.lines[base..base + ways as usize]
                .iter()
                .filter(|l| l.valid && l.last_use > last)
                .count() as u32;
            let line = &mut self.lines[base + w as usize];
            line.last_use = now;
            if !kind.is_load() {
                line.dirty = true;
            }
            self.touch_mru(base, w);
            return Ok(AccessOutcome {
                hit: true,
                evicted_dirty: false,
                victim_tag: None,
                is_load: kind.is_load(),
                hit_position: Some(position),
                way: w,
                woke_line: false,
            });
        }

        let victim = self.victim(base, ways);
        let line = &mut self.lines[base + victim as usize];
        let (evicted_dirty, victim_tag) = if line.valid {
            (line.dirty, Some(line.tag))
        } else {
            (false, None)
        };
        let woke_line = line.decayed;
        *line = Line {
            tag,
            last_use: now,
            inserted: now,
            owner: core,
            valid: true,
            dirty: !kind.is_load(),
            mru: false,
            decayed: false,
        };
        if woke_line {
            self.decayed -= 1;
        }
        self.touch_mru(base, victim);
        Ok(AccessOutcome {
            hit: false,
            evicted_dirty,
            victim_tag,
            is_load: kind.is_load(),
            hit_position: None,
            way: victim,
            woke_line,
        })
    }

    fn victim(&self, base: usize, ways: u32) -> u32 {
        let lines = &self.lines[base..base + ways as usize];
        if let Some(w) = lines.iter().position(|l| !l.valid) {
            return w as u32;
        }
        let pick = match self.policy {
            ReplacementPolicy::Lru => lines
                .iter()
                .enumerate()
                .min_by_key(|(_, l)| l.last_use)
                .map(|(w, _)| w),
            ReplacementPolicy::Fifo => lines
                .iter()
                .enumerate()
                .min_by_key(|(_, l)| l.inserted)
                .map(|(w, _)| w),
            ReplacementPolicy::Plru => lines.iter().position(|l| !l.mru),
        };
        pick.unwrap_or(0) as u32
    }

    fn touch_mru(&mut self, base: usize, way: u32) {
        if self.policy != ReplacementPolicy::Plru {
            return;
        }
        let ways = self.active_ways as usize;
        self.lines[base + way as usize].mru = true;
        if self.lines[base..base + ways].iter().all(|l| l.mru) {
            for (w, l) in self.lines[base..base + ways].iter_mut().enumerate() {
                l.mru = w == way as usize;
            }
        }
    }

    /// Invalidates every valid line of `color` accepted by `pred`.
    pub fn flush_lines<F>(&mut self, color: u32, mut pred: F) -> FlushCount
    where
        F: FnMut(&LineView) -> bool,
    {
        let assoc = self.geometry.assoc;
        let first = u64::from(color) * self.sets_per_color;
        let mut count = FlushCount::default();
        for set in first..first + self.sets_per_color {
            for way in 0..assoc {
                let i = self.idx(set, way);
                let l = self.lines[i];
                if !l.valid {
                    continue;
                }
                let view = LineView {
                    set,
                    way,
                    tag: l.tag,
                    owner: l.owner,
                    dirty: l.dirty,
                };
                if pred(&view) {
                    if l.dirty {
                        count.dirty += 1;
                    } else {
                        count.clean += 1;
                    }
                    let line = &mut self.lines[i];
                    line.valid = false;
                    line.dirty = false;
                    line.mru = false;
                }
            }
        }
        count
    }

    /// Flushes a color, optionally only the lines owned by one core.
    pub fn flush_color(&mut self, color: u32, only_core: Option<u16>) -> FlushCount {
        self.flush_lines(color, |l| only_core.map_or(true, |c| l.owner == c))
    }

    pub fn flush_all(&mut self) -> FlushCount {
        let mut total = FlushCount::default();
        for c in 0..self.num_colors() {
            total += self.flush_color(c, None);
        }
        total
    }

    /// Switches a color on or off and returns the number of line transitions.
    ///
    /// A color must hold no valid line before it can be switched off.
    pub fn set_color_power(&mut self, color: u32, on: bool) -> Result<u64> {
        let c = color as usize;
        if c >= self.color_on.len() {
            return Err(Error::invariant(format!("color {color} out of range")));
        }
        if self.color_on[c] == on {
            return Ok(0);
        }
        let first = u64::from(color) * self.sets_per_color;
        let assoc = self.geometry.assoc;
        if !on {
            for set in first..first + self.sets_per_color {
                for way in 0..assoc {
                    if self.lines[self.idx(set, way)].valid {
                        return Err(Error::invariant(format!(
                            "power-off of color {color} with valid lines"
                        )));
                    }
                }
            }
        }
        for set in first..first + self.sets_per_color {
            for way in 0..assoc {
                let i = self.idx(set, way);
                if self.lines[i].decayed {
                    self.lines[i].decayed = false;
                    self.decayed -= 1;
                }
                self.lines[i].mru = false;
            }
        }
        self.color_on[c] = on;
        Ok(self.sets_per_color * u64::from(assoc))
    }

    /// Changes the number of active ways. Lines in ways being switched off are
    /// flushed first; transitions count the lines that change power state in
    /// powered colors.
    pub fn set_active_ways(&mut self, ways: u32) -> Result<(FlushCount, u64)> {
        if ways == 0 || ways > self.geometry.assoc {
            return Err(Error::invariant(format!("active ways {ways} out of range")));
        }
        let old = self.active_ways;
        if ways == old {
            return Ok((FlushCount::default(), 0));
        }
        let (lo, hi) = if ways < old { (ways, old) } else { (old, ways) };
        let mut flushed = FlushCount::default();
        let mut transitions = 0;
        for set in 0..self.geometry.sets {
            if !self.color_on[self.color_of_set(set) as usize] {
                continue;
            }
            for way in lo..hi {
                let i = self.idx(set, way);
                let line = &mut self.lines[i];
                if line.valid {
                    if line.dirty {
                        flushed.dirty += 1;
                    } else {
                        flushed.clean += 1;
                    }
                }
                if line.decayed {
                    self.decayed -= 1;
                }
                *line = Line::default();
                transitions += 1;
            }
            if ways < old && self.policy == ReplacementPolicy::Plru {
                let base = self.idx(set, 0);
                let act = &mut self.lines[base..base + ways as usize];
                if act.iter().all(|l| l.mru) {
                    act.iter_mut().for_each(|l| l.mru = false);
                }
            }
        }
        self.active_ways = ways;
        Ok((flushed, transitions))
    }

    /// Turns off a single line (cache decay). Returns what was flushed, or
    /// `None` when the line was already off or lies in unpowered space.
    pub fn decay_line(&mut self, set: u64, way: u32) -> Option<FlushCount> {
        if way >= self.active_ways || !self.color_on[self.color_of_set(set) as usize] {
            return None;
        }
        let i = self.idx(set, way);
        let line = &mut self.lines[i];
        if line.decayed {
            return None;
        }
        let mut f = FlushCount::default();
        if line.valid {
            if line.dirty {
                f.dirty = 1;
            } else {
                f.clean = 1;
            }
        }
        *line = Line {
            decayed: true,
            ..Line::default()
        };
        self.decayed += 1;
        Some(f)
    }

    pub fn is_decayed(&self, set: u64, way: u32) -> bool {
        self.lines[self.idx(set, way)].decayed
    }

    /// Lines currently drawing normal leakage power.
    pub fn powered_lines(&self) -> u64 {
        u64::from(self.colors_on()) * self.sets_per_color * u64::from(self.active_ways) - self.decayed
    }

    pub fn active_fraction(&self) -> f64 {
        self.powered_lines() as f64 / self.geometry.total_blocks() as f64
    }

    pub fn valid_lines(&self) -> u64 {
        self.lines.iter().filter(|l| l.valid).count() as u64
    }

    pub fn is_valid(&self, set: u64, way: u32) -> bool {
        self.lines[self.idx(set, way)].valid
    }

    pub fn line(&self, set: u64, way: u32) -> Option<LineView> {
        let l = self.lines[self.idx(set, way)];
        l.valid.then_some(LineView {
            set,
            way,
            tag: l.tag,
            owner: l.owner,
            dirty: l.dirty,
        })
    }

    /// True when `tag` is resident in `set`.
    pub fn contains(&self, set: u64, tag: u64) -> bool {
        self.set_lines(set).iter().any(|l| l.valid && l.tag == tag)
    }

    /// Checks that no valid line sits in unpowered space and that recency
    /// stamps of valid lines are distinct within each set.
    pub fn check_invariants(&self) -> Result<()> {
        let assoc = self.geometry.assoc;
        for set in 0..self.geometry.sets {
            let on = self.color_on[self.color_of_set(set) as usize];
            let lines = self.set_lines(set);
            for (way, l) in lines.iter().enumerate() {
                if l.valid && (!on || way as u32 >= self.active_ways) {
                    return Err(Error::invariant(format!(
                        "valid line in unpowered space at set {set} way {way}"
                    )));
                }
                if l.valid && l.decayed {
                    return Err(Error::invariant("decayed line marked valid"));
                }
            }
            let mut stamps: Vec<u64> = lines.iter().filter(|l| l.valid).map(|l| l.last_use).collect();
            stamps.sort_unstable();
            if stamps.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invariant(format!("recency order broken in set {set}")));
            }
            debug_assert!(lines.len() == assoc as usize);
        }
        Ok(())
    }
}
