//! Region-to-color mapping tables and the reconfiguration planner.
//!
//! Physical pages sharing the low `log2(M)` page-number bits form a memory
//! region. Every core (or, in shared mode, the single shared partition) owns a
//! table of `M` entries mapping each region to one of its colors. The set
//! inside a color comes from the page-offset bits above the block offset, so a
//! color spans exactly one page worth of sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheGeometry, CacheState, FlushCount};
use crate::error::{Error, Result};

/// Number of cache colors: `size / (page × assoc)`.
pub fn num_colors(geometry: &CacheGeometry) -> Result<u32> {
    let per_color = geometry.page_bytes * u64::from(geometry.assoc);
    if per_color == 0 || geometry.size_bytes % per_color != 0 || geometry.size_bytes < per_color {
        return Err(Error::config(format!(
            "page_bytes x assoc ({per_color}) does not divide cache size ({})",
            geometry.size_bytes
        )));
    }
    Ok((geometry.size_bytes / per_color) as u32)
}

/// Total mapping-table storage in bits for `cores` tables of `m` entries.
pub fn mapping_table_bits(cores: u32, m: u32) -> u64 {
    u64::from(cores) * u64::from(m) * u64::from(m.max(2).next_power_of_two().trailing_zeros())
}

pub fn page_of(block_address: u64, geometry: &CacheGeometry) -> u64 {
    block_address / geometry.blocks_per_page()
}

pub fn region_of(block_address: u64, geometry: &CacheGeometry, m: u32) -> u32 {
    (page_of(block_address, geometry) % u64::from(m)) as u32
}

/// Region of a line stored with a page-number tag.
pub fn region_of_tag(tag: u64, m: u32) -> u32 {
    (tag % u64::from(m)) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMap {
    table: Vec<u32>,
}

impl ColorMap {
    /// Spreads `m` regions round-robin over `colors` in ascending order. With
    /// all `m` colors this is the identity mapping.
    pub fn spread(m: u32, colors: &BTreeSet<u32>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::config("a color map needs at least one color"));
        }
        let list: Vec<u32> = colors.iter().copied().collect();
        Ok(Self {
            table: (0..m as usize).map(|r| list[r % list.len()]).collect(),
        })
    }

    pub fn identity(m: u32) -> Self {
        Self {
            table: (0..m).collect(),
        }
    }

    pub fn color(&self, region: u32) -> u32 {
        self.table[region as usize]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.table
    }

    /// Region count per color, for the colors in `colors`.
    pub fn load(&self, colors: &BTreeSet<u32>) -> Vec<(u32, usize)> {
        colors
            .iter()
            .map(|&c| (c, self.table.iter().filter(|&&x| x == c).count()))
            .collect()
    }
}

/// Where a block lives in a colored cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub color: u32,
    pub set_within_color: u64,
    pub set: u64,
    /// Full page number, so regions sharing a color never alias.
    pub tag: u64,
}

pub fn locate(block_address: u64, map: &ColorMap, geometry: &CacheGeometry) -> Location {
    let bpp = geometry.blocks_per_page();
    let m = map.len() as u32;
    let page = block_address / bpp;
    let region = (page % u64::from(m)) as u32;
    let color = map.color(region);
    let set_within_color = block_address % bpp;
    Location {
        color,
        set_within_color,
        set: u64::from(color) * bpp + set_within_color,
        tag: page,
    }
}

/// Disjoint color sets, one per partition, plus the powered-off remainder.
///
/// In partitioned mode a partition is a core; in shared mode there is a single
/// partition used by every core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    num_colors: u32,
    parts: Vec<BTreeSet<u32>>,
    off: BTreeSet<u32>,
}

impl Allocation {
    pub fn new(num_colors: u32, parts: Vec<BTreeSet<u32>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (p, set) in parts.iter().enumerate() {
            for &c in set {
                if c >= num_colors {
                    return Err(Error::config(format!("color {c} out of range (M={num_colors})")));
                }
                if !seen.insert(c) {
                    return Err(Error::config(format!(
                        "color {c} assigned twice (partition {p})"
                    )));
                }
            }
        }
        let off = (0..num_colors).filter(|c| !seen.contains(c)).collect();
        Ok(Self {
            num_colors,
            parts,
            off,
        })
    }

    /// Every color in one partition.
    pub fn full(num_colors: u32) -> Self {
        Self {
            num_colors,
            parts: vec![(0..num_colors).collect()],
            off: BTreeSet::new(),
        }
    }

    /// Contiguous equal split; the first `M mod n` partitions get one extra.
    pub fn equal_split(num_colors: u32, n: usize) -> Result<Self> {
        if n == 0 || n as u32 > num_colors {
            return Err(Error::config(format!("cannot split {num_colors} colors {n} ways")));
        }
        let base = num_colors / n as u32;
        let extra = num_colors % n as u32;
        let mut next = 0;
        let parts = (0..n as u32)
            .map(|p| {
                let k = base + u32::from(p < extra);
                let set: BTreeSet<u32> = (next..next + k).collect();
                next += k;
                set
            })
            .collect();
        Self::new(num_colors, parts)
    }

    /// Lowest-numbered `counts[p]` colors for each partition in order.
    pub fn packed(num_colors: u32, counts: &[u32]) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if total > num_colors {
            return Err(Error::config(format!("{total} colors requested, only {num_colors}")));
        }
        let mut next = 0;
        let parts = counts
            .iter()
            .map(|&k| {
                let set = (next..next + k).collect();
                next += k;
                set
            })
            .collect();
        Self::new(num_colors, parts)
    }

    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    pub fn parts(&self) -> &[BTreeSet<u32>] {
        &self.parts
    }

    pub fn part(&self, p: usize) -> &BTreeSet<u32> {
        &self.parts[p]
    }

    pub fn off(&self) -> &BTreeSet<u32> {
        &self.off
    }

    pub fn counts(&self) -> Vec<u32> {
        self.parts.iter().map(|s| s.len() as u32).collect()
    }

    pub fn active(&self) -> u32 {
        self.num_colors - self.off.len() as u32
    }
}

/// Picks concrete color IDs for new per-partition color counts.
///
/// Shrinking partitions give up their highest-numbered colors. Growing
/// partitions, in order, first take the lowest-numbered colors that were off,
/// then the highest-numbered donated colors. Unclaimed donations turn off.
pub fn assign_colors(old: &Allocation, counts: &[u32]) -> Result<Allocation> {
    if counts.len() != old.parts.len() {
        return Err(Error::config(format!(
            "expected {} partition counts, got {}",
            old.parts.len(),
            counts.len()
        )));
    }
    let total: u32 = counts.iter().sum();
    if total > old.num_colors {
        return Err(Error::config(format!(
            "{total} colors requested, only {} exist",
            old.num_colors
        )));
    }
    let mut parts = old.parts.clone();
    let mut donated: BTreeSet<u32> = BTreeSet::new();
    for (set, &want) in parts.iter_mut().zip(counts) {
        while set.len() as u32 > want {
            let c = *set.iter().next_back().expect("non-empty");
            set.remove(&c);
            donated.insert(c);
        }
    }
    let mut off = old.off.clone();
    for (set, &want) in parts.iter_mut().zip(counts) {
        while (set.len() as u32) < want {
            let c = if let Some(&c) = off.iter().next() {
                off.remove(&c);
                c
            } else {
                let c = *donated.iter().next_back().expect("enough colors by count check");
                donated.remove(&c);
                c
            };
            set.insert(c);
        }
    }
    Allocation::new(old.num_colors, parts)
}

/// Re-maps a partition's regions onto `colors`.
///
/// Each color ends up with `M / k` or `M / k + 1` regions. Regions already on a
/// retained color stay put unless that color is over quota; the colors that
/// already hold the most regions keep the larger quotas.
pub fn rebalance(old: &ColorMap, colors: &BTreeSet<u32>) -> Result<ColorMap> {
    if colors.is_empty() {
        return Err(Error::config("cannot map regions onto zero colors"));
    }
    let m = old.len();
    let k = colors.len();
    let base = m / k;
    let extra = m % k;

    let mut load = old.load(colors);
    // larger current load first, then lower color id
    load.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let quota: std::collections::BTreeMap<u32, usize> = load
        .iter()
        .enumerate()
        .map(|(i, &(c, _))| (c, base + usize::from(i < extra)))
        .collect();

    let mut table = old.table.clone();
    let mut held: std::collections::BTreeMap<u32, usize> = quota.keys().map(|&c| (c, 0)).collect();
    // over-quota colors keep their lowest regions and shed the rest
    let mut homeless: Vec<usize> = Vec::new();
    for (r, &c) in old.table.iter().enumerate() {
        match held.get_mut(&c) {
            Some(h) if *h < quota[&c] => *h += 1,
            _ => homeless.push(r),
        }
    }
    homeless.sort_unstable();
    let mut queue = homeless.into_iter();
    for (&c, &q) in &quota {
        let have = held[&c];
        for _ in have..q {
            let r = queue.next().expect("quotas sum to M");
            table[r] = c;
        }
    }
    debug_assert!(queue.next().is_none());
    Ok(ColorMap { table })
}

/// A region whose mapping moves off a color it keeps, so its old lines must go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFlush {
    pub part: usize,
    pub region: u32,
    pub old_color: u32,
}

/// Actions that take the cache from one allocation to another.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReconfigPlan {
    /// Colors taken from a partition: flush that partition's lines.
    pub color_flushes: Vec<(usize, u32)>,
    pub region_flushes: Vec<RegionFlush>,
    pub power_off: Vec<u32>,
    pub power_on: Vec<u32>,
    pub new_maps: Vec<ColorMap>,
}

impl ReconfigPlan {
    pub fn is_empty(&self) -> bool {
        self.color_flushes.is_empty()
            && self.region_flushes.is_empty()
            && self.power_off.is_empty()
            && self.power_on.is_empty()
    }

    /// Regions that change color, counted across partitions.
    pub fn moved_regions(&self, old_maps: &[ColorMap]) -> usize {
        old_maps
            .iter()
            .zip(&self.new_maps)
            .map(|(a, b)| a.table.iter().zip(&b.table).filter(|(x, y)| x != y).count())
            .sum()
    }
}

pub fn plan_reallocation(
    old: &Allocation,
    old_maps: &[ColorMap],
    new: &Allocation,
) -> Result<ReconfigPlan> {
    if old.num_colors != new.num_colors || old.parts.len() != new.parts.len() {
        return Err(Error::config("allocations differ in shape"));
    }
    if old_maps.len() != old.parts.len() {
        return Err(Error::config("one color map per partition required"));
    }
    // re-validate disjointness of the target
    Allocation::new(new.num_colors, new.parts.clone())?;

    let mut plan = ReconfigPlan::default();
    for (p, (was, now)) in old.parts.iter().zip(&new.parts).enumerate() {
        for &c in was.difference(now) {
            plan.color_flushes.push((p, c));
        }
        let map = if was == now {
            old_maps[p].clone()
        } else {
            rebalance(&old_maps[p], now)?
        };
        for r in 0..map.len() {
            let (a, b) = (old_maps[p].color(r as u32), map.color(r as u32));
            if a != b && now.contains(&a) {
                plan.region_flushes.push(RegionFlush {
                    part: p,
                    region: r as u32,
                    old_color: a,
                });
            }
        }
        plan.new_maps.push(map);
    }
    plan.power_off = new.off.difference(&old.off).copied().collect();
    plan.power_on = old.off.difference(&new.off).copied().collect();
    Ok(plan)
}

/// Outcome of applying a plan to a cache.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEffect {
    pub flushed: FlushCount,
    pub transitions: u64,
}

/// Applies a plan. With `shared` set, partition 0 is used by every core and
/// flushes ignore line ownership; otherwise partition `p` is core `p`.
pub fn apply_plan(cache: &mut CacheState, plan: &ReconfigPlan, shared: bool) -> Result<PlanEffect> {
    let m = cache.num_colors();
    let owner = |p: usize| if shared { None } else { Some(p as u16) };
    let mut effect = PlanEffect::default();
    for &(p, c) in &plan.color_flushes {
        effect.flushed += cache.flush_color(c, owner(p));
    }
    for f in &plan.region_flushes {
        let who = owner(f.part);
        effect.flushed += cache.flush_lines(f.old_color, |l| {
            who.map_or(true, |o| l.owner == o) && region_of_tag(l.tag, m) == f.region
        });
    }
    for &c in &plan.power_off {
        effect.transitions += cache.set_color_power(c, false)?;
    }
    for &c in &plan.power_on {
        effect.transitions += cache.set_color_power(c, true)?;
    }
    Ok(effect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{derive_geometry, AccessKind, ReplacementPolicy};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KB: u64 = 1024;
    const MB: u64 = 1024 * KB;

    fn geom(size: u64) -> CacheGeometry {
        derive_geometry(size, 8, 64, 4 * KB).unwrap()
    }

    #[test]
    fn color_counts() {
        assert_eq!(num_colors(&geom(4 * MB)).unwrap(), 128);
        assert_eq!(num_colors(&geom(2 * MB)).unwrap(), 64);
        assert_eq!(num_colors(&geom(8 * MB)).unwrap(), 256);
        let tiny = derive_geometry(16 * KB, 8, 64, 4 * KB).unwrap();
        assert!(num_colors(&tiny).is_err());
    }

    #[test]
    fn mapping_table_sizes() {
        assert_eq!(mapping_table_bits(4, 256), 8192);
        assert_eq!(mapping_table_bits(2, 128), 1792);
        assert_eq!(mapping_table_bits(1, 64), 384);
    }

    #[test]
    fn regions() {
        let g = geom(4 * MB);
        assert_eq!(region_of(0, &g, 128), 0);
        assert_eq!(region_of(129 * 64, &g, 128), 1);
        assert_eq!(region_of(5 * 64 + 3, &g, 128), region_of(5 * 64 + 60, &g, 128));
    }

    #[test]
    fn identity_map_matches_conventional_decoding() {
        let g = geom(2 * MB);
        let map = ColorMap::identity(64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let blk: u64 = rng.gen_range(0..1u64 << 39);
            assert_eq!(locate(blk, &map, &g).set, blk % g.sets);
        }
        assert_eq!(g.sets / 64, 64);
    }

    #[test]
    fn shared_color_distinct_tags() {
        let g = geom(2 * MB);
        let colors: BTreeSet<u32> = [7].into_iter().collect();
        let map = ColorMap::spread(64, &colors).unwrap();
        let a = locate(3 * 64 + 10, &map, &g);
        let b = locate(9 * 64 + 10, &map, &g);
        assert_eq!((a.color, a.set), (b.color, b.set));
        assert_ne!(a.tag, b.tag);
    }

    fn maps_for(a: &Allocation) -> Vec<ColorMap> {
        a.parts()
            .iter()
            .map(|s| ColorMap::spread(a.num_colors(), s).unwrap())
            .collect()
    }

    #[test]
    fn same_allocation_empty_plan() {
        let a = Allocation::equal_split(128, 2).unwrap();
        let plan = plan_reallocation(&a, &maps_for(&a), &a).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.new_maps, maps_for(&a));
    }

    #[test]
    fn shrink_single_core() {
        let a = Allocation::full(64);
        let maps = maps_for(&a);
        let b = assign_colors(&a, &[32]).unwrap();
        let plan = plan_reallocation(&a, &maps, &b).unwrap();
        assert_eq!(plan.color_flushes.len(), 32);
        assert_eq!(plan.power_off.len(), 32);
        assert!(plan.region_flushes.is_empty());
        assert_eq!(plan.moved_regions(&maps), 32);
        assert!(plan.color_flushes.iter().all(|&(_, c)| c >= 32));
    }

    #[test]
    fn move_one_color_between_cores() {
        let a = Allocation::equal_split(128, 2).unwrap();
        let maps = maps_for(&a);
        let b = assign_colors(&a, &[63, 65]).unwrap();
        let plan = plan_reallocation(&a, &maps, &b).unwrap();
        assert_eq!(plan.color_flushes, vec![(0, 63)]);
        assert!(plan.power_off.is_empty() && plan.power_on.is_empty());
        assert!(b.part(1).contains(&63));
        // core 1 has 64 regions per color count 1 -> 65 colors: one region moves
        assert_eq!(plan.region_flushes.len(), 1);
        assert_ne!(plan.new_maps[0], maps[0]);
        assert_ne!(plan.new_maps[1], maps[1]);
    }

    #[test]
    fn assign_prefers_off_colors() {
        let a = Allocation::packed(16, &[4, 4]).unwrap();
        let b = assign_colors(&a, &[2, 6]).unwrap();
        // core 0 donates 2,3; core 1 takes 8,9 (lowest off)
        assert_eq!(b.part(0), &[0, 1].into_iter().collect());
        assert_eq!(b.part(1), &[4, 5, 6, 7, 8, 9].into_iter().collect());
        assert!(b.off().contains(&2) && b.off().contains(&3));
        let c = assign_colors(&Allocation::packed(8, &[4, 4]).unwrap(), &[2, 6]).unwrap();
        assert_eq!(c.part(1), &[2, 3, 4, 5, 6, 7].into_iter().collect());
    }

    #[test]
    fn rejects_overlap() {
        let parts = vec![[1, 2].into_iter().collect(), [2, 3].into_iter().collect()];
        assert!(Allocation::new(8, parts).is_err());
        let a = Allocation::packed(8, &[4, 4]).unwrap();
        assert!(assign_colors(&a, &[5, 4]).is_err());
    }

    #[test]
    fn non_power_of_two_color_counts() {
        let a = Allocation::full(128);
        let b = assign_colors(&a, &[37]).unwrap();
        let plan = plan_reallocation(&a, &maps_for(&a), &b).unwrap();
        let map = &plan.new_maps[0];
        for r in 0..128 {
            assert!(b.part(0).contains(&map.color(r)));
        }
        let loads: Vec<usize> = map.load(b.part(0)).into_iter().map(|x| x.1).collect();
        assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
    }

    /// Lines that a new map can no longer reach, counted by brute force.
    fn unreachable_lines(cache: &CacheState, maps: &[ColorMap], shared: bool) -> u64 {
        let g = *cache.geometry();
        let m = cache.num_colors();
        let mut n = 0;
        for set in 0..g.sets {
            for way in 0..g.assoc {
                if let Some(l) = cache.line(set, way) {
                    let map = if shared { &maps[0] } else { &maps[l.owner as usize] };
                    if map.color(region_of_tag(l.tag, m)) != cache.color_of_set(set) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    fn replay_random(cores: usize, seed: u64, rounds: usize) {
        let g = derive_geometry(256 * KB, 4, 64, 1 * KB).unwrap(); // 64 colors of 16 sets
        let m = num_colors(&g).unwrap();
        let mut cache = CacheState::new(g, ReplacementPolicy::Lru);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alloc = Allocation::equal_split(m, cores).unwrap();
        let mut maps = maps_for(&alloc);
        for _ in 0..rounds {
            for _ in 0..2000 {
                let core = rng.gen_range(0..cores);
                let blk: u64 = rng.gen_range(0..20_000);
                let loc = locate(blk, &maps[core], &g);
                let kind = if rng.gen_bool(0.3) { AccessKind::Store } else { AccessKind::Load };
                cache.access(core as u16, kind, loc.set, loc.tag).unwrap();
            }
            let mut counts = vec![0u32; cores];
            let mut left = m;
            for (i, c) in counts.iter_mut().enumerate() {
                let reserve = (cores - i - 1) as u32;
                *c = rng.gen_range(1..=(left - reserve).min(m / 2 + 4));
                left -= *c;
            }
            let next = assign_colors(&alloc, &counts).unwrap();
            let plan = plan_reallocation(&alloc, &maps, &next).unwrap();
            let stale = unreachable_lines(&cache, &plan.new_maps, false);
            let effect = apply_plan(&mut cache, &plan, false).unwrap();
            assert_eq!(effect.flushed.total(), stale, "flush exactly the lines that became unreachable");
            assert_eq!(unreachable_lines(&cache, &plan.new_maps, false), 0);
            cache.check_invariants().unwrap();
            for (p, map) in plan.new_maps.iter().enumerate() {
                for r in 0..m {
                    assert!(next.part(p).contains(&map.color(r)));
                }
            }
            alloc = next;
            maps = plan.new_maps;
        }
    }

    #[test]
    fn plan_replay_two_cores() {
        replay_random(2, 11, 25);
    }

    #[test]
    fn plan_replay_four_cores() {
        replay_random(4, 12, 25);
    }

    proptest! {
        #[test]
        fn no_aliasing(pages in prop::collection::vec(0u64..1_000_000, 2..40), off in 0u64..64, k in 1u32..64) {
            let g = geom(2 * MB);
            let colors: BTreeSet<u32> = (0..k).collect();
            let map = ColorMap::spread(64, &colors).unwrap();
            let mut seen = std::collections::HashMap::new();
            for p in pages {
                let blk = p * 64 + off;
                let loc = locate(blk, &map, &g);
                if let Some(prev) = seen.insert((loc.set, loc.tag), blk) {
                    prop_assert_eq!(prev, blk);
                }
            }
        }

        #[test]
        fn rebalance_even_and_stable(old_k in 1u32..=64, new_k in 1u32..=64) {
            let all: Vec<u32> = (0..64).collect();
            let old_set: BTreeSet<u32> = all[..old_k as usize].iter().copied().collect();
            let new_set: BTreeSet<u32> = all[..new_k as usize].iter().copied().collect();
            let old = ColorMap::spread(64, &old_set).unwrap();
            let new = rebalance(&old, &new_set).unwrap();
            let loads: Vec<usize> = new.load(&new_set).into_iter().map(|x| x.1).collect();
            prop_assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
            // moved regions: at least those on dropped colors, at most those plus
            // the surplus above quota on retained colors
            let dropped = (0..64).filter(|&r| !new_set.contains(&old.color(r))).count();
            let moved = (0..64).filter(|&r| old.color(r) != new.color(r)).count();
            let kept: BTreeSet<u32> = new_set.intersection(&old_set).copied().collect();
            let base = 64 / new_k as usize;
            let hi = 64usize.div_ceil(new_k as usize);
            let load = old.load(&kept);
            let over_lo: usize = load.iter().map(|&(_, n)| n.saturating_sub(base)).sum();
            let over_hi: usize = load.iter().map(|&(_, n)| n.saturating_sub(hi)).sum();
            prop_assert!(moved >= dropped + over_hi);
            prop_assert!(moved <= dropped + over_lo);
        }
    }
}
