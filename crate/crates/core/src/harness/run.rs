use std::collections::BTreeSet;
use std::time::Instant;

use super::config::{BaselineMode, IntervalMode, PolicyName, ScenarioConfig};
use super::report::{totals_from_records, CoreInterval, CoreLedger, IntervalRecord, MidInterval, RunReport};
use crate::cache::{AccessKind, CacheGeometry, CacheState, FlushCount};
use crate::coloring::{self, apply_plan, assign_colors, locate, plan_reallocation, Allocation, ColorMap};
use crate::error::{Error, Result};
use crate::perf::{decay_interval, energy, CoreClock, CoreTiming, EnergyInputs, EnergyMode, EnergyParams};
use crate::policies::{
    Action, Cashier, CoreObservation, Dct, Decision, Encache, Manager, Master, Observation, Palette, Wac,
};
use crate::profiler::{RceConfig, RceDomain, RceState};
use crate::workload::{Trace, TraceHeader};

enum Engine {
    Static,
    Master(Master),
    Palette(Palette),
    Cashier(Cashier),
    Manager(Manager),
    Encache(Encache),
    Dct(Dct),
    Wac(Wac),
}

impl Engine {
    fn interval_policy(&self) -> bool {
        !matches!(self, Engine::Static | Engine::Dct(_) | Engine::Wac(_))
    }
}

/// Counters accumulated since the last boundary.
#[derive(Default)]
struct Open {
    cores: Vec<CoreInterval>,
    eviction_writebacks: u64,
    flush_writebacks: u64,
    transitions: u64,
    algo_cycles: u64,
    reconfig_cycles: u64,
    mid: MidInterval,
    start_cycle: f64,
    fraction_integral: f64,
    ways_integral: f64,
    events: u64,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    geometry: CacheGeometry,
    timing: Vec<CoreTiming>,
    params: EnergyParams,
    mode: EnergyMode,
    cache: CacheState,
    rce: Option<RceState>,
    engine: Engine,
    shared: bool,
    alloc: Allocation,
    maps: Vec<ColorMap>,
    set_state: u32,
    clocks: Vec<CoreClock>,
    /// Clocks at the previous boundary.
    marks: Vec<CoreClock>,
    global: f64,
    /// Global clock up to which the powered fraction has been integrated.
    integrated_to: f64,
    fraction: f64,
    ways: f64,
    open: Open,
    records: Vec<IntervalRecord>,
}

/// Simulates `trace` under the configured policy.
pub fn run(config: &ScenarioConfig, trace: &Trace) -> Result<RunReport> {
    let started = Instant::now();
    let mut sim = Sim::new(config, &trace.header)?;
    let mode = config.interval.mode()?;
    let mut next_cycle_boundary = 0.0;
    let mut next_instr_boundary = 0u64;
    let mut next_poll = 0.0;
    let mut instr_total = 0u64;
    match mode {
        IntervalMode::Cycles(c) => next_cycle_boundary = c as f64,
        IntervalMode::Instructions(i) => next_instr_boundary = i,
        IntervalMode::TargetInstructions { poll_cycles, .. } => next_poll = poll_cycles as f64,
    }
    let mut next_tick = match &sim.engine {
        Engine::Dct(d) => d.tick_cycles(),
        _ => f64::INFINITY,
    };

    for ev in &trace.events {
        sim.event(ev.core as usize, ev.block_address, ev.kind, ev.instr_delta)?;
        instr_total += ev.instr_delta;

        if sim.global >= next_tick {
            sim.decay_tick()?;
            let tick = match &sim.engine {
                Engine::Dct(d) => d.tick_cycles(),
                _ => unreachable!(),
            };
            while next_tick <= sim.global {
                next_tick += tick;
            }
        }

        match mode {
            IntervalMode::Cycles(c) => {
                if sim.global >= next_cycle_boundary {
                    sim.boundary()?;
                    // overheads charged at the boundary may push the clock on
                    while next_cycle_boundary <= sim.global {
                        next_cycle_boundary += c as f64;
                    }
                }
            }
            IntervalMode::Instructions(i) => {
                if instr_total >= next_instr_boundary {
                    sim.boundary()?;
                    while next_instr_boundary <= instr_total {
                        next_instr_boundary += i;
                    }
                }
            }
            IntervalMode::TargetInstructions { count, poll_cycles } => {
                if sim.global >= next_poll {
                    let target = sim.target_core();
                    if sim.clocks[target].instructions - sim.marks[target].instructions >= count {
                        sim.boundary()?;
                    }
                    while next_poll <= sim.global {
                        next_poll += poll_cycles as f64;
                    }
                }
            }
        }
    }
    if sim.open.events > 0 || sim.global > sim.open.start_cycle {
        sim.close(None)?;
    }
    let mut report = sim.finish(trace)?;
    report.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok(report)
}

/// Simulates `trace` with the policy disabled and baseline energy accounting.
pub fn run_baseline(config: &ScenarioConfig, trace: &Trace) -> Result<RunReport> {
    run(&config.with_policy(PolicyName::None), trace)
}

/// Errors when the trace cannot be simulated under `config`.
pub fn check_compatible(config: &ScenarioConfig, header: &TraceHeader) -> Result<()> {
    let g = config.geometry()?;
    if let Some(n) = config.cores {
        if n != header.cores {
            return Err(Error::Mismatch(format!(
                "scenario expects {n} cores, trace has {}",
                header.cores
            )));
        }
    }
    if header.page_bytes != g.page_bytes {
        return Err(Error::Mismatch(format!(
            "trace page size {} differs from cache page size {}",
            header.page_bytes, g.page_bytes
        )));
    }
    if header.address_bits != g.address_bits {
        return Err(Error::Mismatch(format!(
            "trace address width {} differs from cache address width {}",
            header.address_bits, g.address_bits
        )));
    }
    if header.timing.len() != header.cores as usize {
        return Err(Error::Mismatch("trace timing entries do not match its core count".into()));
    }
    if let IntervalMode::TargetInstructions { .. } = config.interval.mode()? {
        let target = config.manager.target.unwrap_or(0);
        if target >= header.cores as usize {
            return Err(Error::Mismatch(format!("target core {target} not in trace")));
        }
    }
    Ok(())
}

fn flush_writebacks(f: FlushCount) -> u64 {
    f.dirty
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, header: &TraceHeader) -> Result<Self> {
        cfg.validate()?;
        check_compatible(cfg, header)?;
        let geometry = cfg.geometry()?;
        let cores = header.cores as usize;
        let m = coloring::num_colors(&geometry)?;
        let replacement = cfg.replacement();
        let cache = CacheState::new(geometry, replacement);
        let base_params = cfg.energy_params()?;
        let policy = cfg.policy;

        let (engine, shared) = match policy {
            PolicyName::None => (Engine::Static, cfg.baseline == BaselineMode::Shared),
            PolicyName::Master => (Engine::Master(Master::new(cfg.master.clone())?), false),
            PolicyName::Palette => (Engine::Palette(Palette::new(cfg.palette.clone())?), true),
            PolicyName::CashierMsm | PolicyName::CashierPsm => {
                (Engine::Cashier(Cashier::new(cfg.cashier_config(), cores)?), true)
            }
            PolicyName::Manager => (Engine::Manager(Manager::new(cfg.manager.clone(), cores)?), false),
            PolicyName::Encache => (Engine::Encache(Encache::new(cfg.encache.clone())?), true),
            PolicyName::Dct => {
                let di = cfg.dct.decay_interval.unwrap_or_else(|| decay_interval(&base_params, &geometry));
                let tick = cfg.dct.tick_cycles.unwrap_or(di / 8.0);
                (Engine::Dct(Dct::new(di, tick, geometry.sets, geometry.assoc)?), true)
            }
            PolicyName::Wac => (Engine::Wac(Wac::new(cfg.wac.clone(), geometry.assoc)?), true),
        };
        let (params, mode) = match policy {
            PolicyName::None => (base_params, EnergyMode::Baseline),
            PolicyName::Dct | PolicyName::Wac => (base_params.without_rce(), EnergyMode::Technique),
            _ => (base_params, EnergyMode::Technique),
        };
        let rce = match cfg.profiling() {
            Some(variant) => Some(RceState::new(
                RceConfig {
                    variant,
                    sample_ratio: cfg.sample_ratio,
                    domain: if shared { RceDomain::Shared } else { RceDomain::PerCore },
                    policy: replacement,
                },
                &geometry,
                cores,
            )?),
            None => None,
        };
        let (alloc, maps) = if shared {
            (Allocation::full(m), vec![ColorMap::identity(m)])
        } else {
            let a = Allocation::equal_split(m, cores)?;
            let maps = a.parts().iter().map(|p| ColorMap::spread(m, p)).collect::<Result<Vec<_>>>()?;
            (a, maps)
        };
        let assoc = f64::from(geometry.assoc);
        Ok(Self {
            cfg,
            geometry,
            timing: header.timing.clone(),
            params,
            mode,
            cache,
            rce,
            engine,
            shared,
            alloc,
            maps,
            set_state: 0,
            clocks: vec![CoreClock::default(); cores],
            marks: vec![CoreClock::default(); cores],
            global: 0.0,
            integrated_to: 0.0,
            fraction: 1.0,
            ways: assoc,
            open: Open {
                cores: vec![CoreInterval::default(); cores],
                ..Open::default()
            },
            records: Vec::new(),
        })
    }

    fn target_core(&self) -> usize {
        match &self.engine {
            Engine::Manager(m) => m.target(),
            _ => self.cfg.manager.target.unwrap_or(0),
        }
    }

    /// Integrates the powered fraction up to the current global clock.
    fn integrate(&mut self) {
        let dt = self.global - self.integrated_to;
        if dt > 0.0 {
            self.open.fraction_integral += self.fraction * dt;
            self.open.ways_integral += self.ways * dt;
            self.integrated_to = self.global;
        }
    }

    fn power_changed(&mut self) {
        self.integrate();
        self.fraction = self.cache.active_fraction();
        self.ways = f64::from(self.cache.active_ways());
    }

    fn advance_global(&mut self, core: usize) {
        let c = self.clocks[core].cycles(&self.timing[core]);
        if c > self.global {
            self.global = c;
        }
    }

    fn charge_all(&mut self, cycles: u64) {
        if cycles == 0 {
            return;
        }
        for c in 0..self.clocks.len() {
            self.clocks[c].overhead_cycles += cycles;
            self.advance_global(c);
        }
        self.integrate();
    }

    fn event(&mut self, core: usize, block: u64, kind: AccessKind, instr_delta: u64) -> Result<()> {
        let map = if self.shared { &self.maps[0] } else { &self.maps[core] };
        let loc = locate(block, map, &self.geometry);
        let out = self.cache.access(core as u16, kind, loc.set, loc.tag)?;
        if let Some(rce) = &mut self.rce {
            rce.access(core, block, kind);
        }
        let stats = &mut self.open.cores[core];
        stats.accesses += 1;
        stats.instructions += instr_delta;
        if out.hit {
            stats.hits += 1;
        } else {
            stats.misses += 1;
            if out.is_load {
                stats.load_misses += 1;
            }
        }
        if out.evicted_dirty {
            stats.writebacks += 1;
            self.open.eviction_writebacks += 1;
        }
        self.open.events += 1;

        self.clocks[core].instructions += instr_delta;
        if !out.hit && out.is_load {
            self.clocks[core].load_misses += 1;
        }
        self.advance_global(core);

        let mut check_due = false;
        match &mut self.engine {
            Engine::Dct(d) => d.observe(loc.set, out.way, self.global),
            Engine::Wac(w) => {
                if let Some(pos) = out.hit_position {
                    check_due = w.observe_hit(pos);
                }
            }
            _ => {}
        }
        if out.woke_line {
            self.open.transitions += 1;
            self.open.mid.woken_lines += 1;
            self.power_changed();
        } else {
            self.integrate();
        }
        if check_due {
            self.way_check()?;
        }
        Ok(())
    }

    fn decay_tick(&mut self) -> Result<()> {
        let Engine::Dct(d) = &self.engine else {
            return Ok(());
        };
        let lines = d.tick(self.global, &self.cache);
        self.open.mid.checks += 1;
        let mut decayed = 0;
        for (set, way) in lines {
            if let Some(f) = self.cache.decay_line(set, way) {
                self.open.flush_writebacks += flush_writebacks(f);
                self.open.transitions += 1;
                decayed += 1;
            }
        }
        if decayed > 0 {
            self.open.mid.decayed_lines += decayed;
            self.open.mid.changes += 1;
            self.power_changed();
        }
        let cost = self.cfg.overheads.algo_dct;
        self.open.algo_cycles += cost;
        self.charge_all(cost);
        Ok(())
    }

    fn way_check(&mut self) -> Result<()> {
        let Engine::Wac(w) = &mut self.engine else {
            return Ok(());
        };
        let action = w.check(self.cache.active_ways());
        self.open.mid.checks += 1;
        let mut cost = self.cfg.overheads.algo_wac;
        self.open.algo_cycles += self.cfg.overheads.algo_wac;
        if let Action::Ways(ways) = action {
            self.set_ways(ways)?;
            self.open.mid.changes += 1;
            cost += self.cfg.overheads.reconfig;
            self.open.reconfig_cycles += self.cfg.overheads.reconfig;
        }
        self.charge_all(cost);
        Ok(())
    }

    fn set_ways(&mut self, ways: u32) -> Result<()> {
        let (flushed, transitions) = self.cache.set_active_ways(ways)?;
        self.open.flush_writebacks += flush_writebacks(flushed);
        self.open.transitions += transitions;
        self.power_changed();
        Ok(())
    }

    fn observation_cores(&self) -> Vec<CoreObservation> {
        self.open
            .cores
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let t = &self.timing[c];
                let delta = self.clocks[c].since(&self.marks[c]);
                CoreObservation {
                    instructions: s.instructions as f64,
                    accesses: s.accesses as f64,
                    hits: s.hits as f64,
                    misses: s.misses as f64,
                    load_misses: s.load_misses as f64,
                    writebacks: s.writebacks as f64,
                    cycles: delta.cycles(t),
                    base_cycles: delta.base_cycles(t),
                    spm: t.stall_per_load_miss(),
                    elapsed_cycles: self.clocks[c].cycles(t),
                }
            })
            .collect()
    }

    /// Consults the interval policy, applies its decision and closes the
    /// interval.
    fn boundary(&mut self) -> Result<()> {
        if !self.engine.interval_policy() {
            return self.close(None);
        }
        let cores = self.observation_cores();
        let counts = self.alloc.counts();
        let curves: Vec<_> = match &self.rce {
            Some(r) => (0..cores.len()).map(|c| r.curve(c)).collect(),
            None => Vec::new(),
        };
        let obs = Observation {
            interval: self.records.len(),
            num_colors: self.alloc.num_colors(),
            assoc: self.geometry.assoc,
            counts: &counts,
            curves: &curves,
            cores: &cores,
            interval_cycles: self.global - self.open.start_cycle,
            rce_accesses: self.rce.as_ref().map_or(0, |r| r.total_sampled()) as f64,
            params: &self.params,
            rce: self.rce.as_ref(),
            set_state: self.set_state,
            active_ways: self.cache.active_ways(),
        };
        let (decision, algo) = match &mut self.engine {
            Engine::Master(p) => (p.decide(&obs), self.cfg.overheads.algo_master),
            Engine::Palette(p) => (p.decide(&obs), self.cfg.overheads.algo_other),
            Engine::Cashier(p) => (p.decide(&obs), self.cfg.overheads.algo_other),
            Engine::Manager(p) => (p.decide(&obs), self.cfg.overheads.algo_other),
            Engine::Encache(p) => (p.decide(&obs)?, self.cfg.overheads.algo_other),
            Engine::Static | Engine::Dct(_) | Engine::Wac(_) => unreachable!(),
        };
        // the interval being closed still ran under the old allocation
        let allocation = self.allocation_snapshot();
        self.apply(&decision.action)?;
        let mut cost = algo;
        self.open.algo_cycles += algo;
        if decision.changes() {
            cost += self.cfg.overheads.reconfig;
            self.open.reconfig_cycles += self.cfg.overheads.reconfig;
        }
        self.charge_all(cost);
        self.close_with(Some(decision), allocation, curves)?;
        if let Some(r) = &mut self.rce {
            r.reset_counters();
        }
        Ok(())
    }

    fn apply(&mut self, action: &Action) -> Result<()> {
        match action {
            Action::NoChange => Ok(()),
            Action::Allocate(counts) => {
                let next = assign_colors(&self.alloc, counts)?;
                self.reallocate(next)
            }
            Action::SetState { state, ways } => {
                if *state != self.set_state {
                    let m = self.alloc.num_colors();
                    let keep = m >> state;
                    if keep == 0 {
                        return Err(Error::invariant(format!("set state {state} leaves no colors")));
                    }
                    self.open.flush_writebacks += flush_writebacks(self.cache.flush_all());
                    let on: BTreeSet<u32> = (0..keep).collect();
                    let next = Allocation::new(m, vec![on.clone()])?;
                    let plan = plan_reallocation(&self.alloc, &self.maps, &next)?;
                    let effect = apply_plan(&mut self.cache, &plan, true)?;
                    self.open.flush_writebacks += flush_writebacks(effect.flushed);
                    self.open.transitions += effect.transitions;
                    self.maps = vec![ColorMap::spread(m, &on)?];
                    self.alloc = next;
                    self.set_state = *state;
                }
                if *ways != self.cache.active_ways() {
                    self.set_ways(*ways)?;
                }
                self.power_changed();
                Ok(())
            }
            Action::Ways(ways) => self.set_ways(*ways),
            Action::TurnOff(lines) => {
                for &(set, way) in lines {
                    if let Some(f) = self.cache.decay_line(set, way) {
                        self.open.flush_writebacks += flush_writebacks(f);
                        self.open.transitions += 1;
                    }
                }
                self.power_changed();
                Ok(())
            }
        }
    }

    fn reallocate(&mut self, next: Allocation) -> Result<()> {
        let plan = plan_reallocation(&self.alloc, &self.maps, &next)?;
        let effect = apply_plan(&mut self.cache, &plan, self.shared)?;
        self.open.flush_writebacks += flush_writebacks(effect.flushed);
        self.open.transitions += effect.transitions;
        self.maps = plan.new_maps;
        self.alloc = next;
        self.power_changed();
        Ok(())
    }

    fn allocation_snapshot(&self) -> (Vec<Vec<u32>>, u32) {
        (
            self.alloc.parts().iter().map(|p| p.iter().copied().collect()).collect(),
            self.alloc.off().len() as u32,
        )
    }

    fn close(&mut self, decision: Option<Decision>) -> Result<()> {
        let allocation = self.allocation_snapshot();
        self.close_with(decision, allocation, Vec::new())
    }

    fn close_with(
        &mut self,
        decision: Option<Decision>,
        (allocation, colors_off): (Vec<Vec<u32>>, u32),
        curves: Vec<crate::profiler::MissCurve>,
    ) -> Result<()> {
        self.integrate();
        let end = self.global;
        let duration = end - self.open.start_cycle;
        let (active_fraction, active_ways) = if duration > 0.0 {
            (self.open.fraction_integral / duration, self.open.ways_integral / duration)
        } else {
            (self.fraction, self.ways)
        };
        let mut cores = std::mem::take(&mut self.open.cores);
        for (c, s) in cores.iter_mut().enumerate() {
            let delta = self.clocks[c].since(&self.marks[c]);
            debug_assert_eq!(delta.instructions, s.instructions);
            s.overhead_cycles = delta.overhead_cycles;
            s.cycles = delta.cycles(&self.timing[c]);
        }
        let hits: u64 = cores.iter().map(|c| c.hits).sum();
        let misses: u64 = cores.iter().map(|c| c.misses).sum();
        let dram_accesses = misses + self.open.eviction_writebacks + self.open.flush_writebacks;
        let rce_accesses = match (&self.rce, self.mode) {
            (Some(r), EnergyMode::Technique) => r.total_sampled(),
            _ => 0,
        };
        let time_seconds = duration / self.params.frequency_hz;
        let inputs = EnergyInputs {
            hits: hits as f64,
            misses: misses as f64,
            dram_accesses: dram_accesses as f64,
            rce_accesses: rce_accesses as f64,
            transitions: self.open.transitions as f64,
            active_fraction,
            active_ways,
            assoc: f64::from(self.geometry.assoc),
            time_seconds,
        };
        let record = IntervalRecord {
            index: self.records.len(),
            start_cycle: self.open.start_cycle,
            end_cycle: end,
            time_seconds,
            allocation,
            colors_off,
            cores,
            hits,
            misses,
            eviction_writebacks: self.open.eviction_writebacks,
            flush_writebacks: self.open.flush_writebacks,
            dram_accesses,
            rce_accesses,
            transitions: self.open.transitions,
            active_fraction,
            active_ways,
            algo_cycles: self.open.algo_cycles,
            reconfig_cycles: self.open.reconfig_cycles,
            mid_interval: self.open.mid,
            energy: energy(&inputs, &self.params, self.mode),
            decision,
            curves,
        };
        self.records.push(record);
        self.marks = self.clocks.clone();
        self.open = Open {
            cores: vec![CoreInterval::default(); self.clocks.len()],
            start_cycle: end,
            ..Open::default()
        };
        // sampled accesses of non-interval policies are counted per interval too
        if !self.engine.interval_policy() {
            if let Some(r) = &mut self.rce {
                r.reset_counters();
            }
        }
        Ok(())
    }

    fn finish(self, trace: &Trace) -> Result<RunReport> {
        let (totals, energy) = totals_from_records(&self.records, &self.timing, self.cfg.skip_intervals);
        let ledger = self
            .clocks
            .iter()
            .zip(&self.timing)
            .map(|(c, t)| CoreLedger {
                clock: *c,
                cycles: c.cycles(t),
            })
            .collect();
        Ok(RunReport {
            policy: self.cfg.policy,
            config: self.cfg.clone(),
            geometry: self.geometry,
            energy_mode: self.mode,
            trace_fingerprint: trace.header.fingerprint.clone(),
            timing: self.timing,
            intervals: self.records,
            ledger,
            totals,
            energy,
            wall_time_s: None,
        })
    }
}
