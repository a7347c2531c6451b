//! Analytic timing model, memory-subsystem energy model and evaluation
//! metrics.

mod energy;
mod metrics;
mod timing;

pub use energy::{
    decay_interval, energy, EnergyBreakdown, EnergyInputs, EnergyMode, EnergyParams, Preset, PRESET_NAMES,
};
pub use metrics::{fair_speedup, metrics, suite_summary, weighted_speedup, Metrics, RunTotals};
pub use timing::{estimate_cycles, simulate_cycles, spm, CoreClock, CoreTiming};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p4() -> EnergyParams {
        Preset::cacti32nm_4mb().energy
    }

    #[test]
    fn presets_match_tables() {
        let p = Preset::cacti32nm_8mb().energy;
        assert_eq!((p.l2_dyn_nj, p.l2_leak_w, p.rce_dyn_nj, p.rce_leak_w), (0.438, 2.72, 0.016, 0.023));
        let p = Preset::cacti45nm_2mb().energy;
        assert_eq!((p.l2_dyn_nj, p.l2_leak_w, p.frequency_hz), (0.985, 1.568, 1.5e9));
        for name in PRESET_NAMES {
            let pre = Preset::by_name(name).unwrap();
            pre.energy.validate().unwrap();
            pre.geometry().unwrap();
        }
        assert!(Preset::by_name("nope").is_err());
    }

    #[test]
    fn baseline_leakage_only() {
        let e = energy(
            &EnergyInputs {
                time_seconds: 1.0,
                assoc: 8.0,
                active_ways: 8.0,
                active_fraction: 0.2,
                rce_accesses: 1e6,
                transitions: 1e6,
                ..Default::default()
            },
            &p4(),
            EnergyMode::Baseline,
        );
        assert_eq!(e.total, 1.39 + 0.18);
        assert_eq!(e.e_algo, 0.0);
    }

    #[test]
    fn dynamic_l2() {
        let e = energy(
            &EnergyInputs {
                hits: 100.0,
                misses: 50.0,
                assoc: 8.0,
                active_ways: 8.0,
                active_fraction: 1.0,
                ..Default::default()
            },
            &p4(),
            EnergyMode::Technique,
        );
        assert!((e.de_l2 - 0.289 * 200.0 * 1e-9).abs() < 1e-18);
    }

    #[test]
    fn leakage_floor_when_all_off() {
        let e = energy(
            &EnergyInputs {
                time_seconds: 1.0,
                assoc: 8.0,
                active_ways: 8.0,
                active_fraction: 0.0,
                ..Default::default()
            },
            &p4(),
            EnergyMode::Technique,
        );
        assert_eq!(e.le_l2, 1.39 * 1.05 * 0.03);
    }

    #[test]
    fn decay_intervals() {
        let g4 = Preset::cacti32nm_4mb();
        let d = decay_interval(&g4.energy, &g4.geometry().unwrap());
        // oracle: 70 nJ / (1.39 W / (2.8 GHz × 65536 blocks))
        let oracle = 70e-9 / (1.39 / (2.8e9 * 65536.0));
        assert!((d - oracle).abs() < 1e-3);
        assert!((d - 9.2e6).abs() < 0.1e6);
        let g2 = Preset::cacti45nm_2mb();
        let d2 = decay_interval(&g2.energy, &g2.geometry().unwrap());
        assert!((d2 - 2.19e6).abs() < 0.05e6);
        let mut half = g4.energy;
        half.dram_dyn_nj /= 2.0;
        assert!((decay_interval(&half, &g4.geometry().unwrap()) - d / 2.0).abs() < 1e-6);
    }

    #[test]
    fn timing_examples() {
        assert_eq!(spm(1000.0, 10.0).unwrap(), 100.0);
        assert_eq!(spm(0.0, 0.0).unwrap(), 0.0);
        assert!(spm(-1.0, 1.0).is_err());
        assert_eq!(simulate_cycles(1e6, 0.0, 1.0, 200.0, 1.0), 1e6);
        assert_eq!(simulate_cycles(1e6, 1000.0, 1.0, 200.0, 1.0), 1.2e6);
        assert_eq!(simulate_cycles(0.0, 1000.0, 1.0, 200.0, 0.5), 1e5);
        assert_eq!(estimate_cycles(500.0, 7.0, 0.0), 500.0);
    }

    #[test]
    fn estimate_closes_loop() {
        let t = CoreTiming {
            base_cpi: 1.3,
            miss_penalty: 180.0,
            overlap: 1.0,
        };
        let clock = CoreClock {
            instructions: 1_000_000,
            load_misses: 4321,
            overhead_cycles: 1100,
        };
        let total = clock.cycles(&t);
        let base = clock.base_cycles(&t);
        let s = spm(total - base, clock.load_misses as f64).unwrap();
        assert!((s - 180.0).abs() < 1e-9);
        assert!((estimate_cycles(base, s, clock.load_misses as f64) - total).abs() < 1e-6);
    }

    #[test]
    fn metric_examples() {
        let base = RunTotals {
            instructions: vec![1000, 1000],
            cycles: vec![1000.0, 1000.0],
            misses: 10,
            dram_accesses: 12,
            energy_j: 2.0,
            time_seconds: 1.0,
            active_ratio: 1.0,
        };
        let same = metrics(&base, &base).unwrap();
        assert_eq!(same.weighted_speedup, 1.0);
        assert_eq!(same.fair_speedup, 1.0);
        assert_eq!(same.pct_energy_saved, 0.0);
        assert_eq!(same.apki_delta, 0.0);
        assert_eq!(same.active_ratio, 1.0);

        let mut tech = base.clone();
        tech.cycles = vec![2000.0, 1000.0];
        let m = metrics(&base, &tech).unwrap();
        assert_eq!(m.weighted_speedup, 0.75);
        assert!((m.fair_speedup - 2.0 / 3.0).abs() < 1e-15);

        let mut other = base.clone();
        other.instructions = vec![1000, 999];
        assert!(metrics(&base, &other).is_err());
    }

    #[test]
    fn suite_uses_gmean_for_speedups() {
        let mk = |ws: f64, e: f64| Metrics {
            pct_energy_saved: e,
            weighted_speedup: ws,
            fair_speedup: ws,
            active_ratio: 1.0,
            apki_delta: 0.0,
            mpki_delta: 0.0,
            edp_saved: 0.0,
        };
        let s = suite_summary(&[mk(0.5, 10.0), mk(2.0, 20.0)]).unwrap();
        assert!((s.weighted_speedup - 1.0).abs() < 1e-12);
        assert_eq!(s.pct_energy_saved, 15.0);
    }

    proptest! {
        #[test]
        fn breakdown_is_additive(h in 0.0f64..1e9, m in 0.0f64..1e9, a in 0.0f64..1e9, t in 0.0f64..10.0,
                                 fa in 0.0f64..=1.0, w in 1u32..=8, tech in any::<bool>()) {
            let inputs = EnergyInputs { hits: h, misses: m, dram_accesses: a, rce_accesses: a / 64.0,
                transitions: m / 10.0, active_fraction: fa, active_ways: w as f64, assoc: 8.0, time_seconds: t };
            let mode = if tech { EnergyMode::Technique } else { EnergyMode::Baseline };
            let e = energy(&inputs, &p4(), mode);
            prop_assert_eq!(e.total, e.le_l2 + e.de_l2 + e.e_dram + e.e_algo);
            if !tech {
                let mut other = inputs;
                other.active_fraction = 1.0;
                other.active_ways = 8.0;
                other.transitions = 0.0;
                other.rce_accesses = 0.0;
                prop_assert_eq!(energy(&other, &p4(), mode), e);
            }
        }

        #[test]
        fn speedups_match_brute_force(r in prop::collection::vec(0.05f64..5.0, 1..8)) {
            let ws: f64 = r.iter().sum::<f64>() / r.len() as f64;
            let mut inv = 0.0;
            for x in &r { inv += 1.0 / x; }
            prop_assert!((weighted_speedup(&r) - ws).abs() < 1e-12);
            prop_assert!((fair_speedup(&r) - r.len() as f64 / inv).abs() < 1e-12);
        }
    }
}
