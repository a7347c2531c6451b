use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use cachesim_core::harness::{Comparison, RunReport};
use cachesim_core::policies::Action;

/// Formats a float with nine significant digits in plain positional notation.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    // round through scientific notation first so the digit count is exact
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let exponent = rounded.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn action_name(action: &Action) -> &'static str {
    match action {
        Action::NoChange => "keep",
        Action::Allocate(_) => "allocate",
        Action::SetState { .. } => "set_state",
        Action::TurnOff(_) => "turn_off",
        Action::Ways(_) => "ways",
    }
}

/// One row per interval followed by a blank line and a `metric,value`
/// summary block.
pub fn report_csv(report: &RunReport) -> String {
    let cores = report.timing.len();
    let mut out = String::new();
    let mut header = vec![
        "index",
        "start_cycle",
        "end_cycle",
        "time_s",
        "active_colors",
        "colors_off",
        "hits",
        "misses",
        "eviction_writebacks",
        "flush_writebacks",
        "dram_accesses",
        "rce_accesses",
        "transitions",
        "active_fraction",
        "active_ways",
        "algo_cycles",
        "reconfig_cycles",
        "le_l2_j",
        "de_l2_j",
        "e_dram_j",
        "e_algo_j",
        "e_tran_j",
        "energy_j",
        "decision",
        "evaluated",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for c in 0..cores {
        header.push(format!("instructions_c{c}"));
        header.push(format!("misses_c{c}"));
        header.push(format!("cycles_c{c}"));
    }
    let _ = writeln!(out, "{}", header.join(","));
    for r in &report.intervals {
        let active: usize = r.allocation.iter().map(Vec::len).sum();
        let (decision, evaluated) = match &r.decision {
            Some(d) => (action_name(&d.action), d.evaluated.len().to_string()),
            None => ("", String::new()),
        };
        let mut row = vec![
            r.index.to_string(),
            sig9(r.start_cycle),
            sig9(r.end_cycle),
            sig9(r.time_seconds),
            active.to_string(),
            r.colors_off.to_string(),
            r.hits.to_string(),
            r.misses.to_string(),
            r.eviction_writebacks.to_string(),
            r.flush_writebacks.to_string(),
            r.dram_accesses.to_string(),
            r.rce_accesses.to_string(),
            r.transitions.to_string(),
            sig9(r.active_fraction),
            sig9(r.active_ways),
            r.algo_cycles.to_string(),
            r.reconfig_cycles.to_string(),
            sig9(r.energy.le_l2),
            sig9(r.energy.de_l2),
            sig9(r.energy.e_dram),
            sig9(r.energy.e_algo),
            sig9(r.energy.e_tran),
            sig9(r.energy.total),
            decision.to_string(),
            evaluated,
        ];
        for c in &r.cores {
            row.push(c.instructions.to_string());
            row.push(c.misses.to_string());
            row.push(sig9(c.cycles));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out.push('\n');
    let _ = writeln!(out, "metric,value");
    for (k, v) in summary_pairs(report) {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

fn summary_pairs(report: &RunReport) -> Vec<(String, String)> {
    let t = &report.totals;
    let e = &report.energy;
    let mut pairs = vec![
        ("policy".to_string(), report.policy.to_string()),
        ("trace_fingerprint".into(), report.trace_fingerprint.clone()),
        ("intervals".into(), report.intervals.len().to_string()),
    ];
    for (c, (i, cy)) in t.instructions.iter().zip(&t.cycles).enumerate() {
        pairs.push((format!("instructions_c{c}"), i.to_string()));
        pairs.push((format!("cycles_c{c}"), sig9(*cy)));
    }
    pairs.extend([
        ("misses".into(), t.misses.to_string()),
        ("dram_accesses".into(), t.dram_accesses.to_string()),
        ("time_s".into(), sig9(t.time_seconds)),
        ("active_ratio".into(), sig9(t.active_ratio)),
        ("le_l2_j".into(), sig9(e.le_l2)),
        ("de_l2_j".into(), sig9(e.de_l2)),
        ("e_dram_j".into(), sig9(e.e_dram)),
        ("e_algo_j".into(), sig9(e.e_algo)),
        ("e_tran_j".into(), sig9(e.e_tran)),
        ("energy_j".into(), sig9(t.energy_j)),
        ("max_evaluated".into(), report.max_evaluated().to_string()),
    ]);
    pairs
}

pub const METRIC_COLUMNS: [&str; 7] = [
    "pct_energy_saved",
    "weighted_speedup",
    "fair_speedup",
    "active_ratio",
    "apki_delta",
    "mpki_delta",
    "edp_saved",
];

pub fn metric_values(c: &Comparison) -> [f64; 7] {
    let m = &c.metrics;
    [
        m.pct_energy_saved,
        m.weighted_speedup,
        m.fair_speedup,
        m.active_ratio,
        m.apki_delta,
        m.mpki_delta,
        m.edp_saved,
    ]
}

pub fn comparison_csv(c: &Comparison) -> String {
    let mut out = format!("base_policy,policy,{}\n", METRIC_COLUMNS.join(","));
    let values: Vec<String> = metric_values(c).iter().map(|&v| sig9(v)).collect();
    let _ = writeln!(out, "{},{},{}", c.base_policy, c.policy, values.join(","));
    out
}
