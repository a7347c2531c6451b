use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cachesim_core::coloring::{mapping_table_bits, num_colors};
use cachesim_core::harness::{self, compare as compare_reports, PolicyName, RunReport, ScenarioConfig};
use cachesim_core::perf::{decay_interval, Preset};
use cachesim_core::profiler::{rce_size, ProfilingPoints, ProfilingVariant};
use cachesim_core::textfmt::load_config;
use cachesim_core::workload::{generate, read_trace_file, write_trace, SyntheticSpec, Trace};
use cachesim_core::Error;

use crate::output::{self, sig9};
use crate::Format;

/// A failure with its process exit status: 2 for bad input, 1 otherwise.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Mismatch(_) | Error::Json(_) => Self::usage(e.to_string()),
            Error::Invariant(_) | Error::Io(_) => Self::runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Input errors name the file they came from; a missing input is a usage
/// error.
fn input<T>(path: &Path, r: cachesim_core::Result<T>) -> Result<T> {
    r.map_err(|e| {
        let unreadable = matches!(e, Error::Io(_));
        let mut err = CliError::from(e);
        if unreadable {
            err.code = 2;
        }
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => output::write_atomic(p, bytes)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .lock()
                .write_all(bytes)
                .map_err(|e| CliError::runtime(format!("cannot write to stdout: {e}")))
        }
    }
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    let cfg = match path {
        Some(p) => input(p, load_config::<ScenarioConfig>(p))?,
        None => ScenarioConfig::default(),
    };
    Ok(cfg)
}

fn load_trace(path: &Path) -> Result<Trace> {
    input(path, read_trace_file(path))
}

fn parse_policy(name: &str) -> Result<PolicyName> {
    name.trim().parse::<PolicyName>().map_err(|e| CliError::usage(e.to_string()))
}

pub fn gen_trace(spec: &Path, seed: u64, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = input(spec, load_config(spec))?;
    let trace = generate(&spec, seed)?;
    let mut bytes = Vec::new();
    write_trace(&mut bytes, &trace)?;
    write_output(Some(out), &bytes)
}

pub struct RunArgs<'a> {
    pub config: Option<&'a Path>,
    pub trace: &'a Path,
    pub policy: Option<&'a str>,
    pub out: Option<&'a Path>,
    pub format: Format,
    pub skip_intervals: Option<usize>,
}

pub fn run(args: RunArgs<'_>) -> Result<()> {
    let mut cfg = load_scenario(args.config)?;
    if let Some(p) = args.policy {
        cfg.policy = parse_policy(p)?;
    }
    if let Some(k) = args.skip_intervals {
        cfg.skip_intervals = k;
    }
    cfg.validate()?;
    let trace = load_trace(args.trace)?;
    let report = harness::run(&cfg, &trace)?;
    log_run(&report);
    let bytes = match args.format {
        Format::Json => report.to_json()?.into_bytes(),
        Format::Csv => output::report_csv(&report).into_bytes(),
    };
    write_output(args.out, &bytes)
}

/// Host timing goes to stderr only, so output files stay reproducible.
fn log_run(report: &RunReport) {
    if let Some(t) = report.wall_time_s {
        eprintln!("{}: {} intervals in {t:.2}s", report.policy, report.intervals.len());
    }
}

fn read_report(path: &Path) -> Result<RunReport> {
    let text = input(path, std::fs::read_to_string(path).map_err(Error::from))?;
    input(path, serde_json::from_str(&text).map_err(Error::from))
}

pub fn compare(base: &Path, tech: &Path, out: Option<&Path>, format: Format) -> Result<()> {
    let base = read_report(base)?;
    let tech = read_report(tech)?;
    let c = compare_reports(&base, &tech)?;
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&c).map_err(Error::from)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => output::comparison_csv(&c).into_bytes(),
    };
    write_output(out, &bytes)
}

fn thread_cap(jobs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("CACHESIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(jobs).max(1)
}

pub fn sweep(config: Option<&Path>, trace: &Path, policies: &[String], out: &Path) -> Result<()> {
    let cfg = load_scenario(config)?;
    let mut names: Vec<PolicyName> = policies.iter().map(|p| parse_policy(p)).collect::<Result<_>>()?;
    names.sort_by_key(|p| p.as_str());
    names.dedup();
    for &p in &names {
        cfg.with_policy(p).validate()?;
    }
    let trace = load_trace(trace)?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))?;

    // job 0 is the baseline
    let jobs: Vec<Option<PolicyName>> = std::iter::once(None).chain(names.iter().copied().map(Some)).collect();
    let results: Vec<Mutex<Option<Result<RunReport>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..thread_cap(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let (file, r) = match job {
                    None => ("baseline".to_string(), harness::run_baseline(&cfg, &trace)),
                    Some(p) => (p.as_str().to_string(), harness::run(&cfg.with_policy(*p), &trace)),
                };
                let r = r.map_err(CliError::from).and_then(|report| {
                    log_run(&report);
                    let json = report.to_json()?;
                    write_output(Some(&out.join(format!("{file}.json"))), json.as_bytes())?;
                    Ok(report)
                });
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    let mut reports: Vec<Result<RunReport>> = results
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect();

    let base = reports.remove(0)?;
    let mut csv = format!("policy,energy_j,{},max_evaluated\n", output::METRIC_COLUMNS.join(","));
    let mut failure: Option<CliError> = None;
    for (name, r) in names.iter().zip(reports) {
        let row = r.and_then(|tech| {
            let c = compare_reports(&base, &tech)?;
            let metrics: Vec<String> = output::metric_values(&c).iter().map(|&v| sig9(v)).collect();
            Ok(format!(
                "{name},{},{},{}",
                sig9(tech.totals.energy_j),
                metrics.join(","),
                tech.max_evaluated()
            ))
        });
        match row {
            Ok(line) => {
                let _ = writeln!(csv, "{line}");
            }
            Err(e) => {
                eprintln!("cachesim: {name}: {e}");
                failure.get_or_insert(CliError {
                    code: e.code,
                    message: format!("policy {name} failed"),
                });
            }
        }
    }
    write_output(Some(&out.join("summary.csv")), csv.as_bytes())?;
    failure.map_or(Ok(()), Err)
}

pub fn formulas(preset: &str, cores: Option<u32>, sample_ratio: u32) -> Result<()> {
    let p = Preset::by_name(preset)?;
    if !sample_ratio.is_power_of_two() {
        return Err(CliError::usage("sample ratio must be a power of two"));
    }
    let g = p.geometry()?;
    let n = cores.unwrap_or(p.cores);
    if n == 0 {
        return Err(CliError::usage("core count must be positive"));
    }
    let m = num_colors(&g)?;
    let mut s = String::new();
    let _ = writeln!(s, "preset                {}", p.name);
    let _ = writeln!(
        s,
        "cache                 {} bytes, {}-way, {} B blocks, {} B pages, {} sets",
        g.size_bytes, g.assoc, g.block_bytes, g.page_bytes, g.sets
    );
    let _ = writeln!(s, "cores                 {n}");
    let _ = writeln!(s, "colors (M)            {m}");
    let _ = writeln!(s, "mapping tables        {} bits", mapping_table_bits(n, m));
    let _ = writeln!(s, "frequency             {} Hz", p.energy.frequency_hz);
    let _ = writeln!(s, "decay interval        {} cycles", sig9(decay_interval(&p.energy, &g)));
    let _ = writeln!(s, "emulator (sample ratio {sample_ratio}, {}-bit tags):", p.tag_bits);
    let _ = writeln!(s, "  {:<10} {:<40} {:>12} {:>10}", "variant", "point sets", "sampled sets", "% of LLC");
    for v in [
        ProfilingVariant::Master7,
        ProfilingVariant::Palette6,
        ProfilingVariant::Manager6,
        ProfilingVariant::Esto6,
        ProfilingVariant::Encache4,
    ] {
        let (Ok(points), Ok(size)) = (ProfilingPoints::new(v, &g), rce_size(&g, n, sample_ratio, v, p.tag_bits)) else {
            continue;
        };
        let sets: Vec<String> = points.sets.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "  {:<10} {:<40} {:>12} {:>10}",
            format!("{v:?}").to_lowercase(),
            sets.join(" "),
            size.total_sets,
            format!("{:.3}", size.percent_of_llc)
        );
    }
    write_output(None, s.as_bytes())
}
