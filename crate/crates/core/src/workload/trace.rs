use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::AccessKind;
use crate::error::{Error, Result};
use crate::perf::CoreTiming;

pub const TRACE_VERSION: u32 = 1;

/// One LLC access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub core: u16,
    pub block_address: u64,
    pub kind: AccessKind,
    /// Instructions the core retired since its previous event (at least 1).
    pub instr_delta: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub cores: u16,
    pub address_bits: u32,
    pub page_bytes: u64,
    pub timing: Vec<CoreTiming>,
    pub fingerprint: String,
}

impl TraceHeader {
    pub fn validate(&self) -> Result<()> {
        if self.version != TRACE_VERSION {
            return Err(Error::config(format!("unsupported trace version {}", self.version)));
        }
        if self.cores == 0 || self.timing.len() != self.cores as usize {
            return Err(Error::config("trace header needs timing for every core"));
        }
        if self.address_bits == 0 || self.address_bits > 64 || !self.page_bytes.is_power_of_two() {
            return Err(Error::config("bad address width or page size in trace header"));
        }
        for t in &self.timing {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// Instructions per core over the whole trace.
    pub fn instructions(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.header.cores as usize];
        for e in &self.events {
            out[e.core as usize] += e.instr_delta;
        }
        out
    }
}

fn header_lines(h: &TraceHeader) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# version={}", h.version);
    let _ = writeln!(s, "# cores={}", h.cores);
    let _ = writeln!(s, "# address_bits={}", h.address_bits);
    let _ = writeln!(s, "# page_bytes={}", h.page_bytes);
    for (n, t) in h.timing.iter().enumerate() {
        let _ = writeln!(s, "# core.{n}.base_cpi={}", t.base_cpi);
        let _ = writeln!(s, "# core.{n}.miss_penalty={}", t.miss_penalty);
        let _ = writeln!(s, "# core.{n}.overlap={}", t.overlap);
    }
    let _ = writeln!(s, "# fingerprint={}", h.fingerprint);
    s
}

pub fn write_trace<W: Write>(out: W, trace: &Trace) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(header_lines(&trace.header).as_bytes())?;
    for e in &trace.events {
        let k = if e.kind.is_load() { 'L' } else { 'S' };
        writeln!(w, "{} {:x} {} {}", e.core, e.block_address, k, e.instr_delta)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &Trace) -> Result<()> {
    write_trace(std::fs::File::create(path)?, trace)
}

/// Streaming reader: the header is parsed eagerly, events on demand.
pub struct TraceReader<R> {
    input: R,
    header: TraceHeader,
    line: usize,
    offset: usize,
    buf: String,
    pending: Option<String>,
    done: bool,
}

#[derive(Default)]
struct PartialHeader {
    version: Option<u32>,
    cores: Option<u16>,
    address_bits: Option<u32>,
    page_bytes: Option<u64>,
    timing: Vec<(Option<f64>, Option<f64>, Option<f64>)>,
    fingerprint: Option<String>,
}

fn num<T: std::str::FromStr>(v: &str, line: usize, offset: usize, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::parse(line, offset, format!("bad value '{v}' for {key}")))
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut partial = PartialHeader::default();
        let mut line = 0;
        let mut offset = 0;
        let mut buf = String::new();
        let mut pending = None;
        loop {
            buf.clear();
            let n = input.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            line += 1;
            let start = offset;
            offset += n;
            if !buf.ends_with('\n') {
                return Err(Error::parse(line, start, "truncated line (missing newline)"));
            }
            let text = &buf[..buf.len() - 1];
            let Some(rest) = text.strip_prefix("# ") else {
                pending = Some(text.to_string());
                break;
            };
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse(line, start, "header line without '='"))?;
            let at = start + 2 + key.len() + 1;
            match key {
                "version" => partial.version = Some(num(value, line, at, key)?),
                "cores" => {
                    let n: u16 = num(value, line, at, key)?;
                    partial.cores = Some(n);
                    partial.timing.resize(n as usize, (None, None, None));
                }
                "address_bits" => partial.address_bits = Some(num(value, line, at, key)?),
                "page_bytes" => partial.page_bytes = Some(num(value, line, at, key)?),
                "fingerprint" => partial.fingerprint = Some(value.to_string()),
                other => {
                    let parts: Vec<&str> = other.split('.').collect();
                    let (idx, field) = match parts.as_slice() {
                        ["core", n, field] => (num::<usize>(n, line, start + 7, key)?, *field),
                        _ => return Err(Error::parse(line, start + 2, format!("unknown header key '{other}'"))),
                    };
                    let slot = partial
                        .timing
                        .get_mut(idx)
                        .ok_or_else(|| Error::parse(line, start + 2, format!("core {idx} not declared")))?;
                    let v: f64 = num(value, line, at, key)?;
                    match field {
                        "base_cpi" => slot.0 = Some(v),
                        "miss_penalty" => slot.1 = Some(v),
                        "overlap" => slot.2 = Some(v),
                        _ => return Err(Error::parse(line, start + 2, format!("unknown header key '{other}'"))),
                    }
                }
            }
        }
        let missing = |k: &str| Error::parse(line.max(1), offset, format!("missing header key '{k}'"));
        let version = partial.version.ok_or_else(|| missing("version"))?;
        if version != TRACE_VERSION {
            return Err(Error::parse(1, 0, format!("unsupported trace version {version}")));
        }
        let cores = partial.cores.ok_or_else(|| missing("cores"))?;
        let timing = partial
            .timing
            .iter()
            .enumerate()
            .map(|(n, t)| match t {
                (Some(base_cpi), Some(miss_penalty), Some(overlap)) => Ok(CoreTiming {
                    base_cpi: *base_cpi,
                    miss_penalty: *miss_penalty,
                    overlap: *overlap,
                }),
                _ => Err(missing(&format!("core.{n}.*"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let header = TraceHeader {
            version,
            cores,
            address_bits: partial.address_bits.ok_or_else(|| missing("address_bits"))?,
            page_bytes: partial.page_bytes.ok_or_else(|| missing("page_bytes"))?,
            timing,
            fingerprint: partial.fingerprint.ok_or_else(|| missing("fingerprint"))?,
        };
        header
            .validate()
            .map_err(|e| Error::parse(1, 0, e.to_string()))?;
        let pending_offset = pending.as_ref().map_or(offset, |p: &String| offset - p.len() - 1);
        Ok(Self {
            input,
            header,
            line: if pending.is_some() { line - 1 } else { line },
            offset: pending_offset,
            buf,
            pending,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn parse_event(&self, text: &str, line: usize, start: usize) -> Result<TraceEvent> {
        let mut fields = text.split(' ');
        let mut at = start;
        let mut next = |name: &str| -> Result<(&str, usize)> {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(line, start + text.len(), format!("missing {name}")))?;
            let pos = at;
            at += f.len() + 1;
            Ok((f, pos))
        };
        let (core, p) = next("core")?;
        let core: u16 = core
            .parse()
            .map_err(|_| Error::parse(line, p, format!("bad core id '{core}'")))?;
        if core >= self.header.cores {
            return Err(Error::parse(line, p, format!("core {core} >= {}", self.header.cores)));
        }
        let (addr, p) = next("block address")?;
        if addr.is_empty() || !addr.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::parse(line, p, format!("bad block address '{addr}'")));
        }
        let block_address = u64::from_str_radix(addr, 16)
            .map_err(|_| Error::parse(line, p, format!("block address '{addr}' out of range")))?;
        let (kind, p) = next("kind")?;
        let kind = match kind {
            "L" => AccessKind::Load,
            "S" => AccessKind::Store,
            other => return Err(Error::parse(line, p, format!("bad access kind '{other}'"))),
        };
        let (delta, p) = next("instruction delta")?;
        let instr_delta: u64 = delta
            .parse()
            .map_err(|_| Error::parse(line, p, format!("bad instruction delta '{delta}'")))?;
        if instr_delta == 0 {
            return Err(Error::parse(line, p, "instruction delta must be at least 1"));
        }
        if let Some((extra, p)) = next("").ok() {
            return Err(Error::parse(line, p, format!("unexpected field '{extra}'")));
        }
        Ok(TraceEvent {
            core,
            block_address,
            kind,
            instr_delta,
        })
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let text = match self.pending.take() {
            Some(t) => t,
            None => {
                self.buf.clear();
                match self.input.read_line(&mut self.buf) {
                    Ok(0) => {
                        self.done = true;
                        return None;
                    }
                    Ok(_) => {}
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e.into()));
                    }
                }
                if !self.buf.ends_with('\n') {
                    self.done = true;
                    return Some(Err(Error::parse(self.line + 1, self.offset, "truncated line (missing newline)")));
                }
                self.buf.pop();
                std::mem::take(&mut self.buf)
            }
        };
        self.line += 1;
        let start = self.offset;
        self.offset += text.len() + 1;
        let out = self.parse_event(&text, self.line, start);
        if out.is_err() {
            self.done = true;
        }
        Some(out)
    }
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace> {
    let reader = TraceReader::new(input)?;
    let header = reader.header().clone();
    let events = reader.collect::<Result<Vec<_>>>()?;
    Ok(Trace { header, events })
}

pub fn read_trace_file(path: &Path) -> Result<Trace> {
    read_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}
