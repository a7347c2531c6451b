//! Trace file format and the synthetic workload generator.
//!
//! A trace is UTF-8 text. Header lines have the form `# key=value`; each
//! event line is `<core> <hex block address> <L|S> <instr_delta>`.

mod synth;
mod trace;

pub use synth::{generate, CoreSpec, Pattern, Phase, SyntheticSpec};
pub use trace::{
    read_trace, read_trace_file, write_trace, write_trace_file, Trace, TraceEvent, TraceHeader, TraceReader,
    TRACE_VERSION,
};
