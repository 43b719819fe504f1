//! CSV traces and JSON summaries. Every file starts with a provenance header
//! (tool version, config hash, seed, command).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::EmissionTrace;
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunHeader {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub command: String,
}

impl RunHeader {
    pub fn new(config_sha256: impl Into<String>, seed: u64, command: impl Into<String>) -> Self {
        RunHeader {
            tool: "afc-stark".into(),
            version: TOOL_VERSION.into(),
            config_sha256: config_sha256.into(),
            seed,
            command: command.into(),
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {}\n# config_sha256={}\n# seed={}\n# command={}\n",
            self.tool, self.version, self.config_sha256, self.seed, self.command
        )
    }
}

pub const TRACE_COLUMNS: &str = "time_us,re_amp,im_amp,coh_intensity,incoh_intensity,total";

/// Render a trace as CSV. Numbers use the shortest round-trip form, so the
/// text is a pure function of the trace values.
pub fn trace_csv(trace: &EmissionTrace, header: &RunHeader) -> String {
    let mut s = header.csv_comment();
    s.push_str(TRACE_COLUMNS);
    s.push('\n');
    for i in 0..trace.len() {
        let a = trace.coherent_amplitude[i];
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            trace.times[i] * 1e6,
            a.re,
            a.im,
            trace.coherent_intensity[i],
            trace.incoherent_intensity[i],
            trace.total_intensity(i)
        );
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |e| Error::Io { path: path.display().to_string(), source: e };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

pub fn write_trace_csv(path: &Path, trace: &EmissionTrace, header: &RunHeader) -> Result<()> {
    write_text(path, &trace_csv(trace, header))
}

/// CSV with the provenance header and arbitrary numeric rows.
pub fn table_csv(header: &RunHeader, columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.csv_comment();
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    header: &'a RunHeader,
    #[serde(flatten)]
    body: &'a T,
}

pub fn summary_json<T: Serialize>(header: &RunHeader, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Wrapped { header, body }).expect("summary types serialize");
    s.push('\n');
    s
}

pub fn write_summary<T: Serialize>(path: &Path, header: &RunHeader, body: &T) -> Result<()> {
    write_text(path, &summary_json(header, body))
}
