//! Pulse timelines and the line-oriented sequence file format.
//!
//! ```text
//! # times and widths in microseconds, detunings in MHz, voltages in volts
//! grid start=0 end=40 step=0.001
//! input t=1.0 fwhm=0.5 amp=1.0 detuning=0
//! efield t=1.8 fwhm=0.023 voltage=54 polarity=1
//! control t=3.0 dir=to_spin eff=0.9 leak=0.01 bg_amp=0.05 duration=2
//! control t=13.0 dir=to_optical eff=0.9 leak=0.01 bg_amp=0.05
//! efield t=14.5 fwhm=0.023 voltage=54
//! readout start=15.0 end=20.0
//! ```
//!
//! One directive per line; `#` starts a comment. `grid` is required and may
//! appear once, anywhere. Events must be listed in strictly increasing time
//! (readouts by their start). Control pulses must alternate `to_spin` /
//! `to_optical`, starting with `to_spin`.
//!
//! Optional keys and defaults: `input fwhm=0.5 amp=1 detuning=0`,
//! `efield fwhm=0.023 voltage=54 polarity=1`,
//! `control eff=1 leak=0 bg_amp=0 duration=2`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stark::EFieldPulse;

/// A parse or validation failure, always tied to a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct SequenceError {
    pub line: usize,
    pub column: usize,
    pub kind: SequenceErrorKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceErrorKind {
    Syntax,
    UnknownKey,
    Semantic,
}

impl SequenceError {
    fn new(line: usize, column: usize, kind: SequenceErrorKind, message: impl Into<String>) -> Self {
        SequenceError { line, column, kind, message: message.into() }
    }

    pub fn is_semantic(&self) -> bool {
        self.kind == SequenceErrorKind::Semantic
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ToSpin,
    ToOptical,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::ToSpin => "to_spin",
            Direction::ToOptical => "to_optical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalInput {
    /// Intensity FWHM of the Gaussian input pulse (s).
    pub fwhm_s: f64,
    pub amplitude: f64,
    /// Carrier detuning of the pulse in the simulation frame (Hz).
    pub detuning_hz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinTransfer {
    pub direction: Direction,
    /// Intensity transfer efficiency η_T.
    pub efficiency: f64,
    /// Off-resonant re-excitation amplitude ε of the comb.
    pub leak: f64,
    /// Excitation amplitude of control-background ions.
    pub background_amplitude: f64,
    /// Metadata only; transfers are applied instantaneously.
    pub duration_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    OpticalInput(OpticalInput),
    EField(EFieldPulse),
    SpinTransfer(SpinTransfer),
    Readout(ReadoutWindow),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    /// Nearest grid sample and the event's offset from it (s).
    pub grid_index: i64,
    pub grid_offset_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start_s: f64,
    pub end_s: f64,
    pub step_s: f64,
}

impl Grid {
    pub fn new(start_s: f64, end_s: f64, step_s: f64) -> Self {
        Grid { start_s, end_s, step_s }
    }

    /// Number of samples, both ends included when they fall on the grid.
    pub fn len(&self) -> usize {
        ((self.end_s - self.start_s) / self.step_s + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start_s + index as f64 * self.step_s
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the first sample at or after `t` (may be `len()`).
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        if t <= self.start_s {
            return 0;
        }
        let mut i = ((t - self.start_s) / self.step_s).ceil() as usize;
        while i > 0 && self.time(i - 1) >= t {
            i -= 1;
        }
        while i < self.len() && self.time(i) < t {
            i += 1;
        }
        i.min(self.len())
    }

    fn snap(&self, t: f64) -> (i64, f64) {
        let index = ((t - self.start_s) / self.step_s).round() as i64;
        (index, t - (self.start_s + index as f64 * self.step_s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub grid: Grid,
    pub events: Vec<Event>,
}

impl Timeline {
    /// Validate and assemble a timeline from events (kept in the given order).
    pub fn new(grid: Grid, events: Vec<(f64, EventKind)>) -> Result<Timeline, SequenceError> {
        let lines: Vec<usize> = (0..events.len()).map(|i| i + 1).collect();
        validate(grid, &events, &lines, 0)
    }

    pub fn inputs(&self) -> impl Iterator<Item = (f64, &OpticalInput)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::OpticalInput(i) => Some((e.time_s, i)),
            _ => None,
        })
    }

    pub fn efields(&self) -> impl Iterator<Item = &EFieldPulse> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::EField(p) => Some(p),
            _ => None,
        })
    }

    pub fn transfers(&self) -> impl Iterator<Item = (f64, &SpinTransfer)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::SpinTransfer(s) => Some((e.time_s, s)),
            _ => None,
        })
    }

    pub fn readouts(&self) -> impl Iterator<Item = &ReadoutWindow> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Readout(r) => Some(r),
            _ => None,
        })
    }

    /// Storage intervals `(to_spin, to_optical)`; an unmatched final transfer
    /// stays frozen forever.
    pub fn storage_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open = None;
        for (t, s) in self.transfers() {
            match s.direction {
                Direction::ToSpin => open = Some(t),
                Direction::ToOptical => {
                    if let Some(start) = open.take() {
                        out.push((start, t));
                    }
                }
            }
        }
        if let Some(start) = open {
            out.push((start, f64::INFINITY));
        }
        out
    }

    /// Shift every event at or after `from_s` by `delta_s` and re-validate.
    pub fn shifted_from(&self, from_s: f64, delta_s: f64) -> Result<Timeline, SequenceError> {
        let events: Vec<(f64, EventKind)> = self
            .events
            .iter()
            .map(|e| {
                if e.time_s < from_s {
                    return (e.time_s, e.kind);
                }
                let kind = match e.kind {
                    EventKind::EField(p) => EventKind::EField(EFieldPulse { center_s: p.center_s + delta_s, ..p }),
                    EventKind::Readout(r) => EventKind::Readout(ReadoutWindow { start_s: r.start_s + delta_s, end_s: r.end_s + delta_s }),
                    other => other,
                };
                (e.time_s + delta_s, kind)
            })
            .collect();
        let grid = Grid { end_s: self.grid.end_s + delta_s.max(0.0), ..self.grid };
        Timeline::new(grid, events)
    }

    /// Serialise back to the sequence file format. Parsing the output yields
    /// an identical timeline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "grid start={} end={} step={}\n",
            us(self.grid.start_s),
            us(self.grid.end_s),
            us(self.grid.step_s)
        ));
        for e in &self.events {
            let line = match &e.kind {
                EventKind::OpticalInput(i) => format!(
                    "input t={} fwhm={} amp={} detuning={}",
                    us(e.time_s),
                    us(i.fwhm_s),
                    i.amplitude,
                    mhz(i.detuning_hz)
                ),
                EventKind::EField(p) => format!(
                    "efield t={} fwhm={} voltage={} polarity={}",
                    us(p.center_s),
                    us(p.fwhm_s),
                    p.peak_voltage_v,
                    p.polarity
                ),
                EventKind::SpinTransfer(s) => format!(
                    "control t={} dir={} eff={} leak={} bg_amp={} duration={}",
                    us(e.time_s),
                    s.direction,
                    s.efficiency,
                    s.leak,
                    s.background_amplitude,
                    us(s.duration_s)
                ),
                EventKind::Readout(r) => format!("readout start={} end={}", us(r.start_s), us(r.end_s)),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// File value (µs) that converts back to exactly `seconds`.
fn us(seconds: f64) -> String {
    file_value(seconds, seconds * 1e6, from_us)
}

/// File value (MHz) that converts back to exactly `hz`.
fn mhz(hz: f64) -> String {
    file_value(hz, hz / 1e6, from_mhz)
}

fn file_value(target: f64, mut candidate: f64, back: fn(f64) -> f64) -> String {
    for _ in 0..16 {
        let b = back(candidate);
        if b == target {
            break;
        }
        candidate = if b < target { candidate.next_up() } else { candidate.next_down() };
    }
    format!("{candidate}")
}

/// Predicted rephasing instants `t_input + m/Δ` for m = 1..=m_max, in wall
/// time: intervals spent in the spin state do not count towards optical
/// evolution. Echoes that would fall after an unmatched `to_spin` are omitted.
pub fn echo_times(timeline: &Timeline, spacing_hz: f64, m_max: usize) -> crate::Result<Vec<f64>> {
    if !(spacing_hz > 0.0) {
        return Err(crate::Error::validation("comb spacing must be > 0"));
    }
    let t_input = timeline
        .inputs()
        .next()
        .map(|(t, _)| t)
        .ok_or_else(|| crate::Error::validation("timeline has no optical input"))?;
    let storage = timeline.storage_intervals();
    Ok((1..=m_max)
        .filter_map(|m| wall_time_for_optical_delay(t_input, m as f64 / spacing_hz, &storage))
        .collect())
}

/// Wall time at which an excitation created at `t_start` has evolved optically
/// for `delay`; `None` if it is frozen for good before that.
pub fn wall_time_for_optical_delay(t_start: f64, delay: f64, storage: &[(f64, f64)]) -> Option<f64> {
    let mut wall = t_start;
    let mut remaining = delay;
    for &(a, b) in storage {
        if b <= wall {
            continue;
        }
        let a = a.max(wall);
        if wall + remaining <= a {
            break;
        }
        remaining -= a - wall;
        wall = b;
        if !wall.is_finite() {
            return None;
        }
    }
    Some(wall + remaining)
}

/// Parse raw bytes; invalid UTF-8 is reported at its line and column.
pub fn parse_sequence_bytes(bytes: &[u8]) -> Result<Timeline, SequenceError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_sequence(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
            let last_nl = valid.iter().rposition(|&b| b == b'\n').map(|p| p + 1).unwrap_or(0);
            let column = String::from_utf8_lossy(&valid[last_nl..]).chars().count() + 1;
            Err(SequenceError::new(line, column, SequenceErrorKind::Syntax, "invalid UTF-8"))
        }
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let col_of = |byte: usize| line[..byte].chars().count() + 1;
    for (i, ch) in content.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &content[s..i], column: col_of(s) });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &content[s..], column: col_of(s) });
    }
    tokens
}

struct Directive<'a> {
    line: usize,
    keyword: Token<'a>,
    pairs: Vec<(Token<'a>, Token<'a>)>,
    used: Vec<bool>,
}

impl<'a> Directive<'a> {
    fn parse(line_no: usize, tokens: Vec<Token<'a>>) -> Result<Self, SequenceError> {
        let mut iter = tokens.into_iter();
        let keyword = iter.next().expect("non-empty line");
        let mut pairs: Vec<(Token<'a>, Token<'a>)> = Vec::new();
        for tok in iter {
            let Some(eq) = tok.text.find('=') else {
                return Err(SequenceError::new(line_no, tok.column, SequenceErrorKind::Syntax, format!("expected key=value, found '{}'", tok.text)));
            };
            let key = &tok.text[..eq];
            let value = &tok.text[eq + 1..];
            let value_col = tok.column + key.chars().count() + 1;
            if key.is_empty() {
                return Err(SequenceError::new(line_no, tok.column, SequenceErrorKind::Syntax, "empty key"));
            }
            if value.is_empty() {
                return Err(SequenceError::new(line_no, value_col, SequenceErrorKind::Syntax, format!("missing value for '{key}'")));
            }
            if pairs.iter().any(|(k, _)| k.text == key) {
                return Err(SequenceError::new(line_no, tok.column, SequenceErrorKind::Syntax, format!("duplicate key '{key}'")));
            }
            pairs.push((Token { text: key, column: tok.column }, Token { text: value, column: value_col }));
        }
        let used = vec![false; pairs.len()];
        Ok(Directive { line: line_no, keyword, pairs, used })
    }

    fn raw(&mut self, key: &str) -> Option<(&'a str, usize)> {
        let idx = self.pairs.iter().position(|(k, _)| k.text == key)?;
        self.used[idx] = true;
        Some((self.pairs[idx].1.text, self.pairs[idx].1.column))
    }

    fn number(&mut self, key: &str, default: Option<f64>) -> Result<f64, SequenceError> {
        match self.raw(key) {
            Some((text, col)) => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(SequenceError::new(self.line, col, SequenceErrorKind::Syntax, format!("invalid number '{text}' for '{key}'"))),
            },
            None => default.ok_or_else(|| {
                SequenceError::new(self.line, self.keyword.column, SequenceErrorKind::Syntax, format!("'{}' requires '{key}'", self.keyword.text))
            }),
        }
    }

    fn column_of(&self, key: &str) -> usize {
        self.pairs.iter().find(|(k, _)| k.text == key).map(|(_, v)| v.column).unwrap_or(self.keyword.column)
    }

    fn finish(&self) -> Result<(), SequenceError> {
        match self.used.iter().position(|u| !u) {
            Some(i) => {
                let key = &self.pairs[i].0;
                Err(SequenceError::new(self.line, key.column, SequenceErrorKind::UnknownKey, format!("unknown key '{}' for '{}'", key.text, self.keyword.text)))
            }
            None => Ok(()),
        }
    }
}

/// Parse and validate a sequence file.
pub fn parse_sequence(text: &str) -> Result<Timeline, SequenceError> {
    let mut grid: Option<(Grid, usize, usize)> = None;
    let mut events: Vec<(f64, EventKind)> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    let mut columns: Vec<usize> = Vec::new();
    let mut line_count = 0;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        line_count = line_no;
        let tokens = tokenize(raw_line);
        if tokens.is_empty() {
            continue;
        }
        let mut d = Directive::parse(line_no, tokens)?;
        let kw_col = d.keyword.column;
        match d.keyword.text {
            "grid" => {
                if let Some((_, prev, _)) = grid {
                    return Err(SequenceError::new(line_no, kw_col, SequenceErrorKind::Semantic, format!("duplicate grid (first on line {prev})")));
                }
                let start_s = from_us(d.number("start", Some(0.0))?);
                let end_s = from_us(d.number("end", None)?);
                let step_s = from_us(d.number("step", None)?);
                let step_col = d.column_of("step");
                d.finish()?;
                grid = Some((Grid { start_s, end_s, step_s }, line_no, step_col));
            }
            "input" => {
                let t = from_us(d.number("t", None)?);
                let fwhm = from_us(d.number("fwhm", Some(0.5))?);
                let amp = d.number("amp", Some(1.0))?;
                let detuning_hz = from_mhz(d.number("detuning", Some(0.0))?);
                if !(fwhm > 0.0) {
                    return Err(SequenceError::new(line_no, d.column_of("fwhm"), SequenceErrorKind::Semantic, "input fwhm must be > 0"));
                }
                d.finish()?;
                events.push((t, EventKind::OpticalInput(OpticalInput { fwhm_s: fwhm, amplitude: amp, detuning_hz })));
                lines.push(line_no);
                columns.push(d.column_of("t"));
            }
            "efield" => {
                let t = from_us(d.number("t", None)?);
                let fwhm = from_us(d.number("fwhm", Some(0.023))?);
                let voltage = d.number("voltage", Some(54.0))?;
                let polarity = d.number("polarity", Some(1.0))?;
                if polarity != 1.0 && polarity != -1.0 {
                    return Err(SequenceError::new(line_no, d.column_of("polarity"), SequenceErrorKind::Semantic, "polarity must be 1 or -1"));
                }
                if !(fwhm > 0.0) {
                    return Err(SequenceError::new(line_no, d.column_of("fwhm"), SequenceErrorKind::Semantic, "efield fwhm must be > 0"));
                }
                d.finish()?;
                let pulse = EFieldPulse { center_s: t, fwhm_s: fwhm, peak_voltage_v: voltage, polarity: polarity as i8 };
                events.push((t, EventKind::EField(pulse)));
                lines.push(line_no);
                columns.push(d.column_of("t"));
            }
            "control" => {
                let t = from_us(d.number("t", None)?);
                let direction = match d.raw("dir") {
                    Some(("to_spin", _)) => Direction::ToSpin,
                    Some(("to_optical", _)) => Direction::ToOptical,
                    Some((other, col)) => {
                        return Err(SequenceError::new(line_no, col, SequenceErrorKind::Syntax, format!("dir must be to_spin or to_optical, found '{other}'")))
                    }
                    None => return Err(SequenceError::new(line_no, kw_col, SequenceErrorKind::Syntax, "'control' requires 'dir'")),
                };
                let efficiency = d.number("eff", Some(1.0))?;
                let leak = d.number("leak", Some(0.0))?;
                let bg = d.number("bg_amp", Some(0.0))?;
                let duration = from_us(d.number("duration", Some(2.0))?);
                for (key, v) in [("eff", efficiency), ("leak", leak)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(SequenceError::new(line_no, d.column_of(key), SequenceErrorKind::Semantic, format!("{key} must lie in [0, 1]")));
                    }
                }
                if bg < 0.0 || duration < 0.0 {
                    let key = if bg < 0.0 { "bg_amp" } else { "duration" };
                    return Err(SequenceError::new(line_no, d.column_of(key), SequenceErrorKind::Semantic, format!("{key} must be >= 0")));
                }
                d.finish()?;
                events.push((t, EventKind::SpinTransfer(SpinTransfer { direction, efficiency, leak, background_amplitude: bg, duration_s: duration })));
                lines.push(line_no);
                columns.push(d.column_of("t"));
            }
            "readout" => {
                let start = from_us(d.number("start", None)?);
                let end = from_us(d.number("end", None)?);
                if !(end > start) {
                    return Err(SequenceError::new(line_no, d.column_of("end"), SequenceErrorKind::Semantic, "readout end must be after start"));
                }
                d.finish()?;
                events.push((start, EventKind::Readout(ReadoutWindow { start_s: start, end_s: end })));
                lines.push(line_no);
                columns.push(d.column_of("start"));
            }
            other => {
                return Err(SequenceError::new(line_no, kw_col, SequenceErrorKind::Syntax, format!("unknown directive '{other}'")));
            }
        }
    }

    let Some((grid, grid_line, grid_col)) = grid else {
        return Err(SequenceError::new(line_count + 1, 1, SequenceErrorKind::Semantic, "missing 'grid' directive"));
    };
    check_grid(&grid, grid_line, grid_col)?;
    validate_with_columns(grid, &events, &lines, &columns)
}

fn from_us(v: f64) -> f64 {
    v / 1e6
}

fn from_mhz(v: f64) -> f64 {
    v * 1e6
}

fn check_grid(grid: &Grid, line: usize, column: usize) -> Result<(), SequenceError> {
    if !(grid.start_s >= 0.0) {
        return Err(SequenceError::new(line, 1, SequenceErrorKind::Semantic, "grid start must be >= 0"));
    }
    if !(grid.end_s > grid.start_s) {
        return Err(SequenceError::new(line, 1, SequenceErrorKind::Semantic, "grid has zero length (end <= start)"));
    }
    if !(grid.step_s > 0.0) {
        return Err(SequenceError::new(line, column, SequenceErrorKind::Semantic, "grid step must be > 0"));
    }
    if (grid.end_s - grid.start_s) / grid.step_s > 5e7 {
        return Err(SequenceError::new(line, column, SequenceErrorKind::Semantic, "grid has more than 5e7 samples"));
    }
    Ok(())
}

fn validate(grid: Grid, events: &[(f64, EventKind)], lines: &[usize], grid_line: usize) -> Result<Timeline, SequenceError> {
    check_grid(&grid, grid_line.max(1), 1)?;
    let columns = vec![1; events.len()];
    validate_with_columns(grid, events, lines, &columns)
}

fn validate_with_columns(grid: Grid, events: &[(f64, EventKind)], lines: &[usize], columns: &[usize]) -> Result<Timeline, SequenceError> {
    let mut out = Vec::with_capacity(events.len());
    let mut previous: Option<f64> = None;
    let mut spin_open = false;
    for (i, &(t, kind)) in events.iter().enumerate() {
        let line = lines[i];
        let col = columns[i];
        if !(t.is_finite() && t >= 0.0) {
            return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "event time must be finite and >= 0"));
        }
        if let Some(p) = previous {
            if t <= p {
                return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "events are not in strictly increasing time order"));
            }
        }
        previous = Some(t);
        match kind {
            EventKind::SpinTransfer(s) => match (s.direction, spin_open) {
                (Direction::ToSpin, false) => spin_open = true,
                (Direction::ToOptical, true) => spin_open = false,
                (Direction::ToOptical, false) => {
                    return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "TO_OPTICAL before TO_SPIN"));
                }
                (Direction::ToSpin, true) => {
                    return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "TO_SPIN while a spin excitation is already stored"));
                }
            },
            EventKind::Readout(r) => {
                if r.start_s < grid.start_s || r.end_s > grid.end_s + 0.5 * grid.step_s {
                    return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "readout window lies outside the grid"));
                }
            }
            EventKind::EField(p) => {
                if p.fwhm_s <= 0.0 {
                    return Err(SequenceError::new(line, col, SequenceErrorKind::Semantic, "efield fwhm must be > 0"));
                }
            }
            EventKind::OpticalInput(_) => {}
        }
        let (grid_index, grid_offset_s) = grid.snap(t);
        out.push(Event { time_s: t, kind, grid_index, grid_offset_s });
    }
    Ok(Timeline { grid, events: out })
}
