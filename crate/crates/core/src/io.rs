//! Trace files, deterministic replay and run statistics.
//!
//! A trace is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"t_ms":0,"port":"A","type":"note_on","channel":0,"note":60,"velocity":100}
//! {"t_ms":40,"port":"B","type":"cc","channel":0,"controller":54,"value":90}
//! {"t_ms":90,"port":"B","type":"raw","bytes":[144,62,100,64,100]}
//! ```
//!
//! `raw` lines carry unframed bytes and go through a per-port MIDI parser
//! that persists across lines, so running status may span them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError, OutputFrame, Port, SimRecord};
use crate::midi::{self, MidiEvent, ParserState};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t_ms} ms precedes {previous} ms on an earlier line")]
    Unsorted { line: usize, t_ms: u64, previous: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub t_ms: u64,
    pub port: Port,
    pub event: MidiEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LineKind {
    NoteOn,
    NoteOff,
    Cc,
    Raw,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    t_ms: u64,
    port: Port,
    #[serde(rename = "type")]
    kind: LineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    velocity: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    controller: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes: Option<Vec<u8>>,
}

impl TraceLine {
    fn from_event(ev: &TraceEvent) -> Self {
        let mut line = TraceLine {
            t_ms: ev.t_ms,
            port: ev.port,
            kind: LineKind::Raw,
            channel: None,
            note: None,
            velocity: None,
            controller: None,
            value: None,
            bytes: None,
        };
        match ev.event {
            MidiEvent::NoteOn { channel, note, velocity }
            | MidiEvent::NoteOff { channel, note, velocity } => {
                line.kind = if ev.event.is_note_on() {
                    LineKind::NoteOn
                } else {
                    LineKind::NoteOff
                };
                line.channel = Some(channel);
                line.note = Some(note);
                line.velocity = Some(velocity);
            }
            MidiEvent::ControlChange { channel, controller, value } => {
                line.kind = LineKind::Cc;
                line.channel = Some(channel);
                line.controller = Some(controller);
                line.value = Some(value);
            }
            MidiEvent::Other { status, ref data } => {
                let mut bytes = vec![status];
                bytes.extend_from_slice(data);
                if status == 0xF0 {
                    bytes.push(0xF7);
                }
                line.bytes = Some(bytes);
            }
        }
        line
    }
}

/// Decodes one trace line into zero or more events.
fn decode_line(
    line: TraceLine,
    parsers: &mut [ParserState; 2],
) -> Result<Vec<MidiEvent>, String> {
    let need = |field: Option<u8>, name: &str| field.ok_or_else(|| format!("missing field `{name}`"));
    let channel = line.channel.unwrap_or(0);
    let event = match line.kind {
        LineKind::NoteOn | LineKind::NoteOff => {
            let note = need(line.note, "note")?;
            let velocity = need(line.velocity, "velocity")?;
            if line.kind == LineKind::NoteOn {
                MidiEvent::NoteOn { channel, note, velocity }
            } else {
                MidiEvent::NoteOff { channel, note, velocity }
            }
        }
        LineKind::Cc => MidiEvent::ControlChange {
            channel,
            controller: need(line.controller, "controller")?,
            value: need(line.value, "value")?,
        },
        LineKind::Raw => {
            let bytes = line.bytes.ok_or("missing field `bytes`")?;
            return Ok(parsers[line.port.index()].parse(&bytes));
        }
    };
    event.validate().map_err(|e| e.to_string())?;
    Ok(vec![event])
}

/// Parses trace text. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut parsers = [ParserState::new(), ParserState::new()];
    let mut events = Vec::new();
    let mut previous: Option<u64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: TraceLine = serde_json::from_str(raw).map_err(|e| TraceError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = previous {
            if line.t_ms < prev {
                return Err(TraceError::Unsorted {
                    line: line_no,
                    t_ms: line.t_ms,
                    previous: prev,
                });
            }
        }
        previous = Some(line.t_ms);
        let (t_ms, port) = (line.t_ms, line.port);
        let decoded = decode_line(line, &mut parsers).map_err(|message| TraceError::Parse {
            line: line_no,
            message,
        })?;
        events.extend(decoded.into_iter().map(|event| TraceEvent { t_ms, port, event }));
    }
    Ok(events)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceEvent>, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_trace(&text)
}

/// Formats events in the trace line format, one line per event.
pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        let line = serde_json::to_string(&TraceLine::from_event(ev))
            .expect("trace lines contain only plain data");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Summary of a replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub sim_count: usize,
    pub shot_count: usize,
    pub sims: Vec<SimRecord>,
    /// Fraction of shots whose two bits agree; absent without shots.
    pub agreement_rate: Option<f64>,
    /// `2·agreement_rate − 1`, the empirical ⟨Z⊗Z⟩ correlation.
    pub correlation_estimate: Option<f64>,
    /// Simulation counts by `round(12·s)`, indices 0 to 12.
    pub s_histogram: Vec<u64>,
}

impl StatsReport {
    pub fn from_sims(sims: Vec<SimRecord>) -> Self {
        let shot_count: usize = sims.iter().map(|r| r.shots.len()).sum();
        let agreeing = sims
            .iter()
            .flat_map(|r| &r.shots)
            .filter(|p| p.agree())
            .count();
        let agreement_rate = (shot_count > 0).then(|| agreeing as f64 / shot_count as f64);
        let mut s_histogram = vec![0u64; 13];
        for r in &sims {
            let bin = (r.s * 12.0).round().clamp(0.0, 12.0) as usize;
            s_histogram[bin] += 1;
        }
        StatsReport {
            sim_count: sims.len(),
            shot_count,
            sims,
            agreement_rate,
            correlation_estimate: agreement_rate.map(|a| 2.0 * a - 1.0),
            s_histogram,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats contain only plain data");
        s.push('\n');
        s
    }
}

fn collect(frame: OutputFrame, out: &mut Vec<TraceEvent>, sims: &mut Vec<SimRecord>) {
    let t_ms = frame.t_ms;
    out.extend(
        frame
            .events
            .into_iter()
            .map(|(port, event)| TraceEvent { t_ms, port, event }),
    );
    sims.extend(frame.sim);
}

/// Replays a sorted trace through a fresh engine in virtual time.
///
/// Time advances over the union of the input timestamps and the ramp tick
/// grid, and keeps going after the last input until the engine is idle.
/// At each instant, inputs are relayed before the engine steps.
pub fn run_replay(
    trace: &[TraceEvent],
    config: &EngineConfig,
) -> Result<(Vec<TraceEvent>, StatsReport), EngineError> {
    let mut engine = Engine::new(config.clone())?;
    let mut out = Vec::new();
    let mut sims = Vec::new();
    let mut next = 0;
    if !trace.is_empty() {
        loop {
            let t = match trace.get(next) {
                Some(ev) => ev.t_ms.min(engine.next_ramp_ms()),
                None if engine.is_idle() => break,
                None => engine.next_ramp_ms(),
            };
            while let Some(ev) = trace.get(next).filter(|ev| ev.t_ms == t) {
                let event = midi::normalize_note_off(ev.event.clone());
                collect(engine.on_midi_in(ev.port, event, t)?, &mut out, &mut sims);
                next += 1;
            }
            collect(engine.step(t)?, &mut out, &mut sims);
        }
    }
    Ok((out, StatsReport::from_sims(sims)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), TraceError> {
    fs::write(path, contents).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_trace(path: impl AsRef<Path>, events: &[TraceEvent]) -> Result<(), TraceError> {
    write_file(path.as_ref(), &format_trace(events))
}

pub fn write_outputs(
    events: &[TraceEvent],
    stats: &StatsReport,
    trace_path: impl AsRef<Path>,
    stats_path: impl AsRef<Path>,
) -> Result<(), TraceError> {
    write_trace(trace_path, events)?;
    write_file(stats_path.as_ref(), &stats.to_json())
}
