//! Python bindings for the entangled duet engine.
//!
//! MIDI events cross the boundary as dicts in the trace-line shape:
//! `{"type": "note_on", "channel": 0, "note": 60, "velocity": 100}`,
//! `{"type": "cc", "channel": 0, "controller": 54, "value": 90}` or
//! `{"type": "raw", "bytes": b"..."}`.

use duet_core::engine::{self, EngineError, OutputFrame, SimRecord};
use duet_core::io;
use duet_core::midi::{self, MidiEvent, ParserState};
use duet_core::qcore::{self, BitPair};
use duet_core::tonal;
use duet_core::{EngineConfig, Port};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_port(port: &str) -> PyResult<Port> {
    port.parse().map_err(|e: EngineError| value_err(e))
}

fn event_to_dict<'py>(py: Python<'py>, event: &MidiEvent) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    match *event {
        MidiEvent::NoteOn { channel, note, velocity } | MidiEvent::NoteOff { channel, note, velocity } => {
            d.set_item("type", if event.is_note_on() { "note_on" } else { "note_off" })?;
            d.set_item("channel", channel)?;
            d.set_item("note", note)?;
            d.set_item("velocity", velocity)?;
        }
        MidiEvent::ControlChange { channel, controller, value } => {
            d.set_item("type", "cc")?;
            d.set_item("channel", channel)?;
            d.set_item("controller", controller)?;
            d.set_item("value", value)?;
        }
        MidiEvent::Other { .. } => {
            d.set_item("type", "raw")?;
            d.set_item("bytes", PyBytes::new(py, &midi::serialize(event).map_err(value_err)?))?;
        }
    }
    Ok(d)
}

fn dict_to_event(d: &Bound<'_, PyDict>) -> PyResult<MidiEvent> {
    let field = |name: &str| -> PyResult<u8> {
        d.get_item(name)?
            .ok_or_else(|| value_err(format!("missing key {name:?}")))?
            .extract()
    };
    let kind: String = d
        .get_item("type")?
        .ok_or_else(|| value_err("missing key \"type\""))?
        .extract()?;
    let channel = match d.get_item("channel")? {
        Some(c) => c.extract()?,
        None => 0,
    };
    let event = match kind.as_str() {
        "note_on" => MidiEvent::NoteOn { channel, note: field("note")?, velocity: field("velocity")? },
        "note_off" => MidiEvent::NoteOff { channel, note: field("note")?, velocity: field("velocity")? },
        "cc" => MidiEvent::ControlChange { channel, controller: field("controller")?, value: field("value")? },
        "raw" => {
            let bytes: Vec<u8> = d
                .get_item("bytes")?
                .ok_or_else(|| value_err("missing key \"bytes\""))?
                .extract()?;
            let mut events = ParserState::new().parse(&bytes);
            if events.len() != 1 {
                return Err(value_err(format!("raw bytes hold {} complete messages, expected 1", events.len())));
            }
            events.remove(0)
        }
        other => return Err(value_err(format!("unknown event type {other:?}"))),
    };
    event.validate().map_err(value_err)?;
    Ok(event)
}

fn sim_to_dict<'py>(py: Python<'py>, sim: &SimRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t_ms", sim.t_ms)?;
    d.set_item("s", sim.s)?;
    let shots: Vec<(u8, u8)> = sim.shots.iter().map(|p| (p.b0, p.b1)).collect();
    d.set_item("shots", shots)?;
    d.set_item("value_a", sim.value_a)?;
    d.set_item("value_b", sim.value_b)?;
    Ok(d)
}

fn frame_to_dict<'py>(py: Python<'py>, frame: &OutputFrame) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t_ms", frame.t_ms)?;
    let events = PyList::empty(py);
    for (port, event) in &frame.events {
        events.append((port.to_string(), event_to_dict(py, event)?))?;
    }
    d.set_item("events", events)?;
    match &frame.sim {
        Some(sim) => d.set_item("sim", sim_to_dict(py, sim)?)?,
        None => d.set_item("sim", py.None())?,
    }
    Ok(d)
}

/// Exact outcome probabilities `[p00, p01, p10, p11]` of the switch circuit.
#[pyfunction]
fn switch_probs(s: f64) -> PyResult<[f64; 4]> {
    let state = qcore::entanglement_switch_state(s).map_err(value_err)?;
    qcore::measure_probs(&state).map_err(value_err)
}

/// `(phi_plus_weight, psi_plus_weight)` for parameter `s`.
#[pyfunction]
fn bell_weights(s: f64) -> PyResult<(f64, f64)> {
    qcore::bell_weights(s).map_err(value_err)
}

/// Samples `n` bit pairs at parameter `s` from a generator seeded with `seed`.
#[pyfunction]
fn run_shots(s: f64, n: usize, seed: u64) -> PyResult<Vec<(u8, u8)>> {
    let shots = qcore::run_shots(s, n, &mut qcore::Prng::new(seed)).map_err(value_err)?;
    Ok(shots.into_iter().map(|p| (p.b0, p.b1)).collect())
}

/// Quantized tonal similarity of two average pitches, in twelfths.
#[pyfunction]
fn similarity(avg_a: f64, avg_b: f64) -> f64 {
    tonal::similarity(avg_a, avg_b).value()
}

/// Packs bit pairs MSB-first into `(value_a, value_b)`.
#[pyfunction]
fn assemble_cc(shots: Vec<(u8, u8)>) -> PyResult<(u8, u8)> {
    let pairs = shots
        .into_iter()
        .map(|(b0, b1)| BitPair::try_from([b0, b1]).map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    engine::assemble_cc(&pairs).map_err(value_err)
}

/// Encodes one event dict as MIDI bytes.
#[pyfunction]
fn serialize_midi<'py>(py: Python<'py>, event: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = midi::serialize(&dict_to_event(event)?).map_err(value_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Replays trace text and returns `(output_trace_text, stats_json)`.
#[pyfunction]
#[pyo3(signature = (trace, seed=42, config=""))]
fn replay(trace: &str, seed: u64, config: &str) -> PyResult<(String, String)> {
    let mut config = EngineConfig::from_toml_str(config).map_err(value_err)?;
    config.seed = seed;
    let events = io::parse_trace(trace).map_err(value_err)?;
    let (out, stats) = io::run_replay(&events, &config).map_err(value_err)?;
    Ok((io::format_trace(&out), stats.to_json()))
}

/// SplitMix64 generator.
#[pyclass(name = "Prng")]
struct PyPrng(qcore::Prng);

#[pymethods]
impl PyPrng {
    #[new]
    fn new(seed: u64) -> Self {
        PyPrng(qcore::Prng::new(seed))
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn next_unit(&mut self) -> f64 {
        self.0.next_unit()
    }
}

/// Incremental MIDI byte-stream decoder.
#[pyclass(name = "MidiParser")]
#[derive(Default)]
struct PyMidiParser(ParserState);

#[pymethods]
impl PyMidiParser {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn parse<'py>(&mut self, py: Python<'py>, data: &[u8]) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0.parse(data).iter().map(|e| event_to_dict(py, e)).collect()
    }

    #[getter]
    fn stray_bytes(&self) -> u64 {
        self.0.stray_bytes()
    }
}

/// The real-time engine driven by explicit timestamps in milliseconds.
///
///     engine = Engine(seed=42)
///     engine.on_midi_in("A", {"type": "note_on", "note": 60, "velocity": 100}, 0)
///     frame = engine.step(0)
#[pyclass(name = "Engine")]
struct PyEngine(engine::Engine);

#[pymethods]
impl PyEngine {
    /// `config` is TOML text with `EngineConfig` keys; `seed` overrides it.
    #[new]
    #[pyo3(signature = (config="", seed=None))]
    fn new(config: &str, seed: Option<u64>) -> PyResult<Self> {
        let mut config = EngineConfig::from_toml_str(config).map_err(value_err)?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        engine::Engine::new(config).map(PyEngine).map_err(value_err)
    }

    fn on_midi_in<'py>(
        &mut self,
        py: Python<'py>,
        port: &str,
        event: &Bound<'py, PyDict>,
        now: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let event = midi::normalize_note_off(dict_to_event(event)?);
        let frame = self.0.on_midi_in(parse_port(port)?, event, now).map_err(value_err)?;
        frame_to_dict(py, &frame)
    }

    fn step<'py>(&mut self, py: Python<'py>, now: u64) -> PyResult<Bound<'py, PyDict>> {
        let frame = self.0.step(now).map_err(value_err)?;
        frame_to_dict(py, &frame)
    }

    fn simulate_at<'py>(&mut self, py: Python<'py>, now: u64, s: f64) -> PyResult<Bound<'py, PyDict>> {
        let frame = self.0.simulate_at(now, s).map_err(value_err)?;
        frame_to_dict(py, &frame)
    }

    /// Current similarity parameter from the note windows.
    #[getter]
    fn parameter(&self) -> f64 {
        self.0.current_parameter().value()
    }

    #[getter]
    fn current_cc(&self) -> (u8, u8) {
        let cc = self.0.state().current_cc;
        (cc[0], cc[1])
    }

    #[getter]
    fn target_cc(&self) -> (u8, u8) {
        let cc = self.0.state().target_cc;
        (cc[0], cc[1])
    }

    fn average(&self, port: &str) -> PyResult<Option<f64>> {
        Ok(self.0.state().window(parse_port(port)?).average())
    }

    fn is_idle(&self) -> bool {
        self.0.is_idle()
    }
}

#[pymodule]
fn duet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(switch_probs, m)?)?;
    m.add_function(wrap_pyfunction!(bell_weights, m)?)?;
    m.add_function(wrap_pyfunction!(run_shots, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_cc, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_midi, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_class::<PyPrng>()?;
    m.add_class::<PyMidiParser>()?;
    m.add_class::<PyEngine>()?;
    Ok(())
}
