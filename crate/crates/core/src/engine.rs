//! Deterministic event-driven core: note relay, simulation scheduling,
//! bit-to-CC assembly and parameter ramps.
//!
//! Time is injected as integer milliseconds; nothing here reads a clock.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::MidiEvent;
use crate::qcore::{self, BitPair, Prng, QcoreError};
use crate::tonal::{self, NoteWindow};

/// Largest value a 7-bit controller accepts.
pub const CC_MAX: u8 = 127;

/// Shots that fit in one 7-bit CC value.
pub const MAX_SHOTS: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("clock went backwards: {now} ms after {last} ms")]
    ClockRegression { now: u64, last: u64 },
    #[error("unknown port {0:?}, expected \"A\" or \"B\"")]
    UnknownPort(String),
    #[error("shot list must hold 1 to {MAX_SHOTS} pairs, got {0}")]
    ShotCount(usize),
    #[error("CC value {0} exceeds 127")]
    CcValue(u8),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

/// One of the two players; also names the matching instrument output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::A, Port::B];

    pub fn index(self) -> usize {
        match self {
            Port::A => 0,
            Port::B => 1,
        }
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::A => "A",
            Port::B => "B",
        })
    }
}

impl FromStr for Port {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Port::A),
            "B" => Ok(Port::B),
            other => Err(EngineError::UnknownPort(other.to_owned())),
        }
    }
}

/// Timing and mapping knobs. Deserializes from flat TOML whose keys match
/// the field names; missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub window_size: usize,
    pub shots_per_sim: usize,
    pub sim_period_ms: u64,
    pub ramp_tick_ms: u64,
    /// CC units moved per ramp tick.
    pub ramp_step: u8,
    pub cc_controller_a: u8,
    pub cc_controller_b: u8,
    pub cc_channel_a: u8,
    pub cc_channel_b: u8,
    /// Output port for notes arriving on port A.
    pub relay_a: Port,
    /// Output port for notes arriving on port B.
    pub relay_b: Port,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_size: tonal::DEFAULT_WINDOW,
            shots_per_sim: MAX_SHOTS,
            sim_period_ms: 100,
            ramp_tick_ms: 10,
            // ceil(5% of 127)
            ramp_step: 7,
            cc_controller_a: 54,
            cc_controller_b: 80,
            cc_channel_a: 0,
            cc_channel_b: 0,
            relay_a: Port::A,
            relay_b: Port::B,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EngineError> {
        let config: EngineConfig =
            toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: String| Err(EngineError::Config(msg));
        if self.window_size == 0 {
            return fail("window_size must be at least 1".into());
        }
        if !(1..=MAX_SHOTS).contains(&self.shots_per_sim) {
            return fail(format!(
                "shots_per_sim must be in 1..={MAX_SHOTS}, got {}",
                self.shots_per_sim
            ));
        }
        if self.ramp_tick_ms == 0 {
            return fail("ramp_tick_ms must be positive".into());
        }
        if self.sim_period_ms < self.ramp_tick_ms {
            return fail(format!(
                "sim_period_ms ({}) must be at least ramp_tick_ms ({})",
                self.sim_period_ms, self.ramp_tick_ms
            ));
        }
        if self.ramp_step == 0 || self.ramp_step > CC_MAX {
            return fail(format!("ramp_step must be in 1..=127, got {}", self.ramp_step));
        }
        for (name, v) in [
            ("cc_controller_a", self.cc_controller_a),
            ("cc_controller_b", self.cc_controller_b),
        ] {
            if v > 127 {
                return fail(format!("{name} must be in 0..=127, got {v}"));
            }
        }
        for (name, v) in [("cc_channel_a", self.cc_channel_a), ("cc_channel_b", self.cc_channel_b)] {
            if v > 15 {
                return fail(format!("{name} must be in 0..=15, got {v}"));
            }
        }
        Ok(())
    }

    pub fn relay_target(&self, input: Port) -> Port {
        match input {
            Port::A => self.relay_a,
            Port::B => self.relay_b,
        }
    }

    fn cc_address(&self, port: Port) -> (u8, u8) {
        match port {
            Port::A => (self.cc_channel_a, self.cc_controller_a),
            Port::B => (self.cc_channel_b, self.cc_controller_b),
        }
    }
}

/// Outcome of one simulation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t_ms: u64,
    pub s: f64,
    pub shots: Vec<BitPair>,
    pub value_a: u8,
    pub value_b: u8,
}

/// Everything the engine emitted at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputFrame {
    pub t_ms: u64,
    pub events: Vec<(Port, MidiEvent)>,
    pub sim: Option<SimRecord>,
}

impl OutputFrame {
    fn empty(t_ms: u64) -> Self {
        OutputFrame {
            t_ms,
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.sim.is_none()
    }

    /// Appends `later` after this frame's events.
    pub fn merge(&mut self, later: OutputFrame) {
        self.t_ms = self.t_ms.max(later.t_ms);
        self.events.extend(later.events);
        if later.sim.is_some() {
            self.sim = later.sim;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub windows: [NoteWindow; 2],
    pub current_cc: [u8; 2],
    pub target_cc: [u8; 2],
    pub last_sim_ms: Option<u64>,
    pub note_since_last_sim: bool,
    pub rng: Prng,
    pub last_s: f64,
    pub last_shots: Vec<BitPair>,
    last_now: Option<u64>,
    next_ramp_ms: u64,
}

impl EngineState {
    fn new(config: &EngineConfig) -> Self {
        EngineState {
            windows: [
                NoteWindow::new(config.window_size),
                NoteWindow::new(config.window_size),
            ],
            current_cc: [0; 2],
            target_cc: [0; 2],
            last_sim_ms: None,
            note_since_last_sim: false,
            rng: Prng::new(config.seed),
            last_s: 0.0,
            last_shots: Vec::new(),
            last_now: None,
            next_ramp_ms: 0,
        }
    }

    pub fn window(&self, port: Port) -> &NoteWindow {
        &self.windows[port.index()]
    }
}

/// Packs shot bits MSB-first into two 7-bit values: `b0` bits for
/// instrument A, `b1` bits for instrument B. Unused low bits stay zero.
pub fn assemble_cc(shots: &[BitPair]) -> Result<(u8, u8), EngineError> {
    if shots.is_empty() || shots.len() > MAX_SHOTS {
        return Err(EngineError::ShotCount(shots.len()));
    }
    let pack = |bit: fn(&BitPair) -> u8| {
        shots
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, p)| acc | (bit(p) << (MAX_SHOTS - 1 - i)))
    };
    Ok((pack(|p| p.b0), pack(|p| p.b1)))
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    state: EngineState,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let state = EngineState::new(&config);
        Ok(Engine { config, state })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// Current similarity parameter from the two note windows.
    pub fn current_parameter(&self) -> tonal::SimilarityParam {
        tonal::current_parameter(&self.state.windows[0], &self.state.windows[1])
    }

    /// True when no simulation is pending and both ramps have settled.
    pub fn is_idle(&self) -> bool {
        !self.state.note_since_last_sim && self.state.current_cc == self.state.target_cc
    }

    fn advance_clock(&mut self, now: u64) -> Result<(), EngineError> {
        if let Some(last) = self.state.last_now {
            if now < last {
                return Err(EngineError::ClockRegression { now, last });
            }
        }
        self.state.last_now = Some(now);
        Ok(())
    }

    /// Relays an input event in the same frame and feeds NoteOns into the
    /// player's window. Expects velocity-0 NoteOns already normalized.
    pub fn on_midi_in(
        &mut self,
        port: Port,
        event: MidiEvent,
        now: u64,
    ) -> Result<OutputFrame, EngineError> {
        self.advance_clock(now)?;
        if let MidiEvent::NoteOn { note, velocity, .. } = event {
            if velocity > 0 {
                self.state.windows[port.index()].push(note);
                self.state.note_since_last_sim = true;
            }
        }
        let mut frame = OutputFrame::empty(now);
        frame.events.push((self.config.relay_target(port), event));
        Ok(frame)
    }

    /// Runs a simulation if a note arrived since the last one and the
    /// simulation period has elapsed.
    pub fn maybe_simulate(&mut self, now: u64) -> Result<OutputFrame, EngineError> {
        self.advance_clock(now)?;
        let period_elapsed = self
            .state
            .last_sim_ms
            .is_none_or(|last| now - last >= self.config.sim_period_ms);
        if !self.state.note_since_last_sim || !period_elapsed {
            return Ok(OutputFrame::empty(now));
        }
        let s = self.current_parameter().value();
        self.simulate_at(now, s)
    }

    /// Unconditionally simulates at parameter `s` and retargets both ramps.
    pub fn simulate_at(&mut self, now: u64, s: f64) -> Result<OutputFrame, EngineError> {
        self.advance_clock(now)?;
        let shots = qcore::run_shots(s, self.config.shots_per_sim, &mut self.state.rng)?;
        let (value_a, value_b) = assemble_cc(&shots)?;
        let st = &mut self.state;
        st.target_cc = [value_a, value_b];
        st.note_since_last_sim = false;
        st.last_sim_ms = Some(now);
        st.last_s = s;
        st.last_shots = shots.clone();
        let mut frame = OutputFrame::empty(now);
        frame.sim = Some(SimRecord {
            t_ms: now,
            s,
            shots,
            value_a,
            value_b,
        });
        Ok(frame)
    }

    /// Manually sets an instrument's ramp target.
    pub fn set_target(&mut self, port: Port, value: u8) -> Result<(), EngineError> {
        if value > CC_MAX {
            return Err(EngineError::CcValue(value));
        }
        self.state.target_cc[port.index()] = value;
        Ok(())
    }

    /// Moves each instrument one step toward its target, emitting a CC for
    /// every value that changed.
    pub fn ramp_tick(&mut self, now: u64) -> Result<OutputFrame, EngineError> {
        self.advance_clock(now)?;
        let mut frame = OutputFrame::empty(now);
        for port in Port::BOTH {
            let i = port.index();
            let (current, target) = (self.state.current_cc[i], self.state.target_cc[i]);
            if current == target {
                continue;
            }
            let step = self.config.ramp_step.min(current.abs_diff(target));
            let next = if target > current {
                current + step
            } else {
                current - step
            };
            self.state.current_cc[i] = next;
            let (channel, controller) = self.config.cc_address(port);
            frame.events.push((
                port,
                MidiEvent::ControlChange {
                    channel,
                    controller,
                    value: next,
                },
            ));
        }
        Ok(frame)
    }

    /// Time at which the next ramp tick is due.
    pub fn next_ramp_ms(&self) -> u64 {
        self.state.next_ramp_ms
    }

    /// Advances virtual time: a due simulation first, then the ramp tick if
    /// `now` has reached the tick grid.
    pub fn step(&mut self, now: u64) -> Result<OutputFrame, EngineError> {
        self.advance_clock(now)?;
        let mut frame = self.maybe_simulate(now)?;
        if now >= self.state.next_ramp_ms {
            frame.merge(self.ramp_tick(now)?);
            let tick = self.config.ramp_tick_ms;
            self.state.next_ramp_ms = (now / tick + 1) * tick;
        }
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note_on(note: u8) -> MidiEvent {
        MidiEvent::NoteOn {
            channel: 0,
            note,
            velocity: 100,
        }
    }

    fn bits(b0: &[u8], b1: &[u8]) -> Vec<BitPair> {
        b0.iter().zip(b1).map(|(&b0, &b1)| BitPair { b0, b1 }).collect()
    }

    fn engine() -> Engine {
        Engine::new(EngineConfig {
            seed: 42,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn relay_is_immediate_and_windows_track_note_ons() {
        let mut e = engine();
        let frame = e.on_midi_in(Port::A, note_on(60), 0).unwrap();
        assert_eq!(frame.t_ms, 0);
        assert_eq!(frame.events, vec![(Port::A, note_on(60))]);
        assert_eq!(e.state().window(Port::A).len(), 1);
        assert!(e.state().note_since_last_sim);

        let off = MidiEvent::NoteOff { channel: 0, note: 60, velocity: 0 };
        let frame = e.on_midi_in(Port::B, off.clone(), 5).unwrap();
        assert_eq!(frame.events, vec![(Port::B, off)]);
        assert!(e.state().window(Port::B).is_empty());

        let cc = MidiEvent::ControlChange { channel: 0, controller: 1, value: 3 };
        e.on_midi_in(Port::B, cc, 6).unwrap();
        assert!(e.state().window(Port::B).is_empty());
        assert_eq!(e.state().window(Port::A).len(), 1);
    }

    #[test]
    fn relay_follows_configured_mapping() {
        let mut e = Engine::new(EngineConfig {
            relay_a: Port::B,
            ..Default::default()
        })
        .unwrap();
        let frame = e.on_midi_in(Port::A, note_on(60), 0).unwrap();
        assert_eq!(frame.events[0].0, Port::B);
    }

    #[test]
    fn simulation_needs_a_new_note() {
        let mut e = engine();
        assert!(e.maybe_simulate(1000).unwrap().sim.is_none());
        e.on_midi_in(Port::A, note_on(60), 1000).unwrap();
        assert!(e.maybe_simulate(1000).unwrap().sim.is_some());
        assert!(e.maybe_simulate(5000).unwrap().sim.is_none());
    }

    #[test]
    fn simulation_respects_period() {
        let mut e = engine();
        e.on_midi_in(Port::A, note_on(60), 0).unwrap();
        assert!(e.maybe_simulate(0).unwrap().sim.is_some());
        e.on_midi_in(Port::B, note_on(60), 50).unwrap();
        assert!(e.maybe_simulate(50).unwrap().sim.is_none());
        assert!(e.maybe_simulate(99).unwrap().sim.is_none());
        let sim = e.maybe_simulate(100).unwrap().sim.unwrap();
        assert_eq!(sim.s, 0.0);
        assert_eq!(sim.value_a, sim.value_b);
        assert_eq!(e.state().target_cc[0], e.state().target_cc[1]);
    }

    #[test]
    fn assemble_cc_packs_msb_first() {
        let shots = bits(&[1, 0, 1, 1, 0, 1, 0], &[0; 7]);
        assert_eq!(assemble_cc(&shots).unwrap(), (90, 0));
        assert_eq!(assemble_cc(&bits(&[0; 7], &[0; 7])).unwrap(), (0, 0));
        assert_eq!(assemble_cc(&bits(&[1], &[1])).unwrap(), (64, 64));
        assert_eq!(assemble_cc(&[]), Err(EngineError::ShotCount(0)));
        assert_eq!(assemble_cc(&bits(&[0; 8], &[0; 8])), Err(EngineError::ShotCount(8)));
    }

    #[test]
    fn assemble_cc_complement_for_all_values() {
        for v in 0u8..128 {
            let b0: Vec<u8> = (0..7).rev().map(|k| (v >> k) & 1).collect();
            let b1: Vec<u8> = b0.iter().map(|b| 1 - b).collect();
            let (a, b) = assemble_cc(&bits(&b0, &b1)).unwrap();
            assert_eq!(a, v);
            assert_eq!(b, 127 - a);
        }
    }

    #[test]
    fn ramp_reaches_target_in_fixed_steps() {
        let mut e = engine();
        e.set_target(Port::A, 90).unwrap();
        let first = e.ramp_tick(0).unwrap();
        assert_eq!(
            first.events,
            vec![(Port::A, MidiEvent::ControlChange { channel: 0, controller: 54, value: 7 })]
        );
        let mut ticks = 1;
        while e.state().current_cc[0] != 90 {
            e.ramp_tick(ticks * 10).unwrap();
            ticks += 1;
        }
        assert_eq!(ticks, 13);
        assert!(e.ramp_tick(1000).unwrap().events.is_empty());
    }

    #[test]
    fn ramp_down_full_scale() {
        let mut e = engine();
        e.state.current_cc = [127, 127];
        let mut ticks = 0;
        while e.state().current_cc[1] != 0 {
            let f = e.ramp_tick(ticks * 10).unwrap();
            assert_eq!(f.events.len(), 2);
            ticks += 1;
        }
        assert_eq!(ticks, 19);
    }

    #[test]
    fn set_target_rejects_out_of_range() {
        assert_eq!(engine().set_target(Port::A, 128), Err(EngineError::CcValue(128)));
    }

    #[test]
    fn step_is_quiet_without_input() {
        let mut e = engine();
        for t in (0..1000).step_by(10) {
            assert!(e.step(t).unwrap().is_empty());
        }
        assert!(e.is_idle());
    }

    #[test]
    fn step_rejects_clock_regression() {
        let mut e = engine();
        e.step(100).unwrap();
        assert_eq!(e.step(90), Err(EngineError::ClockRegression { now: 90, last: 100 }));
        assert!(e.on_midi_in(Port::A, note_on(1), 50).is_err());
    }

    #[test]
    fn step_ramps_only_on_grid() {
        let mut e = engine();
        e.set_target(Port::A, 50).unwrap();
        assert_eq!(e.step(0).unwrap().events.len(), 1);
        assert!(e.step(5).unwrap().events.is_empty());
        assert_eq!(e.step(10).unwrap().events.len(), 1);
        // late tick still fires once, then realigns to the grid
        assert_eq!(e.step(37).unwrap().events.len(), 1);
        assert_eq!(e.next_ramp_ms(), 40);
    }

    #[test]
    fn injected_parameter_drives_shots() {
        let mut e = engine();
        for t in 0..50 {
            let sim = e.simulate_at(t * 100, 1.0).unwrap().sim.unwrap();
            assert_eq!(sim.value_b, 127 - sim.value_a);
        }
        assert!(e.simulate_at(10_000, 1.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        let bad = [
            EngineConfig { shots_per_sim: 0, ..Default::default() },
            EngineConfig { shots_per_sim: 8, ..Default::default() },
            EngineConfig { sim_period_ms: 5, ..Default::default() },
            EngineConfig { ramp_tick_ms: 0, ..Default::default() },
            EngineConfig { ramp_step: 0, ..Default::default() },
            EngineConfig { cc_controller_a: 128, ..Default::default() },
            EngineConfig { cc_channel_b: 16, ..Default::default() },
            EngineConfig { window_size: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(Engine::new(c), Err(EngineError::Config(_))));
        }
    }

    #[test]
    fn config_from_toml() {
        let c = EngineConfig::from_toml_str(
            "seed = 7\ncc_controller_a = 20\nrelay_b = \"A\"\nshots_per_sim = 3\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.cc_controller_a, 20);
        assert_eq!(c.relay_b, Port::A);
        assert_eq!(c.shots_per_sim, 3);
        assert_eq!(c.sim_period_ms, 100);
        assert!(EngineConfig::from_toml_str("bogus = 1").is_err());
        assert!(EngineConfig::from_toml_str("shots_per_sim = 9").is_err());
    }

    #[test]
    fn port_parsing() {
        assert_eq!("A".parse::<Port>().unwrap(), Port::A);
        assert_eq!("C".parse::<Port>(), Err(EngineError::UnknownPort("C".into())));
    }
}
