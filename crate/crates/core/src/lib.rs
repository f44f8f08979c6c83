//! Two players' tonal similarity drives a two-qubit entanglement switch whose
//! measured bits become Control Change values for both players' instruments.
//!
//! - [`qcore`]: statevector simulation and seeded sampling
//! - [`midi`]: MIDI 1.0 byte framing
//! - [`tonal`]: note windows and the similarity parameter
//! - [`engine`]: relay, simulation scheduling and CC ramps in virtual time
//! - [`io`]: trace files, replay and statistics

pub mod engine;
pub mod io;
pub mod midi;
pub mod qcore;
pub mod tonal;

pub use engine::{assemble_cc, Engine, EngineConfig, EngineError, OutputFrame, Port, SimRecord};
pub use io::{StatsReport, TraceError, TraceEvent};
pub use midi::{MidiEvent, ParserState};
pub use qcore::{BitPair, Prng, StateVector2Q};
pub use tonal::{NoteWindow, SimilarityParam};
