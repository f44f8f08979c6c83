//! MIDI 1.0 channel-message framing.
//!
//! The parser accepts running status and interleaved real-time bytes; the
//! serializer always writes a full status byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MidiError {
    #[error("channel {0} out of range 0-15")]
    Channel(u8),
    #[error("{field} value {value} exceeds 7 bits")]
    DataByte { field: &'static str, value: u8 },
    #[error("status byte {0:#04x} has the high bit clear")]
    Status(u8),
}

/// A decoded MIDI message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MidiEvent {
    NoteOn { channel: u8, note: u8, velocity: u8 },
    NoteOff { channel: u8, note: u8, velocity: u8 },
    ControlChange { channel: u8, controller: u8, value: u8 },
    /// Anything else: other channel voice messages, system common,
    /// real-time bytes, and SysEx (status 0xF0, payload without the 0xF7).
    Other { status: u8, data: Vec<u8> },
}

impl MidiEvent {
    pub fn validate(&self) -> Result<(), MidiError> {
        let data = |field, value: u8| {
            if value > 0x7F {
                Err(MidiError::DataByte { field, value })
            } else {
                Ok(())
            }
        };
        match *self {
            MidiEvent::NoteOn { channel, note, velocity }
            | MidiEvent::NoteOff { channel, note, velocity } => {
                check_channel(channel)?;
                data("note", note)?;
                data("velocity", velocity)
            }
            MidiEvent::ControlChange { channel, controller, value } => {
                check_channel(channel)?;
                data("controller", controller)?;
                data("value", value)
            }
            MidiEvent::Other { status, ref data } => {
                if status < 0x80 {
                    return Err(MidiError::Status(status));
                }
                match data.iter().find(|&&b| b > 0x7F) {
                    Some(&value) => Err(MidiError::DataByte { field: "data", value }),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn is_note_on(&self) -> bool {
        matches!(self, MidiEvent::NoteOn { .. })
    }
}

fn check_channel(channel: u8) -> Result<(), MidiError> {
    if channel > 15 {
        Err(MidiError::Channel(channel))
    } else {
        Ok(())
    }
}

/// Encodes an event with an explicit status byte.
pub fn serialize(event: &MidiEvent) -> Result<Vec<u8>, MidiError> {
    event.validate()?;
    Ok(match *event {
        MidiEvent::NoteOn { channel, note, velocity } => vec![0x90 | channel, note, velocity],
        MidiEvent::NoteOff { channel, note, velocity } => vec![0x80 | channel, note, velocity],
        MidiEvent::ControlChange { channel, controller, value } => {
            vec![0xB0 | channel, controller, value]
        }
        MidiEvent::Other { status, ref data } => {
            let mut out = Vec::with_capacity(data.len() + 2);
            out.push(status);
            out.extend_from_slice(data);
            if status == 0xF0 {
                out.push(0xF7);
            }
            out
        }
    })
}

/// Rewrites a zero-velocity NoteOn as NoteOff.
pub fn normalize_note_off(event: MidiEvent) -> MidiEvent {
    match event {
        MidiEvent::NoteOn { channel, note, velocity: 0 } => MidiEvent::NoteOff {
            channel,
            note,
            velocity: 0,
        },
        other => other,
    }
}

/// Number of data bytes following `status`, or `None` for SysEx start.
fn data_len(status: u8) -> Option<usize> {
    match status {
        0x80..=0xBF | 0xE0..=0xEF => Some(2),
        0xC0..=0xDF => Some(1),
        0xF0 => None,
        0xF1 | 0xF3 => Some(1),
        0xF2 => Some(2),
        _ => Some(0),
    }
}

fn decode(status: u8, data: &[u8]) -> MidiEvent {
    let channel = status & 0x0F;
    match (status & 0xF0, data) {
        (0x80, &[note, velocity]) => MidiEvent::NoteOff { channel, note, velocity },
        (0x90, &[note, velocity]) => MidiEvent::NoteOn { channel, note, velocity },
        (0xB0, &[controller, value]) => MidiEvent::ControlChange {
            channel,
            controller,
            value,
        },
        _ => MidiEvent::Other {
            status,
            data: data.to_vec(),
        },
    }
}

/// Incremental decoder state for one input stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParserState {
    /// Status of the message being assembled. Channel statuses persist after
    /// a message completes (running status); system common ones do not.
    running_status: Option<u8>,
    pending: Vec<u8>,
    sysex: Option<Vec<u8>>,
    stray_bytes: u64,
}

impl ParserState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn running_status(&self) -> Option<u8> {
        self.running_status
    }

    pub fn pending(&self) -> &[u8] {
        &self.pending
    }

    /// Data bytes dropped because no status was active.
    pub fn stray_bytes(&self) -> u64 {
        self.stray_bytes
    }

    /// Consumes `bytes`, returning every message completed by them.
    pub fn parse(&mut self, bytes: &[u8]) -> Vec<MidiEvent> {
        let mut events = Vec::new();
        for &b in bytes {
            self.push_byte(b, &mut events);
        }
        events
    }

    fn push_byte(&mut self, b: u8, out: &mut Vec<MidiEvent>) {
        if b >= 0xF8 {
            out.push(MidiEvent::Other {
                status: b,
                data: Vec::new(),
            });
            return;
        }
        if let Some(buf) = self.sysex.as_mut() {
            if b < 0x80 {
                buf.push(b);
                return;
            }
            out.push(MidiEvent::Other {
                status: 0xF0,
                data: self.sysex.take().unwrap_or_default(),
            });
            if b == 0xF7 {
                return;
            }
        }
        if b >= 0x80 {
            self.pending.clear();
            match data_len(b) {
                None => {
                    self.running_status = None;
                    self.sysex = Some(Vec::new());
                }
                Some(0) => {
                    // System common without data; also cancels running status.
                    self.running_status = None;
                    out.push(MidiEvent::Other {
                        status: b,
                        data: Vec::new(),
                    });
                }
                Some(_) => self.running_status = Some(b),
            }
            return;
        }
        let Some(status) = self.running_status else {
            self.stray_bytes += 1;
            return;
        };
        self.pending.push(b);
        if Some(self.pending.len()) == data_len(status) {
            out.push(decode(status, &self.pending));
            self.pending.clear();
            if status >= 0xF0 {
                self.running_status = None;
            }
        }
    }
}

/// Functional form of [`ParserState::parse`].
pub fn parse_bytes(mut state: ParserState, bytes: &[u8]) -> (ParserState, Vec<MidiEvent>) {
    let events = state.parse(bytes);
    (state, events)
}
