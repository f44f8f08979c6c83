//! Tonal similarity between two players from sliding windows of recent notes.

use std::collections::VecDeque;
use std::fmt;

use serde::{Serialize, Serializer};

pub const DEFAULT_WINDOW: usize = 8;

/// Steps per octave; the similarity parameter moves in 1/12 increments.
pub const SEMITONES: u8 = 12;

/// The most recent notes played by one player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteWindow {
    notes: VecDeque<u8>,
    capacity: usize,
}

impl Default for NoteWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

impl NoteWindow {
    /// # Panics
    ///
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "note window capacity must be positive");
        NoteWindow {
            notes: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, note: u8) {
        if self.notes.len() == self.capacity {
            self.notes.pop_front();
        }
        self.notes.push_back(note);
    }

    pub fn notes(&self) -> impl Iterator<Item = u8> + '_ {
        self.notes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Mean note number, or `None` for an empty window.
    pub fn average(&self) -> Option<f64> {
        if self.notes.is_empty() {
            return None;
        }
        let sum: u32 = self.notes.iter().map(|&n| u32::from(n)).sum();
        Some(f64::from(sum) / self.notes.len() as f64)
    }
}

/// Similarity parameter `s = steps / 12`, always in `{0, 1/12, …, 11/12}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimilarityParam(u8);

impl SimilarityParam {
    pub const ZERO: SimilarityParam = SimilarityParam(0);

    /// Builds a parameter from a semitone count, wrapping at the octave.
    pub fn from_semitones(steps: u8) -> Self {
        SimilarityParam(steps % SEMITONES)
    }

    pub fn semitones(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / f64::from(SEMITONES)
    }
}

impl fmt::Display for SimilarityParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/12", self.0)
    }
}

impl Serialize for SimilarityParam {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

/// Quantized similarity of two average pitches: `round(|a − b| mod 12) / 12`,
/// with ties rounding up and a full octave wrapping to zero.
pub fn similarity(avg_a: f64, avg_b: f64) -> SimilarityParam {
    let delta = (avg_a - avg_b).abs();
    let reduced = delta.rem_euclid(f64::from(SEMITONES));
    let rounded = (reduced + 0.5).floor();
    // `reduced` is finite and < 12, so `rounded` fits in 0..=12.
    SimilarityParam::from_semitones(rounded as u8)
}

/// Similarity of two windows; zero while either window is empty.
pub fn current_parameter(a: &NoteWindow, b: &NoteWindow) -> SimilarityParam {
    match (a.average(), b.average()) {
        (Some(x), Some(y)) => similarity(x, y),
        _ => SimilarityParam::ZERO,
    }
}
