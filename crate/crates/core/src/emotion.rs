//! The six-dimensional emotion vector.

use std::fmt;

use crate::error::{Error, Result};

pub const EMOTION_DIMS: usize = 6;

/// Dimension names in canonical order.
pub const EMOTION_NAMES: [&str; EMOTION_DIMS] = [
    "pleasantness",
    "arousal",
    "dominance",
    "credibility",
    "interest",
    "positivity",
];

pub const SCALE_MIN: f64 = 1.0;
pub const SCALE_MAX: f64 = 7.0;
pub const SCALE_MID: f64 = 4.0;

pub const PLEASANTNESS: usize = 0;
pub const AROUSAL: usize = 1;
pub const DOMINANCE: usize = 2;
pub const CREDIBILITY: usize = 3;
pub const INTEREST: usize = 4;
pub const POSITIVITY: usize = 5;

/// An emotion rating on the 1..=7 scale for each of the six dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionVector([f64; EMOTION_DIMS]);

impl EmotionVector {
    pub fn new(values: [f64; EMOTION_DIMS]) -> Result<Self> {
        for (name, v) in EMOTION_NAMES.iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::NonFinite("emotion vector"));
            }
            if !(SCALE_MIN..=SCALE_MAX).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} = {v} outside [{SCALE_MIN}, {SCALE_MAX}]"
                )));
            }
        }
        Ok(EmotionVector(values))
    }

    /// Clamps each component into [1, 7]. Non-finite components are rejected.
    pub fn clamped(values: [f64; EMOTION_DIMS]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("emotion vector"));
        }
        Ok(EmotionVector(values.map(|v| v.clamp(SCALE_MIN, SCALE_MAX))))
    }

    pub fn neutral() -> Self {
        EmotionVector([SCALE_MID; EMOTION_DIMS])
    }

    pub fn values(&self) -> &[f64; EMOTION_DIMS] {
        &self.0
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.0[dim]
    }

    pub fn arousal(&self) -> f64 {
        self.0[AROUSAL]
    }
}

impl From<EmotionVector> for [f64; EMOTION_DIMS] {
    fn from(v: EmotionVector) -> Self {
        v.0
    }
}

/// Four fractional digits, comma-separated, canonical order.
impl fmt::Display for EmotionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_vector(&self.0, 4))
    }
}

pub fn format_vector(v: &[f64], decimals: usize) -> String {
    v.iter()
        .map(|x| format!("{x:.decimals$}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses six comma-separated decimals (no range check).
pub fn parse_vector(s: &str) -> Result<[f64; EMOTION_DIMS]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != EMOTION_DIMS {
        return Err(Error::Dimension {
            expected: EMOTION_DIMS,
            got: parts.len(),
        });
    }
    let mut out = [0.0; EMOTION_DIMS];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse::<f64>()
            .map_err(|e| Error::invalid(format!("bad number {p:?}: {e}")))?;
        if !slot.is_finite() {
            return Err(Error::NonFinite("emotion vector"));
        }
    }
    Ok(out)
}
