//! Desk-scale linguistic front end: transcripts are space-separated phoneme
//! symbols from a small fixed inventory.

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const DEFAULT_INVENTORY: [&str; 11] = ["sil", "a", "i", "u", "e", "o", "m", "n", "r", "w", "y"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        PhonemeInventory::new(&DEFAULT_INVENTORY).expect("default inventory is valid")
    }
}

impl PhonemeInventory {
    pub fn new<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        let symbols: Vec<String> = symbols.iter().map(|s| s.as_ref().to_string()).collect();
        if symbols.is_empty() {
            return Err(Error::invalid("phoneme inventory is empty"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("bad phoneme symbol {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::invalid(format!("duplicate phoneme symbol {s:?}")));
            }
        }
        Ok(PhonemeInventory { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    /// Length of one phoneme-level feature vector: identity, previous and
    /// next one-hots, position in utterance, utterance length.
    pub fn feature_len(&self) -> usize {
        3 * self.len() + 2
    }

    pub fn encode(&self, w: &mut Writer) {
        w.usize(self.symbols.len());
        for s in &self.symbols {
            w.str(s);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.usize()?;
        let symbols = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        Self::new(&symbols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticFeatures {
    pub phonemes: Vec<usize>,
    /// One row of [`PhonemeInventory::feature_len`] values per phoneme.
    pub rows: Vec<Vec<f64>>,
}

impl LinguisticFeatures {
    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }
}

pub fn encode_text(transcript: &str, inventory: &PhonemeInventory) -> Result<LinguisticFeatures> {
    let phonemes = transcript
        .split_whitespace()
        .map(|tok| {
            inventory
                .index_of(tok)
                .ok_or_else(|| Error::invalid(format!("unknown phoneme {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if phonemes.is_empty() {
        return Err(Error::invalid("empty transcript"));
    }
    let n = phonemes.len();
    let k = inventory.len();
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![0.0; inventory.feature_len()];
            row[phonemes[i]] = 1.0;
            if i > 0 {
                row[k + phonemes[i - 1]] = 1.0;
            }
            if i + 1 < n {
                row[2 * k + phonemes[i + 1]] = 1.0;
            }
            row[3 * k] = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            row[3 * k + 1] = n as f64;
            row
        })
        .collect();
    Ok(LinguisticFeatures { phonemes, rows })
}

/// Frame-level rows: each phoneme row repeated for its frames, followed by
/// the frame's position within the phoneme, `(j + 0.5) / d`.
pub fn frame_features(ling: &LinguisticFeatures, durations: &[usize]) -> Result<Vec<Vec<f64>>> {
    if durations.len() != ling.len() {
        return Err(Error::Dimension { expected: ling.len(), got: durations.len() });
    }
    let mut out = Vec::with_capacity(durations.iter().sum());
    for (row, &d) in ling.rows.iter().zip(durations) {
        for j in 0..d {
            let mut f = Vec::with_capacity(row.len() + 1);
            f.extend_from_slice(row);
            f.push((j as f64 + 0.5) / d as f64);
            out.push(f);
        }
    }
    Ok(out)
}
