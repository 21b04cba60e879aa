//! Acoustic parameter layout and target extraction.
//!
//! One frame is `[statics | deltas | delta-deltas | voicing]`, where the
//! statics are `n_cepstra` mel cepstra followed by log-F0. With 25 cepstra
//! that is `26 * 3 + 1 = 79` values.

use std::fmt::Write as _;

use super::mlpg::dynamic_features;
use crate::corpus::AudioClip;
use crate::dsp::{extract_f0, extract_mel_cepstra, FrameConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcousticLayout {
    pub n_cepstra: usize,
}

impl AcousticLayout {
    pub fn new(n_cepstra: usize) -> Self {
        AcousticLayout { n_cepstra }
    }

    /// Continuous streams: cepstra plus log-F0.
    pub fn static_dim(&self) -> usize {
        self.n_cepstra + 1
    }

    pub fn lf0_index(&self) -> usize {
        self.n_cepstra
    }

    pub fn vuv_index(&self) -> usize {
        3 * self.static_dim()
    }

    pub fn dim(&self) -> usize {
        3 * self.static_dim() + 1
    }

    /// Full rows from per-frame statics and voicing flags.
    pub fn assemble(&self, statics: &[Vec<f64>], voicing: &[f64]) -> Result<Vec<Vec<f64>>> {
        let s_dim = self.static_dim();
        if voicing.len() != statics.len() {
            return Err(Error::Dimension { expected: statics.len(), got: voicing.len() });
        }
        if let Some(r) = statics.iter().find(|r| r.len() != s_dim) {
            return Err(Error::Dimension { expected: s_dim, got: r.len() });
        }
        let mut rows: Vec<Vec<f64>> = statics
            .iter()
            .map(|r| {
                let mut row = vec![0.0; self.dim()];
                row[..s_dim].copy_from_slice(r);
                row
            })
            .collect();
        for s in 0..s_dim {
            let col: Vec<f64> = statics.iter().map(|r| r[s]).collect();
            let (d, a) = dynamic_features(&col);
            for (t, row) in rows.iter_mut().enumerate() {
                row[s_dim + s] = d[t];
                row[2 * s_dim + s] = a[t];
            }
        }
        for (row, &v) in rows.iter_mut().zip(voicing) {
            row[self.vuv_index()] = v;
        }
        Ok(rows)
    }
}

/// Generated static parameters, one entry per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub cepstra: Vec<Vec<f64>>,
    /// Natural-log F0; meaningful only where `voiced`.
    pub lf0: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl Trajectories {
    pub fn from_statics(statics: &[Vec<f64>], voiced: Vec<bool>, layout: &AcousticLayout) -> Self {
        Trajectories {
            cepstra: statics.iter().map(|r| r[..layout.n_cepstra].to_vec()).collect(),
            lf0: statics.iter().map(|r| r[layout.lf0_index()]).collect(),
            voiced,
        }
    }

    pub fn len(&self) -> usize {
        self.lf0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lf0.is_empty()
    }

    pub fn check_aligned(&self) -> Result<()> {
        let n = self.lf0.len();
        if self.cepstra.len() != n || self.voiced.len() != n {
            return Err(Error::invalid(format!(
                "misaligned streams: {} cepstral, {} log-F0, {} voicing frames",
                self.cepstra.len(),
                n,
                self.voiced.len()
            )));
        }
        if let Some(first) = self.cepstra.first() {
            if self.cepstra.iter().any(|r| r.len() != first.len()) {
                return Err(Error::invalid("cepstral rows differ in length"));
            }
        }
        Ok(())
    }

    /// Text dump: one line per frame, cepstra then log-F0 then voicing
    /// (0/1), space-separated with 6 decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in 0..self.len() {
            for c in &self.cepstra[t] {
                let _ = write!(s, "{c:.6} ");
            }
            let _ = writeln!(s, "{:.6} {}", self.lf0[t], u8::from(self.voiced[t]));
        }
        s
    }
}

/// Fills unvoiced gaps by linear interpolation in the log domain and holds
/// the end values; all-unvoiced input becomes `fallback`.
pub fn interpolate_lf0(f0: &[Option<f64>], fallback: f64) -> Vec<f64> {
    let voiced: Vec<(usize, f64)> = f0
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|hz| (i, hz.ln())))
        .collect();
    if voiced.is_empty() {
        return vec![fallback; f0.len()];
    }
    let mut out = vec![0.0; f0.len()];
    let mut k = 0;
    for (t, slot) in out.iter_mut().enumerate() {
        while k + 1 < voiced.len() && voiced[k + 1].0 <= t {
            k += 1;
        }
        let (i0, v0) = voiced[k];
        *slot = if t <= i0 || k + 1 == voiced.len() {
            v0
        } else {
            let (i1, v1) = voiced[k + 1];
            v0 + (v1 - v0) * (t - i0) as f64 / (i1 - i0) as f64
        };
    }
    out
}

/// Training targets for one utterance: rows in the layout of
/// [`AcousticLayout`], one per analysis frame.
pub fn extract_acoustic_targets(clip: &AudioClip, frame: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    let cep = extract_mel_cepstra(clip, frame)?;
    let f0 = extract_f0(clip, frame)?;
    let raw: Vec<Option<f64>> = f0.frames.iter().map(|f| f.f0).collect();
    let lf0 = interpolate_lf0(&raw, frame.f0_min.ln());
    let statics: Vec<Vec<f64>> = cep
        .into_iter()
        .zip(&lf0)
        .map(|(mut row, &l)| {
            row.push(l);
            row
        })
        .collect();
    let voicing: Vec<f64> = raw.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect();
    AcousticLayout::new(frame.n_cepstra).assemble(&statics, &voicing)
}
