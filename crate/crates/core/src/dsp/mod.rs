//! Frame-level acoustic analysis and utterance-level pooling.
//!
//! Frames are laid out without padding: frame `i` covers samples
//! `[i * hop, i * hop + window)`, so a clip of `n` samples yields
//! `1 + (n - window) / hop` frames.

mod f0;
mod mel;
mod pool;

pub use f0::{extract_f0, F0Contour, F0Frame};
pub use mel::{dct, extract_mel_cepstra, hz_to_mel, idct, log_mel_energies, mel_to_hz, MelFilterbank};
pub use pool::{percentile, pool_utterance_features, UtteranceFeatureVector};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::corpus::AudioClip;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowShape {
    Hann,
    Hamming,
    Rectangular,
}

impl WindowShape {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let two_pi = std::f64::consts::TAU;
        (0..n)
            .map(|i| {
                let x = two_pi * i as f64 / n as f64;
                match self {
                    WindowShape::Hann => 0.5 - 0.5 * x.cos(),
                    WindowShape::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowShape::Rectangular => 1.0,
                }
            })
            .collect()
    }

    /// sqrt(mean(w^2)) of the periodic window (exact for n > 2).
    pub fn rms_factor(self) -> f64 {
        match self {
            WindowShape::Hann => (3.0f64 / 8.0).sqrt(),
            WindowShape::Hamming => (0.54f64 * 0.54 + 0.46 * 0.46 / 2.0).sqrt(),
            WindowShape::Rectangular => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowShape::Hann => "hann",
            WindowShape::Hamming => "hamming",
            WindowShape::Rectangular => "rectangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub window_len: f64,
    pub hop_len: f64,
    pub window: WindowShape,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub log_floor: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            window_len: 0.025,
            hop_len: 0.010,
            window: WindowShape::Hann,
            f0_min: 50.0,
            f0_max: 500.0,
            voicing_threshold: 0.30,
            n_mel_filters: 26,
            n_cepstra: 13,
            log_floor: -20.0,
        }
    }
}

impl FrameConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_len * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_len * sample_rate as f64).round() as usize
    }

    /// Number of analysis frames for a clip of `n_samples`; 0 if shorter
    /// than one window.
    pub fn n_frames(&self, n_samples: usize, sample_rate: u32) -> usize {
        let w = self.window_samples(sample_rate);
        let h = self.hop_samples(sample_rate);
        if n_samples < w || h == 0 {
            0
        } else {
            1 + (n_samples - w) / h
        }
    }

    /// Samples needed for exactly `n_frames` frames.
    pub fn samples_for_frames(&self, n_frames: usize, sample_rate: u32) -> usize {
        if n_frames == 0 {
            return 0;
        }
        (n_frames - 1) * self.hop_samples(sample_rate) + self.window_samples(sample_rate)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.hop_len > 0.0 && self.hop_len <= self.window_len) {
            return bad("need 0 < hop_len <= window_len");
        }
        if self.hop_samples(sample_rate) == 0 {
            return bad("hop shorter than one sample");
        }
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max) {
            return bad("need 0 < f0_min < f0_max");
        }
        if self.f0_max >= sample_rate as f64 / 2.0 {
            return bad("f0_max must be below the Nyquist frequency");
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold < 1.0) {
            return bad("voicing_threshold must lie in (0, 1)");
        }
        if self.n_mel_filters == 0 || self.n_cepstra == 0 || self.n_cepstra > self.n_mel_filters {
            return bad("need 1 <= n_cepstra <= n_mel_filters");
        }
        if !self.log_floor.is_finite() {
            return bad("log_floor must be finite");
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64(self.window_len)
            .f64(self.hop_len)
            .str(self.window.name())
            .f64(self.f0_min)
            .f64(self.f0_max)
            .f64(self.voicing_threshold)
            .usize(self.n_mel_filters)
            .usize(self.n_cepstra)
            .f64(self.log_floor);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let window_len = r.f64()?;
        let hop_len = r.f64()?;
        let window = match r.str()?.as_str() {
            "hann" => WindowShape::Hann,
            "hamming" => WindowShape::Hamming,
            "rectangular" => WindowShape::Rectangular,
            other => return Err(Error::Format(format!("unknown window {other:?}"))),
        };
        Ok(FrameConfig {
            window_len,
            hop_len,
            window,
            f0_min: r.f64()?,
            f0_max: r.f64()?,
            voicing_threshold: r.f64()?,
            n_mel_filters: r.usize()?,
            n_cepstra: r.usize()?,
            log_floor: r.f64()?,
        })
    }

    /// Validates the config and the clip length; returns the frame count.
    pub(crate) fn check_clip(&self, clip: &AudioClip) -> Result<usize> {
        self.validate(clip.sample_rate())?;
        let n = self.n_frames(clip.len(), clip.sample_rate());
        if n == 0 {
            return Err(Error::invalid(format!(
                "clip of {} samples is shorter than one {}-sample window",
                clip.len(),
                self.window_samples(clip.sample_rate())
            )));
        }
        Ok(n)
    }
}

/// Per-frame RMS of the tapered frame, `sqrt(mean((w * x)^2))`.
pub fn extract_energy(clip: &AudioClip, cfg: &FrameConfig) -> Result<Vec<f64>> {
    let n = cfg.check_clip(clip)?;
    let w = cfg.window_samples(clip.sample_rate());
    let h = cfg.hop_samples(clip.sample_rate());
    let window = cfg.window.coefficients(w);
    let x = clip.samples();
    Ok((0..n)
        .map(|i| {
            let frame = &x[i * h..i * h + w];
            let sum: f64 = frame.iter().zip(&window).map(|(s, c)| (s * c) * (s * c)).sum();
            (sum / w as f64).sqrt()
        })
        .collect())
}

/// Utterance RMS recovered from tapered frame energies.
pub fn rms_from_energy(energy: &[f64], cfg: &FrameConfig) -> f64 {
    if energy.is_empty() {
        return 0.0;
    }
    let ms = energy.iter().map(|e| e * e).sum::<f64>() / energy.len() as f64;
    ms.sqrt() / cfg.window.rms_factor()
}

/// All three frame analyses for one clip.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub f0: F0Contour,
    pub energy: Vec<f64>,
    pub cepstra: Vec<Vec<f64>>,
}

pub fn analyze(clip: &AudioClip, cfg: &FrameConfig) -> Result<FrameAnalysis> {
    Ok(FrameAnalysis {
        f0: extract_f0(clip, cfg)?,
        energy: extract_energy(clip, cfg)?,
        cepstra: extract_mel_cepstra(clip, cfg)?,
    })
}

pub fn utterance_features(clip: &AudioClip, cfg: &FrameConfig) -> Result<UtteranceFeatureVector> {
    let a = analyze(clip, cfg)?;
    pool_utterance_features(&a.f0, &a.energy, &a.cepstra, cfg)
}

/// Pooled features for a batch of clips, in input order.
pub fn batch_features(clips: &[AudioClip], cfg: &FrameConfig, exec: Execution) -> Result<Vec<UtteranceFeatureVector>> {
    par::try_map(exec, clips, |c| utterance_features(c, cfg))
}

/// Writes a matrix as one line per frame, values space-separated.
pub fn format_matrix(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}
