//! Audio clips, corpus manifests and the synthetic, label-known corpus.

mod manifest;
mod synthetic;
mod wav;

pub use manifest::{load_durations, write_durations, Manifest, PhonemeDurations, UtteranceRecord};
pub use synthetic::{
    generate_synthetic_corpus, render_utterance, ConditionProfile, CorpusPlan, LabelDistribution,
    ProsodyTargets, RenderedUtterance, SyntheticSpec, SYNTH_PHONEMES,
};
pub use wav::{load_wav, read_wav_bytes, write_wav, SampleFormat};

use crate::error::{Error, Result};

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        AudioClip::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}
