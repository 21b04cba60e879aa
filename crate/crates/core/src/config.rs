//! Flat key/value pipeline configuration.
//!
//! Every artifact written by the pipeline stores [`PipelineConfig::checksum`]
//! so that models and reports produced under different settings are not
//! silently combined.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{FrameConfig, WindowShape};
use crate::error::{Error, Result};
use crate::nnet::TrainConfig;
use crate::ser::SerConfig;
use crate::synth::{PhonemeInventory, SynthTrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub window_len: f64,
    pub hop_len: f64,
    pub window: WindowShape,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub log_floor: f64,

    pub ser_hidden_layers: usize,
    pub ser_hidden_units: usize,
    pub ser_learning_rate: f64,
    pub ser_batch_size: usize,
    pub ser_epochs: usize,
    pub ser_heldout_fraction: f64,

    /// Mel bands and cepstral order used for the synthesizer's acoustic stream.
    pub synth_n_mel_filters: usize,
    pub synth_n_cepstra: usize,
    pub synth_hidden_layers: usize,
    pub synth_hidden_units: usize,
    pub synth_learning_rate: f64,
    pub synth_batch_size: usize,
    pub synth_epochs: usize,
    pub duration_hidden_units: usize,
    pub duration_epochs: usize,

    pub alpha: f64,
    pub clamp_transformed: bool,

    pub seed: u64,
    pub noise_seed: u64,

    pub ser_speakers: usize,
    pub ser_utterances_per_cell: usize,
    pub actor_utterances: usize,
    pub target_speakers: usize,
    pub target_utterances_per_cell: usize,
    pub sweep_utterances: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let frame = FrameConfig::default();
        PipelineConfig {
            sample_rate: 16_000,
            window_len: frame.window_len,
            hop_len: frame.hop_len,
            window: frame.window,
            f0_min: frame.f0_min,
            f0_max: frame.f0_max,
            voicing_threshold: frame.voicing_threshold,
            n_mel_filters: frame.n_mel_filters,
            n_cepstra: frame.n_cepstra,
            log_floor: frame.log_floor,

            ser_hidden_layers: 2,
            ser_hidden_units: 64,
            ser_learning_rate: 0.01,
            ser_batch_size: 16,
            ser_epochs: 150,
            ser_heldout_fraction: 0.2,

            synth_n_mel_filters: 40,
            synth_n_cepstra: 25,
            synth_hidden_layers: 2,
            synth_hidden_units: 64,
            synth_learning_rate: 0.02,
            synth_batch_size: 32,
            synth_epochs: 20,
            duration_hidden_units: 32,
            duration_epochs: 150,

            alpha: 1.0,
            clamp_transformed: false,

            seed: 42,
            noise_seed: 7,

            ser_speakers: 3,
            ser_utterances_per_cell: 25,
            actor_utterances: 120,
            target_speakers: 5,
            target_utterances_per_cell: 4,
            sweep_utterances: 20,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical key = value rendering, all keys present.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`], with `alpha`
    /// zeroed: alpha only scales the transform output, so one stats report
    /// can be re-transformed under any alpha.
    pub fn checksum(&self) -> String {
        let canonical = PipelineConfig { alpha: 0.0, ..self.clone() };
        let digest = Sha256::digest(canonical.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Errors unless `found` was produced under this config.
    pub fn check_artifact(&self, found: &str) -> Result<()> {
        let expected = self.checksum();
        if found == expected {
            Ok(())
        } else {
            Err(Error::ChecksumMismatch { expected, found: found.to_string() })
        }
    }

    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            window_len: self.window_len,
            hop_len: self.hop_len,
            window: self.window,
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            voicing_threshold: self.voicing_threshold,
            n_mel_filters: self.n_mel_filters,
            n_cepstra: self.n_cepstra,
            log_floor: self.log_floor,
        }
    }

    /// Analysis settings for the synthesizer's acoustic targets.
    pub fn synth_frame(&self) -> FrameConfig {
        FrameConfig {
            n_mel_filters: self.synth_n_mel_filters,
            n_cepstra: self.synth_n_cepstra,
            ..self.frame()
        }
    }

    pub fn ser_config(&self) -> SerConfig {
        SerConfig {
            sample_rate: self.sample_rate,
            frame: self.frame(),
            hidden: vec![self.ser_hidden_units; self.ser_hidden_layers],
            train: TrainConfig {
                learning_rate: self.ser_learning_rate,
                batch_size: self.ser_batch_size,
                epochs: self.ser_epochs,
                rng_seed: self.seed,
                ..TrainConfig::default()
            },
            heldout_fraction: self.ser_heldout_fraction,
        }
    }

    pub fn synth_train_config(&self) -> SynthTrainConfig {
        let train = |epochs| TrainConfig {
            learning_rate: self.synth_learning_rate,
            batch_size: self.synth_batch_size,
            epochs,
            rng_seed: self.seed,
            ..TrainConfig::default()
        };
        SynthTrainConfig {
            sample_rate: self.sample_rate,
            frame: self.synth_frame(),
            inventory: PhonemeInventory::default(),
            duration_hidden: vec![self.duration_hidden_units],
            acoustic_hidden: vec![self.synth_hidden_units; self.synth_hidden_layers],
            duration_train: train(self.duration_epochs),
            acoustic_train: train(self.synth_epochs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frame().validate(self.sample_rate)?;
        self.synth_frame().validate(self.sample_rate)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be finite and >= 0".into()));
        }
        for (name, v) in [
            ("ser_hidden_units", self.ser_hidden_units),
            ("ser_batch_size", self.ser_batch_size),
            ("synth_hidden_units", self.synth_hidden_units),
            ("synth_batch_size", self.synth_batch_size),
            ("duration_hidden_units", self.duration_hidden_units),
            ("ser_speakers", self.ser_speakers),
            ("ser_utterances_per_cell", self.ser_utterances_per_cell),
            ("actor_utterances", self.actor_utterances),
            ("target_speakers", self.target_speakers),
            ("target_utterances_per_cell", self.target_utterances_per_cell),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [
            ("ser_learning_rate", self.ser_learning_rate),
            ("synth_learning_rate", self.synth_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.ser_heldout_fraction) {
            return Err(Error::Config("ser_heldout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = PipelineConfig { alpha: 1.1, seed: 9, ..PipelineConfig::default() };
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.checksum(), cfg.checksum());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = PipelineConfig::parse("alpha = 1.1\nseed = 3\n").unwrap();
        assert_eq!(cfg.alpha, 1.1);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.sample_rate, 16_000);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(PipelineConfig::parse("alpah = 1.0").is_err());
        assert!(PipelineConfig::parse("alpha = -1.0").is_err());
        assert!(PipelineConfig::parse("f0_min = 600.0").is_err());
    }

    #[test]
    fn checksum_tracks_content() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { seed: 1, ..a.clone() };
        assert_eq!(a.checksum().len(), 16);
        assert_eq!(a.checksum(), PipelineConfig { alpha: 1.1, ..a.clone() }.checksum());
        assert_ne!(a.checksum(), b.checksum());
        assert!(a.check_artifact(&a.checksum()).is_ok());
        assert!(matches!(a.check_artifact(&b.checksum()), Err(Error::ChecksumMismatch { .. })));
    }
}
