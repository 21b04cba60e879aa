//! Emotion-conditioned statistical parametric synthesizer.
//!
//! A duration network maps phoneme features to frames per phoneme and an
//! acoustic network maps frame features to static and dynamic acoustic
//! parameters. Both take the utterance's emotion vector in the first
//! [`EMOTION_DIMS`] input slots ([`EMOTION_SLICE`]). Parameter generation
//! smooths the predictions and the vocoder renders audio.

mod acoustic;
mod mlpg;
mod text;
mod vocoder;

use std::ops::Range;
use std::path::Path;

pub use acoustic::{extract_acoustic_targets, interpolate_lf0, AcousticLayout, Trajectories};
pub use mlpg::{dynamic_features, mlpg_generate, mlpg_stream, ACCEL_WINDOW, DELTA_WINDOW};
pub use text::{encode_text, frame_features, LinguisticFeatures, PhonemeInventory, DEFAULT_INVENTORY};
pub use vocoder::{vocode, vocode_raw};

use crate::codec::{self, Reader, Writer};
use crate::corpus::{load_wav, AudioClip, Manifest, PhonemeDurations};
use crate::dsp::FrameConfig;
use crate::emotion::EMOTION_DIMS;
use crate::error::{Error, Result};
use crate::nnet::{self, Dataset, TrainConfig, TrainReport, TrainedNetwork};
use crate::par::{self, Execution};
use crate::ser::{recognize_manifest, SerModel};

const MAGIC: &[u8; 4] = b"EVSY";
const VARIANCE_FLOOR: f64 = 1e-8;

/// Input slots holding the emotion vector, in both duration and acoustic
/// input rows.
pub const EMOTION_SLICE: Range<usize> = 0..EMOTION_DIMS;

pub type Emotion = [f64; EMOTION_DIMS];

fn with_emotion(emotion: &Emotion, rest: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(EMOTION_DIMS + rest.len());
    v.extend_from_slice(emotion);
    v.extend_from_slice(rest);
    v
}

/// Duration-model input: emotion, then the phoneme row.
pub fn duration_input(emotion: &Emotion, phoneme_row: &[f64]) -> Vec<f64> {
    with_emotion(emotion, phoneme_row)
}

/// Acoustic-model input: emotion, then the frame row.
pub fn acoustic_input(emotion: &Emotion, frame_row: &[f64]) -> Vec<f64> {
    with_emotion(emotion, frame_row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthModel {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub inventory: PhonemeInventory,
    pub duration: TrainedNetwork,
    pub acoustic: TrainedNetwork,
    /// Global variance of each acoustic output dimension.
    pub variances: Vec<f64>,
    pub config_checksum: String,
}

impl SynthModel {
    pub fn layout(&self) -> AcousticLayout {
        AcousticLayout::new(self.frame.n_cepstra)
    }

    pub fn duration_input_len(&self) -> usize {
        EMOTION_DIMS + self.inventory.feature_len()
    }

    pub fn acoustic_input_len(&self) -> usize {
        EMOTION_DIMS + self.inventory.feature_len() + 1
    }

    pub fn check_shapes(&self) -> Result<()> {
        let shape = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Format(format!("{what} network is {got:?}, expected {want:?}")))
            }
        };
        shape(
            "duration",
            (self.duration.input_dim(), self.duration.output_dim()),
            (self.duration_input_len(), 1),
        )?;
        shape(
            "acoustic",
            (self.acoustic.input_dim(), self.acoustic.output_dim()),
            (self.acoustic_input_len(), self.layout().dim()),
        )?;
        if self.variances.len() != self.layout().dim() {
            return Err(Error::Dimension { expected: self.layout().dim(), got: self.variances.len() });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new();
        w.u32(self.sample_rate);
        self.frame.encode(&mut w);
        self.inventory.encode(&mut w);
        w.usize(EMOTION_SLICE.start);
        self.duration.encode(&mut w);
        self.acoustic.encode(&mut w);
        w.f64s(&self.variances);
        codec::write_file(path, MAGIC, &self.config_checksum, &w.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let data = codec::read_file(path)?;
        let (config_checksum, payload) = codec::decode_container(MAGIC, &data)?;
        let mut r = Reader::new(payload);
        let sample_rate = r.u32()?;
        let frame = FrameConfig::decode(&mut r)?;
        let inventory = PhonemeInventory::decode(&mut r)?;
        if r.usize()? != EMOTION_SLICE.start {
            return Err(Error::Format("unsupported emotion slot position".into()));
        }
        let duration = TrainedNetwork::decode(&mut r)?;
        let acoustic = TrainedNetwork::decode(&mut r)?;
        let variances = r.f64s()?;
        r.finish()?;
        let model = SynthModel { sample_rate, frame, inventory, duration, acoustic, variances, config_checksum };
        model.check_shapes()?;
        Ok(model)
    }
}

fn check_emotion(emotion: &Emotion) -> Result<()> {
    if emotion.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("emotion input"))
    }
}

/// Frames per phoneme: network output rounded, at least one frame.
pub fn predict_durations(model: &SynthModel, ling: &LinguisticFeatures, emotion: &Emotion) -> Result<Vec<usize>> {
    check_emotion(emotion)?;
    ling.rows
        .iter()
        .map(|row| {
            let y = model.duration.predict(&duration_input(emotion, row))?[0];
            if !y.is_finite() {
                return Err(Error::NonFinite("duration prediction"));
            }
            Ok(y.round().max(1.0) as usize)
        })
        .collect()
}

pub fn predict_acoustics(model: &SynthModel, frame_rows: &[Vec<f64>], emotion: &Emotion) -> Result<Vec<Vec<f64>>> {
    check_emotion(emotion)?;
    frame_rows.iter().map(|row| model.acoustic.predict(&acoustic_input(emotion, row))).collect()
}

/// Intermediate and final results of one synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub durations: Vec<usize>,
    /// Predicted acoustic means, one row per frame.
    pub acoustics: Vec<Vec<f64>>,
    pub trajectories: Trajectories,
    pub clip: AudioClip,
}

pub fn synthesize_detailed(model: &SynthModel, transcript: &str, emotion: &Emotion, noise_seed: u64) -> Result<Synthesis> {
    let ling = encode_text(transcript, &model.inventory)?;
    let durations = predict_durations(model, &ling, emotion)?;
    let rows = frame_features(&ling, &durations)?;
    let acoustics = predict_acoustics(model, &rows, emotion)?;
    let mut trajectories = mlpg_generate(&acoustics, &model.variances, &model.layout())?;
    let (lo, hi) = (model.frame.f0_min.ln(), model.frame.f0_max.ln());
    trajectories.lf0.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    let clip = vocode(&trajectories, &model.frame, model.sample_rate, noise_seed)?;
    Ok(Synthesis { durations, acoustics, trajectories, clip })
}

pub fn synthesize(model: &SynthModel, transcript: &str, emotion: &Emotion, noise_seed: u64) -> Result<AudioClip> {
    synthesize_detailed(model, transcript, emotion, noise_seed).map(|s| s.clip)
}

/// Synthesizes each `(transcript, emotion)` pair, in order.
pub fn synthesize_batch(
    model: &SynthModel,
    items: &[(String, Emotion)],
    noise_seed: u64,
    exec: Execution,
) -> Result<Vec<AudioClip>> {
    par::try_map(exec, items, |(text, e)| synthesize(model, text, e, noise_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrainConfig {
    pub sample_rate: u32,
    /// Analysis settings for the acoustic targets.
    pub frame: FrameConfig,
    pub inventory: PhonemeInventory,
    pub duration_hidden: Vec<usize>,
    pub acoustic_hidden: Vec<usize>,
    pub duration_train: TrainConfig,
    pub acoustic_train: TrainConfig,
}

/// Where the per-utterance conditioning vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum EmotionSource<'a> {
    /// Manifest labels.
    Labels,
    /// Recognizer output for each utterance.
    Recognizer(&'a SerModel),
    /// Given vectors, one per manifest record.
    Vectors(&'a [Emotion]),
}

impl EmotionSource<'_> {
    pub fn resolve(&self, manifest: &Manifest, exec: Execution) -> Result<Vec<Emotion>> {
        match self {
            EmotionSource::Labels => manifest
                .records()
                .iter()
                .map(|r| {
                    r.label.map(|l| *l.values()).ok_or_else(|| {
                        Error::invalid(format!("record {} has no label", r.audio_path))
                    })
                })
                .collect(),
            EmotionSource::Recognizer(model) => {
                Ok(recognize_manifest(model, manifest, exec)?.iter().map(|e| *e.values()).collect())
            }
            EmotionSource::Vectors(v) => {
                if v.len() != manifest.len() {
                    return Err(Error::Dimension { expected: manifest.len(), got: v.len() });
                }
                Ok(v.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthTrainReport {
    pub duration: TrainReport,
    pub acoustic: TrainReport,
    pub emotions: Vec<Emotion>,
    pub n_phonemes: usize,
    pub n_frames: usize,
}

struct UtteranceData {
    phoneme_rows: Vec<Vec<f64>>,
    durations: Vec<usize>,
    frame_rows: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn utterance_data(
    manifest: &Manifest,
    idx: usize,
    durations: &PhonemeDurations,
    cfg: &SynthTrainConfig,
) -> Result<UtteranceData> {
    let rec = &manifest.records()[idx];
    if rec.transcript.trim().is_empty() {
        return Err(Error::invalid(format!("record {} has no transcript", rec.audio_path)));
    }
    let ling = encode_text(&rec.transcript, &cfg.inventory)?;
    let dur = durations
        .get(&rec.audio_path)
        .ok_or_else(|| Error::invalid(format!("no phoneme timing for {}", rec.audio_path)))?;
    if dur.len() != ling.len() {
        return Err(Error::invalid(format!(
            "{}: {} phonemes in transcript, {} in timing",
            rec.audio_path,
            ling.len(),
            dur.len()
        )));
    }
    let clip = load_wav(manifest.audio_path(rec), cfg.sample_rate)?;
    let targets = extract_acoustic_targets(&clip, &cfg.frame)?;
    let total: usize = dur.iter().sum();
    if total != targets.len() {
        return Err(Error::invalid(format!(
            "{}: timing covers {total} frames, audio has {}",
            rec.audio_path,
            targets.len()
        )));
    }
    Ok(UtteranceData {
        frame_rows: frame_features(&ling, dur)?,
        phoneme_rows: ling.rows,
        durations: dur.clone(),
        targets,
    })
}

/// Trains the duration and acoustic networks on `manifest`, whose phoneme
/// timing comes from `durations` (keyed by audio path).
pub fn train_synth(
    manifest: &Manifest,
    durations: &PhonemeDurations,
    source: EmotionSource<'_>,
    cfg: &SynthTrainConfig,
    exec: Execution,
) -> Result<(SynthModel, SynthTrainReport)> {
    cfg.frame.validate(cfg.sample_rate)?;
    if manifest.is_empty() {
        return Err(Error::invalid("synthesis corpus is empty"));
    }
    let emotions = source.resolve(manifest, exec)?;
    for e in &emotions {
        check_emotion(e)?;
    }
    let indices: Vec<usize> = (0..manifest.len()).collect();
    let data = par::try_map(exec, &indices, |&i| utterance_data(manifest, i, durations, cfg))?;

    let mut dur_set = Dataset::default();
    let mut ac_set = Dataset::default();
    for (u, e) in data.into_iter().zip(&emotions) {
        for (row, d) in u.phoneme_rows.iter().zip(&u.durations) {
            dur_set.inputs.push(duration_input(e, row));
            dur_set.targets.push(vec![*d as f64]);
        }
        for (row, target) in u.frame_rows.iter().zip(u.targets) {
            ac_set.inputs.push(acoustic_input(e, row));
            ac_set.targets.push(target);
        }
    }

    let layout = AcousticLayout::new(cfg.frame.n_cepstra);
    let n = ac_set.len() as f64;
    let variances: Vec<f64> = (0..layout.dim())
        .map(|d| {
            let mean = ac_set.targets.iter().map(|t| t[d]).sum::<f64>() / n;
            let var = ac_set.targets.iter().map(|t| (t[d] - mean).powi(2)).sum::<f64>() / n;
            var.max(VARIANCE_FLOOR)
        })
        .collect();

    let feat = cfg.inventory.feature_len();
    let (duration, dur_report) = nnet::train(
        nnet::mlp(EMOTION_DIMS + feat, &cfg.duration_hidden, 1),
        &dur_set,
        &cfg.duration_train,
        exec,
    )?;
    let (acoustic, ac_report) = nnet::train(
        nnet::mlp(EMOTION_DIMS + feat + 1, &cfg.acoustic_hidden, layout.dim()),
        &ac_set,
        &cfg.acoustic_train,
        exec,
    )?;
    let model = SynthModel {
        sample_rate: cfg.sample_rate,
        frame: cfg.frame,
        inventory: cfg.inventory.clone(),
        duration,
        acoustic,
        variances,
        config_checksum: String::new(),
    };
    let report = SynthTrainReport {
        duration: dur_report,
        acoustic: ac_report,
        emotions,
        n_phonemes: dur_set.len(),
        n_frames: ac_set.len(),
    };
    Ok((model, report))
}
