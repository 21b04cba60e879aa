//! Speech emotion recognition: pooled utterance features regressed onto
//! six-dimensional emotion ratings by a feed-forward network.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{self, Reader, Writer};
use crate::corpus::{load_wav, AudioClip, Manifest};
use crate::dsp::{self, FrameConfig, UtteranceFeatureVector};
use crate::emotion::{EmotionVector, EMOTION_DIMS};
use crate::error::{Error, Result};
use crate::nnet::{self, Dataset, TrainConfig, TrainedNetwork};
use crate::par::{self, Execution};

pub use crate::emotion::EMOTION_NAMES;

const MAGIC: &[u8; 4] = b"EVSR";
const MIN_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SerConfig {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Share of records held out for the reported MAE.
    pub heldout_fraction: f64,
}

impl Default for SerConfig {
    fn default() -> Self {
        SerConfig {
            sample_rate: 16_000,
            frame: FrameConfig::default(),
            hidden: vec![64, 64],
            train: TrainConfig::default(),
            heldout_fraction: 0.2,
        }
    }
}

/// Mean absolute error per dimension and pooled over all dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeReport {
    pub per_dim: [f64; EMOTION_DIMS],
    pub overall: f64,
    pub count: usize,
}

impl MaeReport {
    pub fn from_pairs(predictions: &[[f64; EMOTION_DIMS]], labels: &[[f64; EMOTION_DIMS]]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::invalid("no utterances to evaluate"));
        }
        if predictions.len() != labels.len() {
            return Err(Error::Dimension { expected: labels.len(), got: predictions.len() });
        }
        let mut per_dim = [0.0; EMOTION_DIMS];
        for (p, l) in predictions.iter().zip(labels) {
            for d in 0..EMOTION_DIMS {
                per_dim[d] += (p[d] - l[d]).abs();
            }
        }
        let n = predictions.len() as f64;
        per_dim.iter_mut().for_each(|v| *v /= n);
        Ok(MaeReport {
            per_dim,
            overall: per_dim.iter().sum::<f64>() / EMOTION_DIMS as f64,
            count: predictions.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerModel {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub network: TrainedNetwork,
    pub corpus_id: String,
    pub heldout: Option<MaeReport>,
    pub config_checksum: String,
}

impl SerModel {
    pub fn feature_len(&self) -> usize {
        UtteranceFeatureVector::len_for(self.frame.n_cepstra)
    }

    /// Raw network output in original label units, before clamping.
    pub fn predict_raw(&self, features: &UtteranceFeatureVector) -> Result<[f64; EMOTION_DIMS]> {
        let out = self.network.predict(features.as_slice())?;
        out.try_into()
            .map_err(|v: Vec<f64>| Error::Dimension { expected: EMOTION_DIMS, got: v.len() })
    }

    pub fn predict(&self, features: &UtteranceFeatureVector) -> Result<EmotionVector> {
        EmotionVector::clamped(self.predict_raw(features)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new();
        w.u32(self.sample_rate);
        self.frame.encode(&mut w);
        w.str(&self.corpus_id);
        match &self.heldout {
            Some(m) => {
                w.u8(1).f64s(&m.per_dim).f64(m.overall).usize(m.count);
            }
            None => {
                w.u8(0);
            }
        }
        self.network.encode(&mut w);
        codec::write_file(path, MAGIC, &self.config_checksum, &w.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let data = codec::read_file(path)?;
        let (config_checksum, payload) = codec::decode_container(MAGIC, &data)?;
        let mut r = Reader::new(payload);
        let sample_rate = r.u32()?;
        let frame = FrameConfig::decode(&mut r)?;
        let corpus_id = r.str()?;
        let heldout = match r.u8()? {
            0 => None,
            _ => {
                let per_dim: [f64; EMOTION_DIMS] = r
                    .f64s()?
                    .try_into()
                    .map_err(|_| Error::Format("held-out MAE needs six values".into()))?;
                Some(MaeReport { per_dim, overall: r.f64()?, count: r.usize()? })
            }
        };
        let network = TrainedNetwork::decode(&mut r)?;
        r.finish()?;
        let model = SerModel { sample_rate, frame, network, corpus_id, heldout, config_checksum };
        if model.network.input_dim() != model.feature_len() || model.network.output_dim() != EMOTION_DIMS {
            return Err(Error::Format("network shape does not match the frame config".into()));
        }
        Ok(model)
    }
}

/// Loads every manifest clip and pools its features, in record order.
pub fn manifest_features(
    manifest: &Manifest,
    sample_rate: u32,
    frame: &FrameConfig,
    exec: Execution,
) -> Result<Vec<UtteranceFeatureVector>> {
    par::try_map(exec, manifest.records(), |r| {
        let clip = load_wav(manifest.audio_path(r), sample_rate)?;
        dsp::utterance_features(&clip, frame)
    })
}

fn labels_of(manifest: &Manifest) -> Result<Vec<[f64; EMOTION_DIMS]>> {
    manifest
        .records()
        .iter()
        .map(|r| {
            r.label.map(|l| *l.values()).ok_or_else(|| {
                Error::invalid(format!(
                    "record {} ({} / {}) has no label",
                    r.audio_path, r.speaker_id, r.condition_id
                ))
            })
        })
        .collect()
}

/// Trains on pooled features and labels, holding out a seeded share of the
/// samples for the reported MAE.
pub fn train_ser_on_features(
    features: &[UtteranceFeatureVector],
    labels: &[[f64; EMOTION_DIMS]],
    weights: Option<Vec<f64>>,
    cfg: &SerConfig,
    corpus_id: &str,
    exec: Execution,
) -> Result<SerModel> {
    cfg.frame.validate(cfg.sample_rate)?;
    if features.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), got: features.len() });
    }
    if features.len() < MIN_RECORDS {
        return Err(Error::invalid(format!(
            "need at least {MIN_RECORDS} labelled utterances, got {}",
            features.len()
        )));
    }
    if !(cfg.heldout_fraction >= 0.0 && cfg.heldout_fraction < 1.0) {
        return Err(Error::Config("heldout_fraction must lie in [0, 1)".into()));
    }
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.train.rng_seed));
    let n_held = (cfg.heldout_fraction * n as f64).round() as usize;
    if cfg.heldout_fraction > 0.0 && (n_held == 0 || n_held >= n) {
        return Err(Error::invalid("held-out split is degenerate"));
    }
    let held = order.split_off(n - n_held);
    order.sort_unstable();
    let train_idx = order;

    let data = Dataset {
        inputs: train_idx.iter().map(|&i| features[i].0.clone()).collect(),
        targets: train_idx.iter().map(|&i| labels[i].to_vec()).collect(),
        weights: weights.map(|w| train_idx.iter().map(|&i| w[i]).collect()),
    };
    let feature_len = UtteranceFeatureVector::len_for(cfg.frame.n_cepstra);
    let specs = nnet::mlp(feature_len, &cfg.hidden, EMOTION_DIMS);
    let (network, _) = nnet::train(specs, &data, &cfg.train, exec)?;

    let mut model = SerModel {
        sample_rate: cfg.sample_rate,
        frame: cfg.frame,
        network,
        corpus_id: corpus_id.to_string(),
        heldout: None,
        config_checksum: String::new(),
    };
    if !held.is_empty() {
        let preds = held
            .iter()
            .map(|&i| model.predict(&features[i]).map(|e| *e.values()))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<_> = held.iter().map(|&i| labels[i]).collect();
        model.heldout = Some(MaeReport::from_pairs(&preds, &truth)?);
    }
    Ok(model)
}

pub fn train_ser(manifest: &Manifest, cfg: &SerConfig, exec: Execution) -> Result<SerModel> {
    let labels = labels_of(manifest)?;
    if manifest.len() < MIN_RECORDS {
        return Err(Error::invalid(format!(
            "need at least {MIN_RECORDS} labelled utterances, got {}",
            manifest.len()
        )));
    }
    let features = manifest_features(manifest, cfg.sample_rate, &cfg.frame, exec)?;
    let weights = manifest
        .records()
        .iter()
        .any(|r| r.weight.is_some())
        .then(|| manifest.records().iter().map(|r| r.weight_or_default()).collect());
    let corpus_id = manifest.base_dir().file_name().map_or_else(
        || "corpus".to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    train_ser_on_features(&features, &labels, weights, cfg, &corpus_id, exec)
}

pub fn recognize(model: &SerModel, clip: &AudioClip) -> Result<EmotionVector> {
    if clip.sample_rate() != model.sample_rate {
        return Err(Error::invalid(format!(
            "clip is {} Hz, model expects {} Hz",
            clip.sample_rate(),
            model.sample_rate
        )));
    }
    model.predict(&dsp::utterance_features(clip, &model.frame)?)
}

/// Recognizes every record of a manifest, in record order.
pub fn recognize_manifest(model: &SerModel, manifest: &Manifest, exec: Execution) -> Result<Vec<EmotionVector>> {
    manifest_features(manifest, model.sample_rate, &model.frame, exec)?
        .iter()
        .map(|f| model.predict(f))
        .collect()
}

pub fn evaluate_mae(model: &SerModel, manifest: &Manifest, exec: Execution) -> Result<MaeReport> {
    let labels = labels_of(manifest)?;
    let preds: Vec<[f64; EMOTION_DIMS]> = recognize_manifest(model, manifest, exec)?
        .iter()
        .map(|e| *e.values())
        .collect();
    MaeReport::from_pairs(&preds, &labels)
}
