//! Emotion-imitating speech synthesis.
//!
//! The crate recognizes six-dimensional emotion vectors from speech, derives
//! per-condition emotion statistics from a set of target speakers, maps those
//! statistics onto the emotion distribution of a synthesizer's training corpus,
//! and drives a small feed-forward statistical parametric synthesizer with the
//! resulting vectors.
//!
//! Module map:
//!
//! * [`corpus`]: WAV I/O, corpus manifests and the label-known synthetic corpus.
//! * [`dsp`]: frame analysis (F0, energy, mel-cepstra) and utterance pooling.
//! * [`nnet`]: feed-forward networks, backpropagation, SGD, gradient checking.
//! * [`ser`]: the emotion recognizer built on pooled features.
//! * [`emostats`]: condition means, corpus mean, variance matching and the
//!   affine transform that produces synthesizer inputs.
//! * [`synth`]: linguistic encoding, duration/acoustic models, parameter
//!   generation and the source-filter vocoder.
//! * [`pipeline`]: the end-to-end baseline-vs-proposed experiment.

pub mod codec;
pub mod config;
pub mod corpus;
pub mod dsp;
pub mod emostats;
pub mod emotion;
mod error;
pub mod nnet;
pub mod par;
pub mod pipeline;
pub mod ser;
pub mod stats;
pub mod synth;

pub use config::PipelineConfig;
pub use corpus::{AudioClip, Manifest, UtteranceRecord};
pub use emotion::{EmotionVector, EMOTION_DIMS, EMOTION_NAMES};
pub use error::{Error, Result};
pub use par::Execution;
