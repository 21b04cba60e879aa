//! Label-known synthetic speech.
//!
//! Every utterance is rendered from its emotion vector through a fixed
//! prosody mapping, so analysis tools and the recognizer can be checked
//! against known ground truth:
//!
//! | dimension    | acoustic correlate                                  |
//! |--------------|-----------------------------------------------------|
//! | arousal      | mean F0 = 120 + 15 (a - 4) Hz                       |
//! | dominance    | RMS = 0.10 (1 + 0.10 (d - 4))                       |
//! | interest     | duration = 1.0 + 0.05 (i - 4) s                     |
//! | pleasantness | spectral tilt = -6 + (p - 4) dB/octave              |
//! | credibility  | F0 slope = 40 + 16 (c - 4) Hz/s (rising contour)    |
//! | positivity   | period jitter = 0.015 + 0.005 (q - 4) (relative sd) |
//!
//! The voice is an additive harmonic source shaped by three formant
//! resonances per phoneme; the speaker changes only the formant scale.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::write_durations;
use super::{write_wav, AudioClip, Manifest, SampleFormat, UtteranceRecord};
use crate::dsp::FrameConfig;
use crate::emotion::{
    EmotionVector, AROUSAL, CREDIBILITY, DOMINANCE, EMOTION_DIMS, INTEREST, PLEASANTNESS,
    POSITIVITY,
};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Phonemes the generator can voice, with (F1, F2, F3) in Hz.
pub const SYNTH_PHONEMES: [(&str, [f64; 3]); 10] = [
    ("a", [800.0, 1200.0, 2500.0]),
    ("i", [300.0, 2300.0, 3000.0]),
    ("u", [350.0, 1300.0, 2400.0]),
    ("e", [500.0, 1900.0, 2600.0]),
    ("o", [500.0, 900.0, 2500.0]),
    ("m", [250.0, 1100.0, 2200.0]),
    ("n", [250.0, 1500.0, 2500.0]),
    ("r", [400.0, 1300.0, 1800.0]),
    ("w", [320.0, 800.0, 2300.0]),
    ("y", [280.0, 2100.0, 2900.0]),
];

const NEUTRAL_F0: f64 = 120.0;
const F0_PER_AROUSAL: f64 = 15.0;
const RMS_BASE: f64 = 0.10;
const RMS_PER_DOMINANCE: f64 = 0.10;
const DURATION_BASE: f64 = 1.0;
const DURATION_PER_INTEREST: f64 = 0.05;
const TILT_BASE: f64 = -6.0;
const TILT_PER_PLEASANTNESS: f64 = 1.0;
const SLOPE_BASE: f64 = 40.0;
const SLOPE_PER_CREDIBILITY: f64 = 16.0;
const JITTER_BASE: f64 = 0.015;
const JITTER_PER_POSITIVITY: f64 = 0.005;

const TILT_REFERENCE_HZ: f64 = 100.0;
const FADE_SECS: f64 = 0.01;
const AMP_BLOCK: usize = 16;
const LABEL_LO: f64 = 2.0;
const LABEL_HI: f64 = 6.0;

/// Acoustic targets implied by an emotion vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodyTargets {
    pub f0_mean: f64,
    pub rms: f64,
    pub duration: f64,
    pub tilt_db_per_octave: f64,
    pub f0_slope: f64,
    pub jitter: f64,
}

impl ProsodyTargets {
    pub fn from_emotion(e: &EmotionVector) -> Self {
        let d = |dim: usize| e.get(dim) - 4.0;
        ProsodyTargets {
            f0_mean: NEUTRAL_F0 + F0_PER_AROUSAL * d(AROUSAL),
            rms: RMS_BASE * (1.0 + RMS_PER_DOMINANCE * d(DOMINANCE)),
            duration: DURATION_BASE + DURATION_PER_INTEREST * d(INTEREST),
            tilt_db_per_octave: TILT_BASE + TILT_PER_PLEASANTNESS * d(PLEASANTNESS),
            f0_slope: (SLOPE_BASE + SLOPE_PER_CREDIBILITY * d(CREDIBILITY)).max(0.0),
            jitter: (JITTER_BASE + JITTER_PER_POSITIVITY * d(POSITIVITY)).max(0.0),
        }
    }
}

/// Everything needed to render one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub emotion: EmotionVector,
    /// F0 at the neutral arousal point.
    pub base_f0: f64,
    pub duration: f64,
    pub phonemes: Vec<String>,
    /// Multiplies every formant frequency (speaker vocal tract).
    pub formant_scale: f64,
    pub rng_seed: u64,
}

impl SyntheticSpec {
    pub fn new(emotion: EmotionVector, phonemes: Vec<String>, formant_scale: f64, rng_seed: u64) -> Self {
        let targets = ProsodyTargets::from_emotion(&emotion);
        SyntheticSpec {
            emotion,
            base_f0: NEUTRAL_F0,
            duration: targets.duration,
            phonemes,
            formant_scale,
            rng_seed,
        }
    }

    pub fn targets(&self) -> ProsodyTargets {
        let mut t = ProsodyTargets::from_emotion(&self.emotion);
        t.f0_mean += self.base_f0 - NEUTRAL_F0;
        t.duration = self.duration;
        t
    }
}

#[derive(Debug, Clone)]
pub struct RenderedUtterance {
    pub clip: AudioClip,
    /// Analysis frames per phoneme; sums to the clip's frame count.
    pub phoneme_frames: Vec<usize>,
}

fn formants_of(phoneme: &str) -> Result<[f64; 3]> {
    SYNTH_PHONEMES
        .iter()
        .find(|(p, _)| *p == phoneme)
        .map(|(_, f)| *f)
        .ok_or_else(|| Error::invalid(format!("generator cannot voice phoneme {phoneme:?}")))
}

fn is_vowel(phoneme: &str) -> bool {
    matches!(phoneme, "a" | "i" | "u" | "e" | "o")
}

/// Largest-remainder split of `total` frames by weight, each share >= 1.
fn allocate_frames(total: usize, weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    debug_assert!(total >= n);
    let spare = (total - n) as f64;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| spare * w / sum).collect();
    let mut frames: Vec<usize> = exact.iter().map(|x| 1 + x.floor() as usize).collect();
    let mut left = total - frames.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        frames[i] += 1;
        left -= 1;
    }
    frames
}

/// Magnitude of a cascade of second-order resonances at `f`.
fn formant_gain(f: f64, formants: &[f64; 3], scale: f64) -> f64 {
    formants
        .iter()
        .map(|&fc| {
            let fc = fc * scale;
            let bw = 60.0 + 0.06 * fc;
            fc * fc / ((fc * fc - f * f).powi(2) + (bw * f).powi(2)).sqrt()
        })
        .product()
}

pub fn render_utterance(spec: &SyntheticSpec, sample_rate: u32, frame: &FrameConfig) -> Result<RenderedUtterance> {
    if spec.phonemes.is_empty() {
        return Err(Error::invalid("utterance has no phonemes"));
    }
    let formants: Vec<[f64; 3]> = spec.phonemes.iter().map(|p| formants_of(p)).collect::<Result<_>>()?;
    let sr = sample_rate as f64;
    let targets = spec.targets();
    let n_samples = (targets.duration * sr).round() as usize;
    let win = frame.window_samples(sample_rate);
    let hop = frame.hop_samples(sample_rate);
    let n_frames = frame.n_frames(n_samples, sample_rate);
    if n_frames < spec.phonemes.len() {
        return Err(Error::invalid("utterance too short for its phonemes"));
    }
    let weights: Vec<f64> = spec
        .phonemes
        .iter()
        .map(|p| if is_vowel(p) { 1.3 } else { 0.7 })
        .collect();
    let phoneme_frames = allocate_frames(n_frames, &weights);
    let mut frame_to_phoneme = Vec::with_capacity(n_frames);
    for (i, &k) in phoneme_frames.iter().enumerate() {
        frame_to_phoneme.extend(std::iter::repeat_n(i, k));
    }
    let phoneme_at = |t: usize| {
        let k = (t as f64 - win as f64 / 2.0 + hop as f64 / 2.0) / hop as f64;
        let k = (k.max(0.0) as usize).min(n_frames - 1);
        frame_to_phoneme[k]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let draw_jitter = |rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        1.0 + targets.jitter * z.clamp(-3.0, 3.0)
    };
    let nyquist_guard = 0.95 * sr / 2.0;
    let tilt_exp = targets.tilt_db_per_octave / (20.0 * std::f64::consts::LOG10_2);
    let centre = targets.duration / 2.0;

    let mut out = vec![0.0; n_samples];
    let mut amps: Vec<f64> = Vec::new();
    let mut phase = 0.0;
    let mut period_mult = draw_jitter(&mut rng);
    for (t, sample) in out.iter_mut().enumerate() {
        let time = t as f64 / sr;
        let f0 = targets.f0_mean + targets.f0_slope * (time - centre);
        if t % AMP_BLOCK == 0 {
            let f_nominal = f0.max(1.0);
            let n_harm = (nyquist_guard / (f_nominal * 1.05)).floor().max(1.0) as usize;
            let fm = &formants[phoneme_at(t)];
            amps.clear();
            amps.extend((1..=n_harm).map(|k| {
                let f = k as f64 * f_nominal;
                (f / TILT_REFERENCE_HZ).powf(tilt_exp) * formant_gain(f, fm, spec.formant_scale)
            }));
        }
        let f_inst = f0 * period_mult;
        phase += TAU * f_inst / sr;
        if phase >= TAU {
            phase -= TAU;
            period_mult = draw_jitter(&mut rng);
        }
        // sin(k*phase) via the Chebyshev recurrence
        let two_cos = 2.0 * phase.cos();
        let (mut s_prev, mut s_cur) = (0.0, phase.sin());
        let mut acc = 0.0;
        for &a in &amps {
            acc += a * s_cur;
            let next = two_cos * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = next;
        }
        *sample = acc;
    }

    let fade = ((FADE_SECS * sr) as usize).min(n_samples / 2);
    for i in 0..fade {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / fade as f64).cos();
        out[i] *= g;
        out[n_samples - 1 - i] *= g;
    }
    let rms = (out.iter().map(|s| s * s).sum::<f64>() / n_samples as f64).sqrt();
    if rms > 0.0 {
        let gain = targets.rms / rms;
        for s in &mut out {
            // kept f32-exact so float WAV round trips are lossless
            *s = (*s * gain).clamp(-1.0, 1.0) as f32 as f64;
        }
    }
    Ok(RenderedUtterance {
        clip: AudioClip::new(out, sample_rate)?,
        phoneme_frames,
    })
}

/// How labels are drawn for one condition.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelDistribution {
    /// Independent uniform draws in [lo, hi] per dimension.
    Uniform { lo: f64, hi: f64 },
    /// Condition centre plus a per-speaker offset and per-utterance noise,
    /// both uniform in [-spread, spread]; clamped into [2, 6].
    Centered { center: [f64; EMOTION_DIMS], spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionProfile {
    pub id: String,
    pub labels: LabelDistribution,
}

impl ConditionProfile {
    pub fn uniform(id: impl Into<String>) -> Self {
        ConditionProfile {
            id: id.into(),
            labels: LabelDistribution::Uniform {
                lo: LABEL_LO,
                hi: LABEL_HI,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusPlan {
    pub n_speakers: usize,
    pub speaker_prefix: String,
    pub conditions: Vec<ConditionProfile>,
    pub utterances_per_cell: usize,
    pub rng_seed: u64,
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub format: SampleFormat,
    pub min_phonemes: usize,
    pub max_phonemes: usize,
}

impl CorpusPlan {
    /// Labels uniform in [2, 6] for every condition.
    pub fn uniform(n_speakers: usize, conditions: &[&str], utterances_per_cell: usize, rng_seed: u64) -> Self {
        CorpusPlan {
            n_speakers,
            speaker_prefix: "spk".into(),
            conditions: conditions.iter().map(|c| ConditionProfile::uniform(*c)).collect(),
            utterances_per_cell,
            rng_seed,
            sample_rate: 16_000,
            frame: FrameConfig::default(),
            format: SampleFormat::Float32,
            min_phonemes: 3,
            max_phonemes: 6,
        }
    }
}

struct Planned {
    record: UtteranceRecord,
    spec: SyntheticSpec,
}

fn plan_utterances(plan: &CorpusPlan) -> Result<Vec<Planned>> {
    if plan.n_speakers == 0 || plan.conditions.is_empty() || plan.utterances_per_cell == 0 {
        return Err(Error::invalid("corpus counts must be >= 1"));
    }
    if plan.min_phonemes == 0 || plan.min_phonemes > plan.max_phonemes {
        return Err(Error::invalid("bad phoneme count range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
    let speakers: Vec<(String, f64, [f64; EMOTION_DIMS])> = (0..plan.n_speakers)
        .map(|i| {
            let scale = rng.random_range(0.92..=1.08);
            let offset: [f64; EMOTION_DIMS] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            (format!("{}{:02}", plan.speaker_prefix, i + 1), scale, offset)
        })
        .collect();

    let mut out = Vec::new();
    for (speaker, scale, offset) in &speakers {
        for cond in &plan.conditions {
            for k in 0..plan.utterances_per_cell {
                let values: [f64; EMOTION_DIMS] = match &cond.labels {
                    LabelDistribution::Uniform { lo, hi } => {
                        std::array::from_fn(|_| rng.random_range(*lo..=*hi))
                    }
                    LabelDistribution::Centered { center, spread } => std::array::from_fn(|d| {
                        let noise = rng.random_range(-1.0..=1.0);
                        (center[d] + spread * (offset[d] + noise)).clamp(LABEL_LO, LABEL_HI)
                    }),
                };
                let emotion = EmotionVector::new(values)?;
                let n_ph = rng.random_range(plan.min_phonemes..=plan.max_phonemes);
                let phonemes: Vec<String> = (0..n_ph)
                    .map(|_| SYNTH_PHONEMES[rng.random_range(0..SYNTH_PHONEMES.len())].0.to_string())
                    .collect();
                let seed = rng.random::<u64>();
                let audio_path = format!("wav/{speaker}_{}_{:03}.wav", cond.id, k + 1);
                out.push(Planned {
                    record: UtteranceRecord {
                        audio_path,
                        speaker_id: speaker.clone(),
                        condition_id: cond.id.clone(),
                        transcript: phonemes.join(" "),
                        label: Some(emotion),
                        weight: None,
                    },
                    spec: SyntheticSpec::new(emotion, phonemes, *scale, seed),
                });
            }
        }
    }
    Ok(out)
}

/// Renders the plan into `out_dir`: `wav/*.wav`, `manifest.tsv` and the
/// phoneme timing sidecar `durations.tsv`. Deterministic in `rng_seed`.
pub fn generate_synthetic_corpus(plan: &CorpusPlan, out_dir: impl AsRef<Path>, exec: Execution) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    plan.frame.validate(plan.sample_rate)?;
    let planned = plan_utterances(plan)?;
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let timings = par::try_map(exec, &planned, |p| {
        let rendered = render_utterance(&p.spec, plan.sample_rate, &plan.frame)?;
        write_wav(out_dir.join(&p.record.audio_path), &rendered.clip, plan.format)?;
        Ok::<_, Error>((p.record.audio_path.clone(), rendered.phoneme_frames))
    })?;
    write_durations(out_dir.join("durations.tsv"), &timings)?;

    let records: Vec<UtteranceRecord> = planned.into_iter().map(|p| p.record).collect();
    let manifest = Manifest::from_records(records, out_dir)?;
    let header = format!(
        "synthetic corpus: seed {}, {} speakers x {} conditions x {} utterances",
        plan.rng_seed,
        plan.n_speakers,
        plan.conditions.len(),
        plan.utterances_per_cell
    );
    manifest.save(out_dir.join("manifest.tsv"), Some(&header))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emotion(v: [f64; 6]) -> EmotionVector {
        EmotionVector::new(v).unwrap()
    }

    #[test]
    fn mapping_neutral_point() {
        let t = ProsodyTargets::from_emotion(&EmotionVector::neutral());
        assert_eq!(t.f0_mean, 120.0);
        assert_eq!(t.rms, 0.10);
        assert_eq!(t.duration, 1.0);
        assert_eq!(t.tilt_db_per_octave, -6.0);
        let high = ProsodyTargets::from_emotion(&emotion([4.0, 6.0, 4.0, 4.0, 4.0, 4.0]));
        assert_eq!(high.f0_mean, 150.0);
    }

    #[test]
    fn frame_allocation_sums() {
        for total in 6..200 {
            let f = allocate_frames(total, &[1.3, 0.7, 0.7, 1.3, 1.3, 0.7]);
            assert_eq!(f.iter().sum::<usize>(), total);
            assert!(f.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn rendered_length_and_timing() {
        let spec = SyntheticSpec::new(
            emotion([4.0, 4.0, 4.0, 4.0, 6.0, 4.0]),
            vec!["a".into(), "m".into(), "i".into()],
            1.0,
            3,
        );
        let cfg = FrameConfig::default();
        let r = render_utterance(&spec, 16_000, &cfg).unwrap();
        assert_eq!(r.clip.len(), 17_600);
        assert_eq!(r.phoneme_frames.iter().sum::<usize>(), cfg.n_frames(17_600, 16_000));
        assert!((r.clip.rms() - 0.10).abs() < 1e-6);
        assert!(r.clip.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn unknown_phoneme_rejected() {
        let spec = SyntheticSpec::new(EmotionVector::neutral(), vec!["zz".into()], 1.0, 0);
        assert!(render_utterance(&spec, 16_000, &FrameConfig::default()).is_err());
    }

    #[test]
    fn zero_counts_rejected() {
        let plan = CorpusPlan::uniform(0, &["c"], 1, 1);
        assert!(plan_utterances(&plan).is_err());
    }
}
