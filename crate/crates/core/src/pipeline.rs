//! End-to-end experiment on synthetic data: recognizer training, condition
//! statistics for a simulated group of target speakers, synthesizer
//! training on a single-speaker corpus, and synthesis for every condition
//! under the baseline (`alpha = 0`) and the configured `alpha`.
//!
//! Everything written under the output directory is a function of the
//! config alone; the report carries no timestamps or absolute paths.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::{
    generate_synthetic_corpus, load_durations, write_wav, AudioClip, ConditionProfile, CorpusPlan, LabelDistribution,
    SampleFormat,
};
use crate::dsp::{extract_f0, FrameConfig};
use crate::emostats::{condition_means, corpus_mean, compute_transform_params, StatsReport, Vector};
use crate::emotion::{format_vector, AROUSAL, EMOTION_DIMS};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::ser::{train_ser, MaeReport};
use crate::stats::spearman;
use crate::synth::{synthesize_batch, train_synth, EmotionSource};

/// Condition centres for the simulated target speakers: time of day of an
/// utterance addressed to an older listener. Brighter in the morning,
/// subdued at night.
pub const TARGET_CONDITIONS: [(&str, Vector); 4] = [
    ("early_morning_ow", [4.8, 5.2, 3.8, 4.6, 4.8, 4.7]),
    ("forenoon_ow", [4.5, 4.6, 4.3, 4.4, 4.5, 4.5]),
    ("before_bedtime_ow", [4.0, 3.6, 4.0, 4.1, 3.9, 4.0]),
    ("middle_of_night_ow", [3.4, 2.8, 3.5, 3.6, 3.3, 3.4]),
];

/// Spread of the per-speaker offset and per-utterance noise around each
/// condition centre.
pub const TARGET_SPREAD: f64 = 0.4;

/// Text synthesized for every condition.
pub const PROBE_TRANSCRIPT: &str = "a m o i n e u";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Mean F0 over voiced frames, Hz; 0 when nothing is voiced.
    pub f0_mean: f64,
    pub rms: f64,
}

pub fn measure(clip: &AudioClip, frame: &FrameConfig) -> Result<Measurement> {
    let f0 = extract_f0(clip, frame)?;
    Ok(Measurement { f0_mean: f0.mean_voiced_f0().unwrap_or(0.0), rms: clip.rms() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub condition: String,
    pub baseline_input: Vector,
    pub proposed_input: Vector,
    pub baseline: Measurement,
    pub proposed: Measurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub arousal: f64,
    pub f0_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_checksum: String,
    pub alpha: f64,
    pub ser_heldout_mae: Option<[f64; EMOTION_DIMS]>,
    pub ser_heldout_overall: Option<f64>,
    pub lambda: f64,
    pub corpus_mean: Vector,
    pub target_mean: Vector,
    pub synth_duration_loss: (f64, f64),
    pub synth_acoustic_loss: (f64, f64),
    pub conditions: Vec<ConditionOutcome>,
    /// All baseline waveforms are sample-identical.
    pub baseline_identical: bool,
    /// Smallest mean absolute sample difference between two conditions'
    /// waveforms under the configured alpha.
    pub proposed_min_distance: f64,
    pub sweep: Vec<SweepPoint>,
    pub sweep_spearman: f64,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let v = |x: &[f64]| format_vector(x, 6);
        let mut s = String::new();
        let _ = writeln!(s, "config_checksum {}", self.config_checksum);
        let _ = writeln!(s, "alpha {:.6}", self.alpha);
        if let (Some(per), Some(all)) = (&self.ser_heldout_mae, self.ser_heldout_overall) {
            let _ = writeln!(s, "ser_heldout_mae {} overall {:.6}", v(per), all);
        }
        let _ = writeln!(s, "lambda {:.6}", self.lambda);
        let _ = writeln!(s, "a {}", v(&self.corpus_mean));
        let _ = writeln!(s, "e {}", v(&self.target_mean));
        let _ = writeln!(
            s,
            "synth_loss duration {:.6} -> {:.6} acoustic {:.6} -> {:.6}",
            self.synth_duration_loss.0, self.synth_duration_loss.1, self.synth_acoustic_loss.0, self.synth_acoustic_loss.1
        );
        let _ = writeln!(s, "condition\tbaseline_input\tbaseline_f0\tbaseline_rms\tproposed_input\tproposed_f0\tproposed_rms");
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.3}\t{:.6}\t{}\t{:.3}\t{:.6}",
                c.condition,
                v(&c.baseline_input),
                c.baseline.f0_mean,
                c.baseline.rms,
                v(&c.proposed_input),
                c.proposed.f0_mean,
                c.proposed.rms
            );
        }
        let _ = writeln!(s, "baseline_identical {}", self.baseline_identical);
        let _ = writeln!(s, "proposed_min_distance {:.6e}", self.proposed_min_distance);
        for p in &self.sweep {
            let _ = writeln!(s, "sweep arousal {:.4} f0 {:.3}", p.arousal, p.f0_mean);
        }
        let _ = writeln!(s, "sweep_spearman {:.6}", self.sweep_spearman);
        s
    }
}

fn target_plan(cfg: &PipelineConfig) -> CorpusPlan {
    CorpusPlan {
        n_speakers: cfg.target_speakers,
        speaker_prefix: "tgt".into(),
        conditions: TARGET_CONDITIONS
            .iter()
            .map(|(id, center)| ConditionProfile {
                id: id.to_string(),
                labels: LabelDistribution::Centered { center: *center, spread: TARGET_SPREAD },
            })
            .collect(),
        ..corpus_plan(cfg, cfg.target_utterances_per_cell, cfg.seed.wrapping_add(2))
    }
}

fn corpus_plan(cfg: &PipelineConfig, per_cell: usize, seed: u64) -> CorpusPlan {
    CorpusPlan {
        sample_rate: cfg.sample_rate,
        frame: cfg.frame(),
        format: SampleFormat::Float32,
        ..CorpusPlan::uniform(1, &["corpus"], per_cell, seed)
    }
}

/// Recognizer training corpus: uniform labels over the target conditions.
pub fn ser_corpus_plan(cfg: &PipelineConfig) -> CorpusPlan {
    let ids: Vec<&str> = TARGET_CONDITIONS.iter().map(|(id, _)| *id).collect();
    CorpusPlan {
        sample_rate: cfg.sample_rate,
        frame: cfg.frame(),
        ..CorpusPlan::uniform(cfg.ser_speakers, &ids, cfg.ser_utterances_per_cell, cfg.seed)
    }
}

/// Single-speaker synthesizer corpus.
pub fn actor_corpus_plan(cfg: &PipelineConfig) -> CorpusPlan {
    CorpusPlan { speaker_prefix: "actor".into(), ..corpus_plan(cfg, cfg.actor_utterances, cfg.seed.wrapping_add(1)) }
}

fn mean_abs_diff(a: &AudioClip, b: &AudioClip) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        return 0.0;
    }
    let get = |c: &AudioClip, i: usize| c.samples().get(i).copied().unwrap_or(0.0);
    (0..n).map(|i| (get(a, i) - get(b, i)).abs()).sum::<f64>() / n as f64
}

fn write_clips(dir: &Path, named: &[(String, &AudioClip)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, clip) in named {
        write_wav(dir.join(name), clip, SampleFormat::Pcm16)?;
    }
    Ok(())
}

/// Runs every stage, writing corpora, models, stats, audio and
/// `report.txt` / `report.json` under `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: impl AsRef<Path>, exec: Execution) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let checksum = cfg.checksum();
    fs::write(out.join("config.toml"), cfg.to_text()).map_err(|e| Error::io(out.join("config.toml"), e))?;

    let ser_corpus = generate_synthetic_corpus(&ser_corpus_plan(cfg), out.join("ser_corpus"), exec)?;
    let mut ser = train_ser(&ser_corpus, &cfg.ser_config(), exec)?;
    ser.corpus_id = "ser_corpus".into();
    ser.config_checksum = checksum.clone();
    ser.save(out.join("ser.model"))?;

    let actor = generate_synthetic_corpus(&actor_corpus_plan(cfg), out.join("actor_corpus"), exec)?;
    let target = generate_synthetic_corpus(&target_plan(cfg), out.join("target_corpus"), exec)?;

    let table = condition_means(&ser, &target, exec)?;
    let a = corpus_mean(&ser, &actor, exec)?;
    let proposed = compute_transform_params(&table, &a, cfg.alpha)?;
    let baseline = proposed.with_alpha(0.0)?;
    let stats = StatsReport::build(&table, &proposed, cfg.clamp_transformed, &checksum)?;
    let stats0 = StatsReport::build(&table, &baseline, cfg.clamp_transformed, &checksum)?;
    stats.save_json(out.join("stats.json"))?;
    fs::write(out.join("stats.txt"), stats.to_text()).map_err(|e| Error::io(out.join("stats.txt"), e))?;
    stats0.save_json(out.join("stats_baseline.json"))?;

    let durations = load_durations(out.join("actor_corpus").join("durations.tsv"))?;
    let (mut synth, synth_report) =
        train_synth(&actor, &durations, EmotionSource::Recognizer(&ser), &cfg.synth_train_config(), exec)?;
    synth.config_checksum = checksum.clone();
    synth.save(out.join("synth.model"))?;

    let conditions = stats.conditions.iter().map(|c| c.condition.clone()).collect::<Vec<_>>();
    let inputs: Vec<(String, Vector)> = stats0
        .conditions
        .iter()
        .chain(&stats.conditions)
        .map(|c| (PROBE_TRANSCRIPT.to_string(), c.transformed))
        .collect();
    let clips = synthesize_batch(&synth, &inputs, cfg.noise_seed, exec)?;
    let (base_clips, prop_clips) = clips.split_at(conditions.len());
    let named: Vec<(String, &AudioClip)> = conditions
        .iter()
        .zip(base_clips)
        .map(|(c, clip)| (format!("{c}_baseline.wav"), clip))
        .chain(conditions.iter().zip(prop_clips).map(|(c, clip)| (format!("{c}_proposed.wav"), clip)))
        .collect();
    write_clips(&out.join("synth"), &named)?;

    let frame = cfg.frame();
    let mut outcomes = Vec::with_capacity(conditions.len());
    for (i, cond) in conditions.iter().enumerate() {
        outcomes.push(ConditionOutcome {
            condition: cond.clone(),
            baseline_input: stats0.conditions[i].transformed,
            proposed_input: stats.conditions[i].transformed,
            baseline: measure(&base_clips[i], &frame)?,
            proposed: measure(&prop_clips[i], &frame)?,
        });
    }
    let baseline_identical = base_clips.windows(2).all(|w| w[0] == w[1]);
    let mut proposed_min_distance = f64::INFINITY;
    for i in 0..prop_clips.len() {
        for j in i + 1..prop_clips.len() {
            proposed_min_distance = proposed_min_distance.min(mean_abs_diff(&prop_clips[i], &prop_clips[j]));
        }
    }
    if !proposed_min_distance.is_finite() {
        proposed_min_distance = 0.0;
    }

    let n = cfg.sweep_utterances.max(2);
    let sweep_inputs: Vec<(String, Vector)> = (0..n)
        .map(|k| {
            let mut e = a;
            e[AROUSAL] = 2.0 + 4.0 * k as f64 / (n - 1) as f64;
            (PROBE_TRANSCRIPT.to_string(), e)
        })
        .collect();
    let sweep_clips = synthesize_batch(&synth, &sweep_inputs, cfg.noise_seed, exec)?;
    let sweep = sweep_inputs
        .iter()
        .zip(&sweep_clips)
        .map(|((_, e), clip)| Ok(SweepPoint { arousal: e[AROUSAL], f0_mean: measure(clip, &frame)?.f0_mean }))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = sweep.iter().map(|p| p.arousal).collect();
    let ys: Vec<f64> = sweep.iter().map(|p| p.f0_mean).collect();

    let heldout: Option<MaeReport> = ser.heldout;
    let report = PipelineReport {
        config_checksum: checksum,
        alpha: cfg.alpha,
        ser_heldout_mae: heldout.map(|m| m.per_dim),
        ser_heldout_overall: heldout.map(|m| m.overall),
        lambda: proposed.lambda,
        corpus_mean: a,
        target_mean: proposed.e,
        synth_duration_loss: (synth_report.duration.initial_loss(), synth_report.duration.final_loss()),
        synth_acoustic_loss: (synth_report.acoustic.initial_loss(), synth_report.acoustic.final_loss()),
        conditions: outcomes,
        baseline_identical,
        proposed_min_distance,
        sweep,
        sweep_spearman: spearman(&xs, &ys),
    };
    fs::write(out.join("report.txt"), report.to_text()).map_err(|e| Error::io(out.join("report.txt"), e))?;
    fs::write(out.join("report.json"), report.to_json()).map_err(|e| Error::io(out.join("report.json"), e))?;
    Ok(report)
}
