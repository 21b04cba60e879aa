use std::sync::OnceLock;

use emovoice::corpus::{generate_synthetic_corpus, load_durations, load_wav, CorpusPlan, Manifest};
use emovoice::dsp::extract_f0;
use emovoice::synth::{
    encode_text, extract_acoustic_targets, frame_features, predict_acoustics, predict_durations, synthesize,
    synthesize_detailed, train_synth, EmotionSource, SynthModel, SynthTrainReport,
};
use emovoice::{Execution, PipelineConfig};

struct Trained {
    manifest: Manifest,
    durations: emovoice::corpus::PhonemeDurations,
    model: SynthModel,
    report: SynthTrainReport,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let cfg = PipelineConfig::default();
        let plan = CorpusPlan { speaker_prefix: "actor".into(), ..CorpusPlan::uniform(1, &["corpus"], 80, 31) };
        let manifest = generate_synthetic_corpus(&plan, &dir, Execution::default()).unwrap();
        let durations = load_durations(dir.join("durations.tsv")).unwrap();
        let (model, report) = train_synth(
            &manifest,
            &durations,
            EmotionSource::Labels,
            &cfg.synth_train_config(),
            Execution::default(),
        )
        .unwrap();
        Trained { manifest, durations, model, report }
    })
}

fn neutral_with(dim: usize, value: f64) -> [f64; 6] {
    let mut e = [4.0; 6];
    e[dim] = value;
    e
}

const TEXT: &str = "a m o i n e u";

#[test]
fn training_reduces_losses() {
    let r = &trained().report;
    assert!(r.duration.final_loss() < 0.5 * r.duration.initial_loss(), "{:?}", r.duration.loss_history);
    assert!(r.acoustic.final_loss() < r.acoustic.initial_loss());
    assert_eq!(r.n_phonemes, trained().manifest.records().iter().map(|x| x.transcript.split_whitespace().count()).sum::<usize>());
}

#[test]
fn static_streams_are_learned() {
    let t = trained();
    let layout = t.model.layout();
    let s_dim = layout.static_dim();
    let mut sq = vec![0.0; s_dim];
    let mut n = 0.0;
    for r in t.manifest.records() {
        let clip = load_wav(t.manifest.audio_path(r), 16_000).unwrap();
        let targets = extract_acoustic_targets(&clip, &t.model.frame).unwrap();
        let ling = encode_text(&r.transcript, &t.model.inventory).unwrap();
        let rows = frame_features(&ling, &t.durations[&r.audio_path]).unwrap();
        let pred = predict_acoustics(&t.model, &rows, r.label.unwrap().values()).unwrap();
        for (p, y) in pred.iter().zip(&targets) {
            for k in 0..s_dim {
                sq[k] += (p[k] - y[k]).powi(2);
            }
            n += 1.0;
        }
    }
    // residual as a fraction of each static stream's target variance
    let total: f64 = (0..s_dim).map(|k| sq[k] / n / t.model.variances[k]).sum::<f64>() / s_dim as f64;
    assert!(total < 0.5, "static residual fraction {total}");
}

#[test]
fn higher_interest_lengthens_speech() {
    let m = &trained().model;
    let ling = encode_text(TEXT, &m.inventory).unwrap();
    let frames = |v: f64| predict_durations(m, &ling, &neutral_with(4, v)).unwrap().iter().sum::<usize>();
    let (lo, mid, hi) = (frames(2.0), frames(4.0), frames(6.0));
    assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
}

#[test]
fn emotion_input_changes_acoustics() {
    let m = &trained().model;
    let ling = encode_text(TEXT, &m.inventory).unwrap();
    let rows = frame_features(&ling, &vec![10; ling.len()]).unwrap();
    let base = predict_acoustics(m, &rows, &[4.0; 6]).unwrap();
    for dim in 0..6 {
        let moved = predict_acoustics(m, &rows, &neutral_with(dim, 6.0)).unwrap();
        assert_ne!(moved, base, "dimension {dim} has no effect");
    }
}

#[test]
fn synthesized_pitch_rises_with_arousal() {
    let m = &trained().model;
    let f0: Vec<f64> = [2.0, 3.0, 4.0, 5.0, 6.0]
        .iter()
        .map(|&a| {
            let clip = synthesize(m, TEXT, &neutral_with(1, a), 7).unwrap();
            extract_f0(&clip, &m.frame).unwrap().mean_voiced_f0().unwrap()
        })
        .collect();
    assert!(f0.windows(2).all(|w| w[0] < w[1]), "{f0:?}");
}

#[test]
fn synthesis_is_deterministic_and_sized() {
    let m = &trained().model;
    let a = synthesize_detailed(m, TEXT, &[5.0, 3.0, 4.0, 4.5, 3.5, 4.0], 7).unwrap();
    let b = synthesize_detailed(m, TEXT, &[5.0, 3.0, 4.0, 4.5, 3.5, 4.0], 7).unwrap();
    assert_eq!(a.clip, b.clip);
    let frames: usize = a.durations.iter().sum();
    assert_eq!(a.trajectories.len(), frames);
    assert_eq!(a.clip.len(), m.frame.samples_for_frames(frames, m.sample_rate));
    assert!(a.clip.samples().iter().all(|s| s.abs() <= 0.9 + 1e-12));
}

#[test]
fn model_file_round_trip() {
    let m = &trained().model;
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("synth.model");
    m.save(&p).unwrap();
    assert_eq!(&SynthModel::load(&p).unwrap(), m);
}
