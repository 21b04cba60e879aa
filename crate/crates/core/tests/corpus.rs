use emovoice::corpus::{generate_synthetic_corpus, load_durations, load_wav, CorpusPlan, Manifest, ProsodyTargets};
use emovoice::dsp::{extract_energy, extract_f0, rms_from_energy, FrameConfig};
use emovoice::Execution;

fn file_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir).into_iter().map(|p| {
        let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        (rel, std::fs::read(&p).unwrap())
    }).collect();
    files.sort();
    files
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn every_utterance_reanalyses_to_its_targets() {
    let dir = tempfile::tempdir().unwrap();
    let plan = CorpusPlan::uniform(3, &["c1", "c2"], 8, 5);
    let m = generate_synthetic_corpus(&plan, dir.path(), Execution::default()).unwrap();
    assert_eq!(m.len(), 48);
    let cfg = FrameConfig::default();
    let durations = load_durations(dir.path().join("durations.tsv")).unwrap();
    for r in m.records() {
        let clip = load_wav(m.audio_path(r), 16_000).unwrap();
        let targets = ProsodyTargets::from_emotion(r.label.as_ref().unwrap());

        let f0 = extract_f0(&clip, &cfg).unwrap().mean_voiced_f0().unwrap();
        assert!((f0 - targets.f0_mean).abs() < 2.0, "{}: F0 {f0} vs {}", r.audio_path, targets.f0_mean);

        let rms = rms_from_energy(&extract_energy(&clip, &cfg).unwrap(), &cfg);
        assert!((rms - targets.rms).abs() / targets.rms < 0.05, "{}: RMS {rms} vs {}", r.audio_path, targets.rms);

        let frames = durations.get(&r.audio_path).unwrap();
        assert_eq!(frames.len(), r.transcript.split_whitespace().count());
        assert_eq!(frames.iter().sum::<usize>(), cfg.n_frames(clip.len(), 16_000));
        assert!((clip.duration_secs() - targets.duration).abs() < 1e-3);
    }
}

#[test]
fn generation_is_deterministic_across_execution_modes() {
    let plan = CorpusPlan::uniform(2, &["c1", "c2", "c3"], 3, 17);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&plan, a.path(), Execution::Sequential).unwrap();
    generate_synthetic_corpus(&plan, b.path(), Execution::default()).unwrap();
    assert_eq!(file_bytes(a.path()), file_bytes(b.path()));

    let other = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&CorpusPlan { rng_seed: 18, ..plan }, other.path(), Execution::Sequential).unwrap();
    assert_ne!(file_bytes(a.path()), file_bytes(other.path()));
}

#[test]
fn manifest_reloads_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic_corpus(&CorpusPlan::uniform(2, &["x", "y"], 2, 3), dir.path(), Execution::Sequential).unwrap();
    let back = Manifest::load(dir.path().join("manifest.tsv")).unwrap();
    assert_eq!(back.records(), m.records());
    assert_eq!(back.speakers(), &["spk01".to_string(), "spk02".to_string()]);
    assert_eq!(back.conditions(), &["x".to_string(), "y".to_string()]);
    for r in back.records() {
        let v = r.label.unwrap();
        assert!(v.values().iter().all(|x| (2.0..=6.0).contains(x)));
    }
}
