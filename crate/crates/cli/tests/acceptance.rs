//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Run with `--nocapture` to see the table.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use emovoice::dsp::{extract_f0, FrameConfig, UtteranceFeatureVector};
use emovoice::emostats::{compute_transform_params, ConditionEmotionTable};
use emovoice::nnet::{gradient_check, mlp, Network};
use emovoice::synth::{mlpg_stream, vocode, Trajectories};
use emovoice::EMOTION_DIMS;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MEAN_TOL: f64 = 1e-12;
const VARIANCE_TOL: f64 = 1e-9;
const LAMBDA_TOL: f64 = 1e-12;
const ORACLE_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-4;
const MLPG_TOL: f64 = 1e-8;
const SER_MAE_MAX: f64 = 0.5;
const PITCH_TOL: f64 = 0.03;
const PITCH_FRAME_SHARE: f64 = 0.9;
const SPEARMAN_MIN: f64 = 0.8;

const TRANSFORM_BUDGET: Duration = Duration::from_secs(1);
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const SER_BUDGET: Duration = Duration::from_secs(120);

type V = [f64; 6];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_emovoice")
}

fn run(args: &[&str]) -> (bool, String) {
    let out = Command::new(bin()).args(args).output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.success(), text)
}

fn random_table(rng: &mut ChaCha8Rng) -> (ConditionEmotionTable, Vec<Vec<V>>) {
    let n_t = rng.random_range(2..=6);
    let n_c = rng.random_range(2..=6);
    let cells: Vec<Vec<V>> = (0..n_t)
        .map(|_| (0..n_c).map(|_| std::array::from_fn(|_| rng.random_range(1.0..7.0))).collect())
        .collect();
    let mut obs = Vec::new();
    for (t, row) in cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            obs.push((format!("t{t}"), format!("c{c}"), *v));
        }
    }
    (ConditionEmotionTable::from_observations(&obs).unwrap(), cells)
}

fn criterion_mean_preservation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (table, _) = random_table(&mut rng);
        let a: V = std::array::from_fn(|_| rng.random_range(2.0..6.0));
        for alpha in [0.0, 0.5, 1.0, 1.1] {
            let p = compute_transform_params(&table, &a, alpha).unwrap();
            let out: Vec<V> = table.means().iter().map(|m| p.apply(m).unwrap()).collect();
            for d in 0..6 {
                let m = out.iter().map(|v| v[d]).sum::<f64>() / out.len() as f64;
                worst = worst.max((m - a[d]).abs());
            }
        }
    }
    let took = start.elapsed();
    outcome(
        1,
        "transform preserves the corpus mean",
        worst <= MEAN_TOL && took < TRANSFORM_BUDGET,
        format!("max |mean - a| {worst:.2e} (tol {MEAN_TOL:.0e}), {took:.2?} (budget {TRANSFORM_BUDGET:?})"),
    )
}

fn criterion_variance_imposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (table, _) = random_table(&mut rng);
        let p = compute_transform_params(&table, &[4.0; 6], 1.0).unwrap();
        let out: Vec<V> = table.means().iter().map(|m| p.apply(m).unwrap()).collect();
        let mut total = 0.0;
        for d in 0..6 {
            let m = out.iter().map(|v| v[d]).sum::<f64>() / out.len() as f64;
            total += out.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / out.len() as f64;
        }
        let want: f64 = p.v_t.iter().sum();
        worst = worst.max((total - want).abs() / want.max(1.0));
    }
    outcome(
        3,
        "alpha = 1 imposes the within-speaker variance",
        worst <= VARIANCE_TOL,
        format!("max relative gap {worst:.2e} (tol {VARIANCE_TOL:.0e})"),
    )
}

fn criterion_worked_lambda() -> Outcome {
    let dim0 = |x: f64| -> V { [x, 4.0, 4.0, 4.0, 4.0, 4.0] };
    let table = ConditionEmotionTable::from_observations(&[
        ("A", "c1", dim0(2.0)),
        ("A", "c2", dim0(4.0)),
        ("B", "c1", dim0(3.0)),
        ("B", "c2", dim0(7.0)),
    ])
    .unwrap();
    // speaker variances 1 and 4 average to 2.5; condition means 2.5, 5.5
    let oracle = (2.5f64 / 2.25).sqrt();
    let lambda = compute_transform_params(&table, &[4.0; 6], 1.1).unwrap().lambda;
    let gap = (lambda - oracle).abs();
    outcome(4, "worked 2x2 lambda", gap <= LAMBDA_TOL, format!("lambda {lambda:.12} vs {oracle:.12}, gap {gap:.1e}"))
}

/// Straight recomputation of the condition means and transform.
fn oracle_transform(cells: &[Vec<V>], a: &V, alpha: f64) -> (f64, Vec<V>) {
    let n_t = cells.len() as f64;
    let n_c = cells[0].len();
    let e_c: Vec<V> = (0..n_c)
        .map(|c| std::array::from_fn(|d| cells.iter().map(|row| row[c][d]).sum::<f64>() / n_t))
        .collect();
    let e: V = std::array::from_fn(|d| e_c.iter().map(|v| v[d]).sum::<f64>() / n_c as f64);
    let (mut vt, mut ve) = (0.0, 0.0);
    for d in 0..6 {
        ve += e_c.iter().map(|v| (v[d] - e[d]).powi(2)).sum::<f64>() / n_c as f64;
        for row in cells {
            let m = row.iter().map(|v| v[d]).sum::<f64>() / n_c as f64;
            vt += row.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / n_c as f64 / n_t;
        }
    }
    let lambda = (vt / ve).sqrt();
    let out = e_c.iter().map(|ec| std::array::from_fn(|d| alpha * lambda * (ec[d] - e[d]) + a[d])).collect();
    (lambda, out)
}

fn criterion_oracle_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (table, cells) = random_table(&mut rng);
        let a: V = std::array::from_fn(|_| rng.random_range(2.0..6.0));
        let alpha = [0.0, 0.5, 1.0, 1.1][case % 4];
        let (lambda, want) = oracle_transform(&cells, &a, alpha);
        let p = compute_transform_params(&table, &a, alpha).unwrap();
        worst = worst.max((p.lambda - lambda).abs() / lambda);
        for (m, w) in table.means().iter().zip(&want) {
            let got = p.apply(m).unwrap();
            for d in 0..6 {
                worst = worst.max((got[d] - w[d]).abs() / (1.0 + w[d].abs()));
            }
        }
    }
    outcome(
        5,
        "full transform chain matches brute-force recomputation (100 tables)",
        worst <= ORACLE_TOL,
        format!("max relative gap {worst:.2e} (tol {ORACLE_TOL:.0e})"),
    )
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shapes: [(&str, usize, Vec<usize>, usize); 3] = [
        ("recognizer", UtteranceFeatureVector::len_for(13), vec![64, 64], EMOTION_DIMS),
        ("duration", EMOTION_DIMS + 35, vec![32], 1),
        ("acoustic", EMOTION_DIMS + 36, vec![64, 64], 79),
    ];
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, i, hidden, o) in shapes {
        let mut net = Network::new(mlp(i, &hidden, o), 2).unwrap();
        for l in 0..net.specs().len() {
            for b in net.layer_mut(l).1.iter_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..i).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = gradient_check(&net, &x, &t, 1e-5).unwrap();
        worst = worst.max(err);
        parts.push(format!("{name} {err:.1e}"));
    }
    let took = start.elapsed();
    outcome(
        6,
        "analytic gradients match central differences",
        worst < GRAD_TOL && took < GRAD_BUDGET,
        format!("{} (tol {GRAD_TOL:.0e}), {took:.2?} (budget {GRAD_BUDGET:?})", parts.join(", ")),
    )
}

fn dense_mlpg(m: &[Vec<f64>; 3], v: [f64; 3]) -> Vec<f64> {
    let len = m[0].len();
    let mut w = DMatrix::zeros(3 * len, len);
    for t in 0..len {
        let (p, n) = (t.saturating_sub(1), (t + 1).min(len - 1));
        w[(t, t)] = 1.0;
        w[(len + t, n)] += 0.5;
        w[(len + t, p)] -= 0.5;
        w[(2 * len + t, n)] += 1.0;
        w[(2 * len + t, t)] -= 2.0;
        w[(2 * len + t, p)] += 1.0;
    }
    let mu = DVector::from_iterator(3 * len, m.iter().flatten().copied());
    let prec = DVector::from_iterator(3 * len, v.iter().flat_map(|x| std::iter::repeat_n(1.0 / x, len)));
    let wtp = w.transpose() * DMatrix::from_diagonal(&prec);
    (&wtp * &w).cholesky().unwrap().solve(&(&wtp * mu)).iter().copied().collect()
}

fn criterion_mlpg() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let sizes: Vec<usize> = (1..=8).chain([16, 64, 200]).collect();
    for &len in &sizes {
        for _ in 0..10 {
            let m: [Vec<f64>; 3] = std::array::from_fn(|_| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect());
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..3.0));
            let got = mlpg_stream([&m[0], &m[1], &m[2]], v).unwrap();
            for (a, b) in got.iter().zip(dense_mlpg(&m, v)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(
        7,
        "banded parameter generation equals dense solve",
        worst <= MLPG_TOL,
        format!("max |diff| {worst:.2e} over lengths {sizes:?} (tol {MLPG_TOL:.0e})"),
    )
}

fn criterion_ser(work: &Path) -> Outcome {
    let start = Instant::now();
    let corpus = work.join("ser_corpus");
    let model = work.join("ser.model");
    let (ok, gen) = run(&["gen-corpus", "--out", corpus.to_str().unwrap(), "--speakers", "3", "--utterances", "25"]);
    if !ok {
        return outcome(8, "recognizer held-out MAE", false, gen);
    }
    let (ok, text) = run(&["train-ser", "--manifest", corpus.join("manifest.tsv").to_str().unwrap(), "--out", model.to_str().unwrap()]);
    let took = start.elapsed();
    let mae = text
        .split_whitespace()
        .skip_while(|w| *w != "overall")
        .nth(1)
        .and_then(|v| v.parse::<f64>().ok());
    match (ok, mae) {
        (true, Some(mae)) => outcome(
            8,
            "recognizer held-out MAE on 300 synthetic utterances",
            mae <= SER_MAE_MAX && took < SER_BUDGET,
            format!("MAE {mae:.4} (max {SER_MAE_MAX}), {took:.2?} (budget {SER_BUDGET:?})"),
        ),
        _ => outcome(8, "recognizer held-out MAE", false, text),
    }
}

fn criterion_vocoder() -> Outcome {
    let frame = FrameConfig { n_mel_filters: 40, n_cepstra: 25, ..FrameConfig::default() };
    let mut parts = Vec::new();
    let mut pass = true;
    for hz in [100.0, 150.0, 200.0, 250.0, 300.0] {
        let traj = Trajectories { cepstra: vec![vec![0.0; 25]; 100], lf0: vec![f64::ln(hz); 100], voiced: vec![true; 100] };
        let clip = vocode(&traj, &frame, 16_000, 1).unwrap();
        let contour = extract_f0(&clip, &FrameConfig::default()).unwrap();
        let good = contour.frames.iter().filter(|f| f.f0.is_some_and(|v| (v - hz).abs() <= PITCH_TOL * hz)).count();
        let share = good as f64 / contour.len() as f64;
        pass &= share >= PITCH_FRAME_SHARE;
        parts.push(format!("{hz} Hz {:.0}%", 100.0 * share));
    }
    outcome(
        9,
        "vocoder constant-F0 round trip",
        pass,
        format!("frames within {:.0}%: {} (need {:.0}%)", 100.0 * PITCH_TOL, parts.join(", "), 100.0 * PITCH_FRAME_SHARE),
    )
}

fn read_report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn criterion_baseline_collapse(dir: &Path, report: &serde_json::Value) -> Outcome {
    let corpus_mean = &report["corpus_mean"];
    let conditions = report["conditions"].as_array().unwrap();
    let inputs_equal = conditions.iter().all(|c| &c["baseline_input"] == corpus_mean);
    let wavs: Vec<Vec<u8>> = conditions
        .iter()
        .map(|c| std::fs::read(dir.join("synth").join(format!("{}_baseline.wav", c["condition"].as_str().unwrap()))).unwrap())
        .collect();
    let audio_equal = wavs.windows(2).all(|w| w[0] == w[1]);
    let distinct = report["proposed_min_distance"].as_f64().unwrap();
    outcome(
        2,
        "alpha = 0 collapses every condition to the corpus mean",
        inputs_equal && audio_equal,
        format!(
            "inputs == a: {inputs_equal}; {} baseline WAVs identical: {audio_equal}; proposed min distance {distinct:.3e}",
            wavs.len()
        ),
    )
}

fn criterion_monotonic(report: &serde_json::Value) -> Outcome {
    let f0 = |name: &str| {
        report["conditions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["condition"] == name)
            .map(|c| c["proposed"]["f0_mean"].as_f64().unwrap())
            .unwrap()
    };
    let (high, low) = (f0("early_morning_ow"), f0("middle_of_night_ow"));
    let rho = report["sweep_spearman"].as_f64().unwrap();
    let n = report["sweep"].as_array().unwrap().len();
    outcome(
        10,
        "synthesized F0 follows arousal",
        high > low && rho > SPEARMAN_MIN && n == 20,
        format!("high-arousal {high:.2} Hz > low-arousal {low:.2} Hz; Spearman {rho:.4} over {n} (min {SPEARMAN_MIN})"),
    )
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_determinism(a: &Path, b: &Path) -> Outcome {
    let (ta, tb) = (tree(a), tree(b));
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let pass = ta.len() == tb.len() && differing.is_empty();
    outcome(
        11,
        "pipeline output is byte-identical across runs",
        pass,
        format!("{} files compared, {} differ {:?}", ta.len().max(tb.len()), differing.len(), differing),
    )
}

#[test]
fn acceptance_criteria() {
    let work = tempfile::tempdir().unwrap();
    let mut results = vec![
        criterion_mean_preservation(),
        criterion_variance_imposition(),
        criterion_worked_lambda(),
        criterion_oracle_chain(),
        criterion_gradients(),
        criterion_mlpg(),
        criterion_ser(work.path()),
        criterion_vocoder(),
    ];

    let runs: Vec<PathBuf> = (1..=2).map(|k| work.path().join(format!("pipeline{k}"))).collect();
    let mut ran = true;
    for dir in &runs {
        let (ok, text) = run(&["pipeline", "--seed", "42", "--alpha", "1.1", "--out", dir.to_str().unwrap()]);
        if !ok {
            ran = false;
            results.push(outcome(10, "pipeline run", false, text));
        }
    }
    if ran {
        let report = read_report(&runs[0]);
        results.push(criterion_baseline_collapse(&runs[0], &report));
        results.push(criterion_monotonic(&report));
        results.push(criterion_determinism(&runs[0], &runs[1]));
    }

    results.sort_by_key(|r| r.id);
    println!();
    for r in &results {
        println!("[{}] {:>2} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.detail);
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    assert_eq!(results.len(), 11);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
