use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emovoice::corpus::{generate_synthetic_corpus, load_durations, load_wav, write_wav, CorpusPlan, Manifest, SampleFormat};
use emovoice::dsp::{analyze, format_matrix, utterance_features};
use emovoice::emostats::{condition_means, corpus_mean, compute_transform_params, StatsReport};
use emovoice::emotion::{format_vector, parse_vector, EMOTION_NAMES};
use emovoice::pipeline::run_pipeline;
use emovoice::ser::{evaluate_mae, recognize, recognize_manifest, train_ser, SerModel};
use emovoice::synth::{synthesize_detailed, train_synth, EmotionSource, SynthModel};
use emovoice::{Error, Execution, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "emovoice", about = "Emotion-conditioned speech synthesis toolkit", disable_version_flag = true)]
struct Cli {
    /// Flat key = value config file; unspecified keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's `alpha` (0 disables emotional control; 1.1 is
    /// the emphasised setting). `transform` and `synthesize --stats` otherwise
    /// use the alpha stored in the report.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a label-known synthetic corpus.
    GenCorpus(GenCorpusArgs),
    /// Dump frame-level or pooled features.
    Extract(ExtractArgs),
    /// Train the emotion recognizer on a labelled manifest.
    TrainSer(TrainSerArgs),
    /// Print the recognized emotion vector of each clip.
    Recognize(RecognizeArgs),
    /// Mean absolute error of a recognizer on a labelled manifest.
    EvalSer(EvalSerArgs),
    /// Condition statistics and transform parameters.
    Stats(StatsArgs),
    /// Transformed synthesizer inputs from a stats report.
    Transform(TransformArgs),
    /// Train the duration and acoustic models.
    TrainSynth(TrainSynthArgs),
    /// Synthesize one utterance.
    Synthesize(SynthesizeArgs),
    /// Run the whole experiment on synthetic data.
    Pipeline(PipelineArgs),
    /// Print the version.
    Version,
}

#[derive(Clone, Copy, ValueEnum)]
enum WavFormat {
    Float,
    Pcm16,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    /// Comma-separated condition ids.
    #[arg(long, default_value = "c1,c2,c3,c4")]
    conditions: String,
    #[arg(long, default_value_t = 25)]
    utterances: usize,
    #[arg(long, value_enum, default_value_t = WavFormat::Float)]
    format: WavFormat,
}

#[derive(Args)]
struct ExtractArgs {
    /// One clip: frame-level rows (f0, confidence, rms, cepstra).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    wav: Option<PathBuf>,
    /// Every clip of a manifest: one pooled feature vector per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSerArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "wav")]
    manifest: Option<PathBuf>,
    wav: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalSerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target-speaker manifest (speakers x conditions).
    #[arg(long)]
    target: PathBuf,
    /// Synthesizer training corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the machine-readable report.
    #[arg(long)]
    out: PathBuf,
    /// Clamp transformed vectors into [1, 7].
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct TrainSynthArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Phoneme timing sidecar; defaults to durations.tsv next to the manifest.
    #[arg(long)]
    durations: Option<PathBuf>,
    /// Condition on recognizer output instead of manifest labels.
    #[arg(long)]
    ser: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Space-separated phonemes.
    #[arg(long)]
    text: String,
    /// Six comma-separated values.
    #[arg(long, conflicts_with_all = ["stats", "condition"], required_unless_present = "stats")]
    emotion: Option<String>,
    /// Use the transformed vector of `--condition` from this report.
    #[arg(long, requires = "condition")]
    stats: Option<PathBuf>,
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write generated parameters as text.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out: PathBuf,
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_ser(cfg: &PipelineConfig, path: &Path) -> Result<SerModel> {
    let model = SerModel::load(path)?;
    cfg.check_artifact(&model.config_checksum)?;
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let alpha_override = cli.alpha;
    if let Some(a) = alpha_override {
        cfg.alpha = a;
    }
    cfg.validate()?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let checksum = cfg.checksum();

    match cli.command {
        Command::Version => println!("emovoice {}", env!("CARGO_PKG_VERSION")),
        Command::GenCorpus(a) => {
            let conditions: Vec<&str> = a.conditions.split(',').map(str::trim).filter(|c| !c.is_empty()).collect();
            let plan = CorpusPlan {
                sample_rate: cfg.sample_rate,
                frame: cfg.frame(),
                format: match a.format {
                    WavFormat::Float => SampleFormat::Float32,
                    WavFormat::Pcm16 => SampleFormat::Pcm16,
                },
                ..CorpusPlan::uniform(a.speakers, &conditions, a.utterances, cfg.seed)
            };
            let m = generate_synthetic_corpus(&plan, &a.out, exec)?;
            let header = format!(
                "config {checksum}; synthetic corpus: seed {}, {} speakers x {} conditions x {} utterances",
                cfg.seed,
                a.speakers,
                conditions.len(),
                a.utterances
            );
            m.save(a.out.join("manifest.tsv"), Some(&header))?;
            println!("{} utterances -> {}", m.len(), a.out.join("manifest.tsv").display());
        }
        Command::Extract(a) => {
            let frame = cfg.frame();
            let mut text = format!("# config {checksum}\n");
            if let Some(wav) = a.wav {
                let clip = load_wav(&wav, cfg.sample_rate)?;
                let fa = analyze(&clip, &frame)?;
                let rows: Vec<Vec<f64>> = (0..fa.energy.len())
                    .map(|t| {
                        let mut row = vec![fa.f0.frames[t].f0.unwrap_or(0.0), fa.f0.frames[t].confidence, fa.energy[t]];
                        row.extend_from_slice(&fa.cepstra[t]);
                        row
                    })
                    .collect();
                text.push_str(&format_matrix(&rows));
            } else if let Some(mp) = a.manifest {
                let m = Manifest::load(&mp)?;
                let clips = m
                    .records()
                    .iter()
                    .map(|r| load_wav(m.audio_path(r), cfg.sample_rate))
                    .collect::<Result<Vec<_>>>()?;
                let rows = emovoice::par::try_map(exec, &clips, |c| utterance_features(c, &frame))?;
                text.push_str(&format_matrix(&rows.into_iter().map(|f| f.0).collect::<Vec<_>>()));
            }
            write_text(a.out.as_deref(), &text)?;
        }
        Command::TrainSer(a) => {
            let m = Manifest::load(&a.manifest)?;
            let mut model = train_ser(&m, &cfg.ser_config(), exec)?;
            model.config_checksum = checksum;
            model.save(&a.out)?;
            if let Some(h) = model.heldout {
                println!("held-out MAE {} overall {:.4}", format_vector(&h.per_dim, 4), h.overall);
            }
        }
        Command::Recognize(a) => {
            let model = load_ser(&cfg, &a.model)?;
            if let Some(mp) = a.manifest {
                let m = Manifest::load(&mp)?;
                for (r, v) in m.records().iter().zip(recognize_manifest(&model, &m, exec)?) {
                    println!("{}\t{}", r.audio_path, v);
                }
            } else {
                if a.wav.is_empty() {
                    return Err(Error::InvalidInput("give --manifest or at least one WAV path".into()));
                }
                for w in &a.wav {
                    let v = recognize(&model, &load_wav(w, cfg.sample_rate)?)?;
                    println!("{}\t{}", w.display(), v);
                }
            }
        }
        Command::EvalSer(a) => {
            let model = load_ser(&cfg, &a.model)?;
            let r = evaluate_mae(&model, &Manifest::load(&a.manifest)?, exec)?;
            for (name, v) in EMOTION_NAMES.iter().zip(r.per_dim) {
                println!("{name}\t{v:.4}");
            }
            println!("overall\t{:.4}", r.overall);
        }
        Command::Stats(a) => {
            let model = load_ser(&cfg, &a.model)?;
            let table = condition_means(&model, &Manifest::load(&a.target)?, exec)?;
            let mean = corpus_mean(&model, &Manifest::load(&a.corpus)?, exec)?;
            let params = compute_transform_params(&table, &mean, cfg.alpha)?;
            let report = StatsReport::build(&table, &params, a.clamp || cfg.clamp_transformed, &checksum)?;
            report.save_json(&a.out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.to_text());
        }
        Command::Transform(a) => {
            let report = StatsReport::load_json(&a.stats)?;
            cfg.check_artifact(&report.config_checksum)?;
            let alpha = alpha_override.unwrap_or(report.params.alpha);
            let report = StatsReport { clamped: report.clamped || a.clamp, ..report }.with_alpha(alpha)?;
            for c in &report.conditions {
                println!("{}\t{}", c.condition, format_vector(&c.transformed, 4));
            }
        }
        Command::TrainSynth(a) => {
            let m = Manifest::load(&a.manifest)?;
            let dpath = match a.durations {
                Some(p) => p,
                None => a.manifest.with_file_name("durations.tsv"),
            };
            let durations = load_durations(&dpath)?;
            let ser = a.ser.as_deref().map(|p| load_ser(&cfg, p)).transpose()?;
            let source = match &ser {
                Some(s) => EmotionSource::Recognizer(s),
                None => EmotionSource::Labels,
            };
            let (mut model, report) = train_synth(&m, &durations, source, &cfg.synth_train_config(), exec)?;
            model.config_checksum = checksum;
            model.save(&a.out)?;
            println!(
                "duration loss {:.4} -> {:.4}; acoustic loss {:.4} -> {:.4}",
                report.duration.initial_loss(),
                report.duration.final_loss(),
                report.acoustic.initial_loss(),
                report.acoustic.final_loss()
            );
        }
        Command::Synthesize(a) => {
            let model = SynthModel::load(&a.model)?;
            cfg.check_artifact(&model.config_checksum)?;
            let emotion = match (&a.emotion, &a.stats, &a.condition) {
                (Some(e), _, _) => parse_vector(e)?,
                (None, Some(sp), Some(c)) => {
                    let report = StatsReport::load_json(sp)?;
                    cfg.check_artifact(&report.config_checksum)?;
                    let report = report.with_alpha(alpha_override.unwrap_or(report.params.alpha))?;
                    *report
                        .transformed(c)
                        .ok_or_else(|| Error::InvalidInput(format!("condition {c:?} not in {}", sp.display())))?
                }
                _ => return Err(Error::InvalidInput("give --emotion or --stats with --condition".into())),
            };
            let s = synthesize_detailed(&model, &a.text, &emotion, cfg.noise_seed)?;
            write_wav(&a.out, &s.clip, SampleFormat::Pcm16)?;
            if let Some(d) = a.dump {
                write_text(Some(&d), &format!("# config {checksum}\n{}", s.trajectories.to_text()))?;
            }
            println!("{} frames, {:.3} s -> {}", s.trajectories.len(), s.clip.duration_secs(), a.out.display());
        }
        Command::Pipeline(a) => {
            let report = run_pipeline(&cfg, &a.out, exec)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
