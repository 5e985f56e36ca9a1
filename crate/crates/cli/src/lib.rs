//! The `impressions` command: feature extraction, synthetic data, training,
//! prediction, evaluation and gradient checking.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use impressions::audio::{extract_features, load_wav, PartitionedAudioFeatures};
use impressions::dataset::{generate_synthetic_dataset, load_dataset, load_manifest, VideoSample};
use impressions::eval::{align_by_id, mean_average_accuracy, read_scores_csv, write_scores_csv};
use impressions::trainer::{self, load_checkpoint, predict_samples, TrainerConfig, MSE_CURVE_FILE};
use impressions::{verify, Architecture, Error, Precision, Real, TraitScores};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Invalid flags (reported by the argument parser).
    pub const USAGE: i32 = 2;
    /// A file or directory could not be read or written.
    pub const IO: i32 = 3;
    /// An input file is corrupt, unsupported or fails validation.
    pub const BAD_INPUT: i32 = 4;
    /// The configuration or an argument value is invalid.
    pub const CONFIG: i32 = 5;
    /// At least one gradient check exceeded its tolerance.
    pub const GRADCHECK_FAILED: i32 = 6;
    /// Tensor shapes did not line up.
    pub const SHAPE: i32 = 7;
}

#[derive(Parser, Debug)]
#[command(name = "impressions", version, about = "Bi-modal first-impression trait regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the N x 68 partition audio features of every manifest video (or one WAV) as CSV.
    ExtractAudioFeatures(ExtractArgs),
    /// Generate a deterministic synthetic dataset with a manifest.
    SynthData(SynthArgs),
    /// Train a model; writes the final checkpoint, interval checkpoints and the MSE curve.
    Train(TrainArgs),
    /// Predict traits by averaging k random frame combinations per video.
    Predict(PredictArgs),
    /// Score a prediction CSV against ground truth and print the report as JSON.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every layer and both downsized models.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON trainer config; keys mirror the training config fields, unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture, overriding the config [default: lstm]
    #[arg(long, value_parser = ["conv3d", "lstm"])]
    arch: Option<String>,
    /// Base seed, overriding the config [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Manifest CSV (video_id,frames_dir,audio_path[,e,a,c,n,o]).
    #[arg(long, required_unless_present = "audio", conflicts_with = "audio")]
    manifest: Option<PathBuf>,
    /// A single WAV file instead of a manifest.
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_videos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training manifest with ground-truth traits.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for checkpoints and the MSE curve.
    #[arg(long)]
    out: PathBuf,
    /// Epoch count, overriding the config [default: 500]
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output CSV (video_id,e,a,c,n,o).
    #[arg(long)]
    out: PathBuf,
    /// Frame combinations averaged per video.
    #[arg(long, default_value_t = 10)]
    k_combinations: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Prediction CSV (video_id,e,a,c,n,o).
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth CSV (video_id,e,a,c,n,o).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    targets: Option<PathBuf>,
    /// Take ground truth from a manifest instead.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// First seed of the random instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per layer.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Random instances per downsized model.
    #[arg(long, default_value_t = 2)]
    model_seeds: u64,
    /// Also write the reports as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures of a subcommand, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{failed} of {total} gradient checks failed")]
    GradCheck { failed: usize, total: usize },
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Core(Error::Io { .. }) => exit::IO,
            CliError::Core(
                Error::Malformed { .. } | Error::UnsupportedFormat { .. } | Error::Validation { .. },
            ) => exit::BAD_INPUT,
            CliError::Core(Error::Config(_) | Error::InvalidArgument(_)) => exit::CONFIG,
            CliError::Core(Error::Shape { .. }) => exit::SHAPE,
            CliError::GradCheck { .. } => exit::GRADCHECK_FAILED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let result = match cli.command {
        Command::ExtractAudioFeatures(a) => extract(a),
        Command::SynthData(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn resolve_config(args: &ConfigArgs, epochs: Option<usize>) -> CliResult<TrainerConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            TrainerConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainerConfig::default(),
    };
    if let Some(a) = &args.arch {
        cfg.architecture = a.parse::<Architecture>()?;
        if cfg.layout.as_ref().is_some_and(|l| l.architecture() != cfg.architecture) {
            cfg.layout = None;
        }
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn echo_config(command: &str, cfg: &TrainerConfig) {
    let json = serde_json::to_string(cfg).expect("config serializes");
    eprintln!("{command}: resolved config {json}");
}

fn format_row(id: &str, p: Option<usize>, f: &[f64; 68]) -> Vec<String> {
    let mut rec = vec![id.to_string()];
    if let Some(p) = p {
        rec.push(p.to_string());
    }
    rec.extend(f.iter().map(|v| format!("{v:.8e}")));
    rec
}

fn extract(a: ExtractArgs) -> CliResult<()> {
    let cfg = resolve_config(&a.config, None)?;
    echo_config("extract-audio-features", &cfg);
    let features = cfg.feature_config();
    let mut rows: Vec<(String, PartitionedAudioFeatures)> = Vec::new();
    if let Some(wav) = &a.audio {
        let clip = load_wav(wav)?;
        let id = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push((id, extract_features(&clip, &features)?));
    } else if let Some(m) = &a.manifest {
        for r in load_manifest(m)? {
            let clip = load_wav(&r.audio_path)?;
            rows.push((r.video_id, extract_features(&clip, &features)?));
        }
    }
    let csv_err = |e: csv::Error| Error::Malformed {
        path: a.out.clone(),
        detail: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&a.out).map_err(csv_err)?;
    let mut header = vec!["video_id".to_string(), "partition".to_string()];
    header.extend(PartitionedAudioFeatures::csv_header());
    w.write_record(&header).map_err(csv_err)?;
    for (id, f) in &rows {
        for (p, row) in f.rows().iter().enumerate() {
            w.write_record(format_row(id, Some(p), row)).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    eprintln!("wrote {} videos x {} partitions to {}", rows.len(), cfg.n_partitions, a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    eprintln!("synth-data: n_videos {} seed {}", a.n_videos, a.seed);
    let manifest = generate_synthetic_dataset(a.n_videos, a.seed, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn train_as<T: Real>(samples: &[VideoSample], cfg: &TrainerConfig, out: &Path) -> CliResult<()> {
    let outcome = trainer::train::<T>(samples, cfg, Some(out), |s| {
        eprintln!("epoch {:>4}  mse {:.6}  lr {:.6}", s.epoch, s.mse, s.learning_rate);
    })?;
    for p in &outcome.checkpoints {
        println!("{}", p.display());
    }
    println!("{}", out.join(MSE_CURVE_FILE).display());
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = resolve_config(&a.config, a.epochs)?;
    echo_config("train", &cfg);
    let samples = load_dataset(&a.manifest, &cfg.feature_config())?;
    match cfg.precision {
        Precision::F32 => train_as::<f32>(&samples, &cfg, &a.out),
        Precision::F64 => train_as::<f64>(&samples, &cfg, &a.out),
    }
}

fn predict_as<T: Real>(samples: &[VideoSample], cfg: &TrainerConfig, a: &PredictArgs) -> CliResult<()> {
    let (model, scaler) = load_checkpoint::<T>(&a.checkpoint, &cfg.model_config())?;
    let rows = predict_samples(samples, &model, &scaler, a.k_combinations, cfg.base_seed, cfg.modality)?;
    write_scores_csv(&a.out, &rows)?;
    eprintln!("wrote {} predictions to {}", rows.len(), a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let cfg = resolve_config(&a.config, None)?;
    if a.k_combinations == 0 {
        return Err(Error::InvalidArgument("--k-combinations must be >= 1".into()).into());
    }
    echo_config("predict", &cfg);
    eprintln!("predict: k_combinations {}", a.k_combinations);
    let samples = load_dataset(&a.manifest, &cfg.feature_config())?;
    match cfg.precision {
        Precision::F32 => predict_as::<f32>(&samples, &cfg, &a),
        Precision::F64 => predict_as::<f64>(&samples, &cfg, &a),
    }
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let targets: Vec<(String, TraitScores)> = match (&a.targets, &a.manifest) {
        (Some(t), _) => read_scores_csv(t)?,
        (None, Some(m)) => load_manifest(m)?
            .into_iter()
            .map(|r| {
                let t = r.traits.ok_or_else(|| Error::Validation {
                    path: m.clone(),
                    detail: format!("video {} has no ground truth", r.video_id),
                })?;
                Ok((r.video_id, t))
            })
            .collect::<impressions::Result<_>>()?,
        (None, None) => unreachable!("clap requires one of --targets/--manifest"),
    };
    let predictions = read_scores_csv(&a.predictions)?;
    let (t, p) = align_by_id(&targets, &predictions)?;
    let report = mean_average_accuracy(&t, &p)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(out) = &a.out {
        std::fs::write(out, format!("{json}\n")).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    eprintln!(
        "gradcheck: seeds {}..{} per layer, {} per model",
        a.seed,
        a.seed + a.seeds,
        a.model_seeds
    );
    let mut reports = verify::layer_suite(a.seed..a.seed + a.seeds);
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        for s in a.seed..a.seed + a.model_seeds {
            reports.push(verify::model(arch, s));
        }
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in &reports {
        let _ = writeln!(out, "{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    let _ = writeln!(out, "{} checks, {failed} failed", reports.len());
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(path, json).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    if failed > 0 {
        return Err(CliError::GradCheck {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}
