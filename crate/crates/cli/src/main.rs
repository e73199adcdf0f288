//! Command-line entry point binding the toolkit into reproducible batch
//! runs: `augment`, `compress`, `eval`, `stats`, and `validate`.
//!
//! Exit codes are stable: 0 success, 1 validation failure, 2 usage or
//! configuration error, 3 IO/codec error. Machine-readable canonical
//! JSON goes to stdout; logs and human tables go to stderr. Randomized
//! commands require an explicit seed; there are no wall-clock defaults.

use boxaug::canonical::Value;
use boxaug::compression::{compress_dataset, CompressionError};
use boxaug::dataset_io::{
    load_annotations, load_dataset, save_dataset, DatasetError, StorageFormat,
};
use boxaug::evaluation::{
    evaluate, format_report_table, load_detections, load_model_meta, report_to_canonical_value,
    EvalError, DEFAULT_IOU_THRESHOLD,
};
use boxaug::pipeline::{apply_pipeline, ParsedConfig, PipelineError, PipelineRun};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod manifest;
mod stats;

#[derive(Parser)]
#[command(
    name = "boxaug",
    version,
    about = "Bounding-box aware dataset augmentation, compression sweeps, and detection metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a seeded augmentation pipeline and materialize the result.
    Augment(AugmentArgs),
    /// Re-encode the dataset as JPEG at each quality level.
    Compress(CompressArgs),
    /// Score detector predictions against ground truth.
    Eval(EvalArgs),
    /// Class/box/object-count statistics for an annotation file.
    Stats(StatsArgs),
    /// Check an annotation file (and optionally its images).
    Validate(ValidateArgs),
}

#[derive(Args)]
struct AugmentArgs {
    /// Pipeline config (TOML; see the README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// COCO-style annotation JSON.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory the annotation file's image paths are relative to.
    #[arg(long)]
    images: PathBuf,
    /// Output directory (annotations.json, images/, provenance.json, run-manifest.json).
    #[arg(long)]
    out: PathBuf,
    /// Seed override; required when the config has no seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (output is identical for any value).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct CompressArgs {
    /// Comma-separated JPEG quality levels, e.g. 95,50,10.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<u8>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// Output directory; one q<level>/ subdirectory per level.
    #[arg(long)]
    out: PathBuf,
    /// Skip samples whose encode fails instead of aborting.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth annotation JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Detector results JSON: [{image_id, category_id, bbox, score}].
    #[arg(long)]
    dets: PathBuf,
    /// Model metadata JSON: {name, parameter_count_millions, inference_times_ms?}.
    #[arg(long)]
    meta: PathBuf,
    /// IoU match threshold.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Image directory; images are decoded and checked when given.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Treat every issue as fatal.
    #[arg(long)]
    strict: bool,
}

/// Failure classified by exit code.
enum CliError {
    Validation(String),
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Usage(m) | CliError::Io(m) => m,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::Codec { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::PoolTooSmall(_) => {
                CliError::Usage(e.to_string())
            }
            PipelineError::ImageOp(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CompressionError> for CliError {
    fn from(e: CompressionError) -> Self {
        match e {
            CompressionError::InvalidLevels => CliError::Usage(e.to_string()),
            CompressionError::Io { .. } | CompressionError::Codec { .. } => {
                CliError::Io(e.to_string())
            }
            CompressionError::Dataset(inner) => inner.into(),
            CompressionError::ExtentMismatch(..) => CliError::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse(); // clap exits with code 2 on usage errors
    let result = match cli.command {
        Command::Augment(args) => run_augment(args),
        Command::Compress(args) => run_compress(args),
        Command::Eval(args) => run_eval(args),
        Command::Stats(args) => run_stats(args),
        Command::Validate(args) => run_validate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn emit_report(report: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let mut json = report.to_json_string();
    json.push('\n');
    print!("{json}");
    if let Some(path) = out {
        std::fs::write(path, &json)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(n) => {
            if n == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_augment(args: AugmentArgs) -> Result<u8, CliError> {
    let config_text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let parsed = ParsedConfig::from_toml_str(&config_text).map_err(CliError::from)?;
    let config = parsed.resolve(args.seed).map_err(CliError::from)?;

    log::info!("loading dataset from {}", args.input.display());
    let loaded = load_dataset(&args.input, &args.images, true)?;
    let dataset = loaded.dataset;
    log::info!(
        "loaded {} samples, {} classes",
        dataset.len(),
        dataset.classes.len()
    );

    let run: PipelineRun = with_workers(args.workers, || apply_pipeline(&config, &dataset))??;
    log::info!("pipeline produced {} samples", run.dataset.len());

    let mut output = run.dataset;
    let manifest = save_dataset(&mut output, &args.out, StorageFormat::Png)?;

    let provenance = provenance_value(&run.provenance);
    let prov_path = args.out.join("provenance.json");
    let mut prov_json = provenance.to_json_string();
    prov_json.push('\n');
    std::fs::write(&prov_path, &prov_json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", prov_path.display())))?;

    let run_manifest = manifest::RunManifest {
        command: "augment",
        seed: Some(config.seed),
        inputs: vec![
            manifest::hash_input("annotations", &args.input)?,
            manifest::hash_input("config", &args.config)?,
        ],
        images_root: Some(args.images.clone()),
        config: Some(manifest::config_value(&config)),
        extra: vec![
            ("samples_in".into(), Value::UInt(dataset.len() as u64)),
            ("samples_out".into(), Value::UInt(output.len() as u64)),
        ],
    };
    let manifest_path = args.out.join("run-manifest.json");
    run_manifest.write(&manifest_path)?;

    let report = Value::object([
        ("command", Value::str("augment")),
        ("out_dir", Value::str(args.out.display().to_string())),
        ("samples_in", Value::UInt(dataset.len() as u64)),
        ("samples_out", Value::UInt(output.len() as u64)),
        (
            "files_written",
            Value::UInt(manifest.files.len() as u64 + 2),
        ),
        ("total_image_bytes", Value::UInt(manifest.total_bytes())),
        ("seed", Value::UInt(config.seed)),
    ]);
    emit_report(&report, None)?;
    Ok(0)
}

fn provenance_value(records: &[boxaug::pipeline::SampleProvenance]) -> Value {
    let mut sorted: Vec<_> = records.iter().collect();
    sorted.sort_by(|a, b| a.output_id.cmp(&b.output_id));
    Value::array(sorted.into_iter().map(|p| {
        Value::object([
            ("output_id", Value::str(&p.output_id)),
            (
                "source_ids",
                Value::array(p.source_ids.iter().map(Value::str)),
            ),
            ("total_draws", Value::UInt(p.total_draws())),
            (
                "events",
                Value::array(p.events.iter().map(|e| {
                    Value::object([
                        ("spec_index", Value::UInt(e.spec_index as u64)),
                        ("kind", Value::str(e.kind)),
                        ("fired", Value::Bool(e.fired)),
                        (
                            "note",
                            e.note.as_ref().map(Value::str).unwrap_or(Value::Null),
                        ),
                        ("draws", Value::UInt(e.draws)),
                    ])
                })),
            ),
        ])
    }))
}

fn run_compress(args: CompressArgs) -> Result<u8, CliError> {
    if args.levels.is_empty() {
        return Err(CliError::Usage(
            "--levels requires at least one quality level".into(),
        ));
    }
    log::info!("loading dataset from {}", args.input.display());
    let dataset = load_dataset(&args.input, &args.images, true)?.dataset;

    let (variants, report) = with_workers(args.workers, || {
        compress_dataset(&dataset, &args.levels, &args.out, !args.lenient)
    })??;
    eprint!("{}", report.format_table());

    let report_value = report.to_canonical_value();
    let report_path = args.out.join("compression-report.json");
    let mut json = report_value.to_json_string();
    json.push('\n');
    std::fs::write(&report_path, &json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", report_path.display())))?;

    let run_manifest = manifest::RunManifest {
        command: "compress",
        seed: None,
        inputs: vec![manifest::hash_input("annotations", &args.input)?],
        images_root: Some(args.images.clone()),
        config: Some(Value::object([(
            "levels",
            Value::array(args.levels.iter().map(|&q| Value::UInt(q as u64))),
        )])),
        extra: vec![(
            "variants".into(),
            Value::array(
                variants
                    .iter()
                    .map(|v| Value::str(v.out_dir.display().to_string())),
            ),
        )],
    };
    run_manifest.write(&args.out.join("run-manifest.json"))?;

    emit_report(&report_value, None)?;
    Ok(0)
}

fn run_eval(args: EvalArgs) -> Result<u8, CliError> {
    if !(0.0..=1.0).contains(&args.iou) {
        return Err(CliError::Usage(format!(
            "--iou must be in [0, 1], got {}",
            args.iou
        )));
    }
    let gt = load_annotations(&args.gt, Path::new(""))?;
    let detections = load_detections(&args.dets, &gt)?;
    let meta = load_model_meta(&args.meta)?;
    let report = evaluate(&gt, &detections, &meta, args.iou)?;
    eprint!("{}", format_report_table(&report, &gt));
    emit_report(
        &report_to_canonical_value(&report, &gt),
        args.out.as_deref(),
    )?;
    Ok(0)
}

fn run_stats(args: StatsArgs) -> Result<u8, CliError> {
    let dataset = load_annotations(&args.input, Path::new(""))?;
    let report = stats::dataset_stats(&dataset);
    emit_report(&report, args.out.as_deref())?;
    Ok(0)
}

fn run_validate(args: ValidateArgs) -> Result<u8, CliError> {
    let outcome = match &args.images {
        Some(images) => {
            if args.strict {
                match load_dataset(&args.input, images, true) {
                    Ok(loaded) => Ok((loaded.dataset.len(), Vec::new())),
                    Err(DatasetError::Validation { issues }) => {
                        Err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>())
                    }
                    Err(other) => return Err(other.into()),
                }
            } else {
                match load_dataset(&args.input, images, false) {
                    Ok(loaded) => Ok((
                        loaded.dataset.len(),
                        loaded.issues.iter().map(|i| i.to_string()).collect(),
                    )),
                    Err(DatasetError::Validation { issues }) => {
                        Err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>())
                    }
                    Err(other) => return Err(other.into()),
                }
            }
        }
        None => match load_annotations(&args.input, Path::new("")) {
            Ok(ds) => Ok((ds.len(), Vec::new())),
            Err(DatasetError::Validation { issues }) => {
                Err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>())
            }
            Err(other) => return Err(other.into()),
        },
    };

    let (valid, samples, issues) = match outcome {
        Ok((n, issues)) => (issues.is_empty(), n, issues),
        Err(issues) => (false, 0, issues),
    };
    let report = Value::object([
        ("command", Value::str("validate")),
        ("valid", Value::Bool(valid)),
        ("samples", Value::UInt(samples as u64)),
        ("issues", Value::array(issues.iter().map(Value::str))),
    ]);
    emit_report(&report, None)?;
    Ok(if valid { 0 } else { 1 })
}
