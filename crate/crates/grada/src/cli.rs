//! Command-line front end: dataset generation, the three training
//! protocols, evaluation tables, latent projection export, and λ-schedule
//! inspection.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 runtime
//! failure, 2 usage error (bad flags or flag combinations).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    generate_synthetic, load_datasets, read_json, save_datasets, write_json, DatasetMeta,
    DomainDataset, ShiftPreset, Split,
};
use crate::error::Error;
use crate::format;
use crate::model::ModelConfig;
use crate::projection::{project_latent, write_projection_csv};
use crate::schedule::{factor, ScheduleState};
use crate::train::{
    evaluate, run_protocol, write_metrics_csv, MetricsRecord, Protocol, TrainConfig,
};

const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "grada", version, about = "Domain-adversarial training on synthetic multi-domain data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset directory.
    GenData(GenDataArgs),
    /// Run a training protocol and write metrics, checkpoint, manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint per domain and print the results table.
    Eval(EvalArgs),
    /// Export 2-D latent coordinates for every sample as CSV.
    Project(ProjectArgs),
    /// Print the λ factor table for a schedule.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Number of domains.
    #[arg(long, default_value_t = 4)]
    domains: usize,
    /// Samples per class, one value or a per-domain comma list.
    #[arg(long, default_value = "20")]
    per_class: String,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Appearance shift preset: default | identity.
    #[arg(long, default_value = "default")]
    shift: String,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training protocol: baseline | finetune | da.
    #[arg(long)]
    protocol: Option<String>,
    /// Dataset directory (from gen-data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for metrics.csv, checkpoint.grda, manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file mirroring the flags; flags override it. A train
    /// manifest is accepted too.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<u64>,
    /// Per-domain mini-batch size m.
    #[arg(long)]
    batch_per_domain: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    source_domain: Option<usize>,
    /// Active training domains, comma list (default: all in the data).
    #[arg(long)]
    domains: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    clamp: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// Checkpoint to start from (required for finetune).
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the rows as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split to evaluate: val | train.
    #[arg(long, default_value = "val")]
    split: String,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Total steps N.
    #[arg(long)]
    steps: u64,
    /// Also print the clamp ceiling column.
    #[arg(long)]
    clamp: Option<f64>,
    /// Number of table rows.
    #[arg(long, default_value_t = 11)]
    rows: u64,
}

/// Errors split by exit code.
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses the process arguments, runs the selected command, and returns
/// the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors with exit code 2, --help/--version
            // with 0.
            e.exit();
        }
    };
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Project(args) => cmd_project(args),
        Command::Schedule(args) => cmd_schedule(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

// ── gen-data ────────────────────────────────────────────────────────

fn cmd_gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let per_class = parse_usize_list(&args.per_class)
        .map_err(|e| usage(format!("--per-class: {e}")))?;
    let per_class = match per_class.len() {
        1 => vec![per_class[0]; args.domains],
        n if n == args.domains => per_class,
        n => {
            return Err(usage(format!(
                "--per-class names {n} domains, --domains says {}",
                args.domains
            )))
        }
    };
    let preset = ShiftPreset::parse(&args.shift).map_err(|e| usage(e.to_string()))?;

    if args.out.exists() && args.out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) && !args.force
    {
        return Err(usage(format!(
            "output directory {} is not empty (pass --force to overwrite)",
            args.out.display()
        )));
    }

    let shifts = preset.shifts(args.domains);
    let datasets =
        generate_synthetic(args.domains, 7, &per_class, args.size, &shifts, args.seed)?;
    let meta = DatasetMeta {
        format_version: format::FORMAT_VERSION,
        num_domains: args.domains,
        num_classes: 7,
        image_size: args.size,
        seed: args.seed,
        shift_preset: preset.name().to_string(),
        per_class,
    };
    save_datasets(&args.out, &datasets, &meta, &shifts)?;
    for ds in &datasets {
        println!(
            "domain{}: {} samples ({} train / {} val)",
            ds.domain_label,
            ds.len(),
            ds.train_indices.len(),
            ds.val_indices.len()
        );
    }
    println!("wrote dataset to {}", args.out.display());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────

/// The JSON config-file / manifest-config shape: every field of a run,
/// with defaults materialized when written back out.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainFileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_per_domain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_domain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_domains: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelOverrides>,
}

/// Optional model-topology overrides; sizes tied to the data (input size,
/// class and domain counts) always come from the dataset itself.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ModelOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv_channels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tap_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FormatVersions {
    checkpoint: u32,
    metrics_schema: u32,
    dataset: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct Timing {
    started_unix_ms: u64,
    duration_ms: u64,
}

/// Written next to every train run's artifacts; feeding it back through
/// `--config` reproduces the run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    command: String,
    seed: u64,
    config: TrainFileConfig,
    model: ModelConfig,
    artifacts: BTreeMap<String, String>,
    format_versions: FormatVersions,
    config_fingerprint: String,
    timing: Timing,
}

/// Manifest files carry the config under a `config` key; plain config
/// files are the config itself.
fn load_file_config(path: &Path) -> Result<TrainFileConfig, CliError> {
    let value: serde_json::Value =
        read_json(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    let config_value = match value.get("config") {
        Some(inner) if value.get("command").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(config_value)
        .map_err(|e| usage(format!("--config {}: {e}", path.display())))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let started = SystemTime::now();
    let wall = Instant::now();

    let mut file = match &args.config {
        Some(path) => load_file_config(path)?,
        None => TrainFileConfig::default(),
    };
    // Flags override the file.
    if args.protocol.is_some() {
        file.protocol = args.protocol.clone();
    }
    if args.data.is_some() {
        file.data = args.data.clone();
    }
    if args.out.is_some() {
        file.out = args.out.clone();
    }
    if args.epochs.is_some() {
        file.epochs = args.epochs;
    }
    if args.batch_per_domain.is_some() {
        file.batch_per_domain = args.batch_per_domain;
    }
    if args.lr.is_some() {
        file.learning_rate = args.lr;
    }
    if args.source_domain.is_some() {
        file.source_domain = args.source_domain;
    }
    if let Some(list) = &args.domains {
        file.active_domains =
            Some(parse_usize_list(list).map_err(|e| usage(format!("--domains: {e}")))?);
    }
    if args.alpha.is_some() {
        file.alpha = args.alpha;
    }
    if args.clamp.is_some() {
        file.clamp = args.clamp;
    }
    if args.seed.is_some() {
        file.seed = args.seed;
    }
    if args.eval_every.is_some() {
        file.eval_every = args.eval_every;
    }
    if args.init_checkpoint.is_some() {
        file.init_checkpoint = args.init_checkpoint.clone();
    }

    let protocol_name = file.protocol.clone().ok_or_else(|| usage("--protocol is required"))?;
    let protocol = Protocol::parse(&protocol_name).map_err(|e| usage(e.to_string()))?;
    let data_dir = file.data.clone().ok_or_else(|| usage("--data is required"))?;
    let out_dir = file.out.clone().ok_or_else(|| usage("--out is required"))?;
    if protocol == Protocol::Finetune && file.init_checkpoint.is_none() {
        return Err(usage("--protocol finetune requires --init-checkpoint"));
    }
    if protocol == Protocol::Finetune {
        match &file.active_domains {
            Some(domains) if domains.len() == 1 => {}
            Some(_) => return Err(usage("finetune retrains on a single target domain; pass --domains with one id")),
            None => return Err(usage("finetune requires --domains naming the target domain")),
        }
    }

    // From here on failures are runtime failures.
    let (meta, datasets) = load_datasets(&data_dir)?;

    let active_domains = file
        .active_domains
        .clone()
        .unwrap_or_else(|| (0..meta.num_domains).collect());

    let init = match &file.init_checkpoint {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };

    let model_config = match &init {
        Some(ckpt) => {
            let c = &ckpt.model_config;
            if c.input_size != meta.image_size
                || c.num_classes != meta.num_classes
                || c.num_domains != meta.num_domains
            {
                return Err(CliError::Runtime(Error::dim(
                    "train",
                    format!(
                        "checkpoint model ({}px, {} classes, {} domains) does not fit data ({}px, {} classes, {} domains)",
                        c.input_size, c.num_classes, c.num_domains,
                        meta.image_size, meta.num_classes, meta.num_domains
                    ),
                )));
            }
            c.clone()
        }
        None => {
            let defaults =
                ModelConfig::default_for(meta.image_size, meta.num_classes, meta.num_domains)?;
            let overrides = file.model.clone().unwrap_or_default();
            ModelConfig {
                conv_channels: overrides
                    .conv_channels
                    .unwrap_or_else(|| defaults.conv_channels.clone()),
                tap_width: overrides.tap_width.unwrap_or(defaults.tap_width),
                hidden_width: overrides.hidden_width.unwrap_or(defaults.hidden_width),
                leaky_slope: overrides.leaky_slope.unwrap_or(defaults.leaky_slope),
                ..defaults
            }
        }
    };

    let train_config = TrainConfig {
        protocol,
        epochs: file.epochs.unwrap_or(30),
        batch_per_domain: file.batch_per_domain.unwrap_or(4),
        learning_rate: file.learning_rate.unwrap_or(1e-2),
        source_domain: file.source_domain.unwrap_or(0),
        active_domains,
        alpha: file.alpha.unwrap_or(10.0),
        clamp: file.clamp.unwrap_or(5.0),
        seed: file.seed.unwrap_or(0),
        eval_every: file.eval_every.unwrap_or(1),
    };
    train_config.validate(meta.num_domains)?;

    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
    let result = run_protocol(&model_config, &train_config, &datasets, init)?;

    let metrics_path = out_dir.join("metrics.csv");
    let checkpoint_path = out_dir.join("checkpoint.grda");
    let manifest_path = out_dir.join("manifest.json");
    write_metrics_csv(&metrics_path, &result.metrics)?;
    save_checkpoint(&result.checkpoint, &checkpoint_path)?;

    // Resolved config: everything materialized so the manifest replays.
    let resolved = TrainFileConfig {
        protocol: Some(protocol.name().to_string()),
        data: Some(data_dir.clone()),
        out: Some(out_dir.clone()),
        epochs: Some(train_config.epochs),
        batch_per_domain: Some(train_config.batch_per_domain),
        learning_rate: Some(train_config.learning_rate),
        source_domain: Some(train_config.source_domain),
        active_domains: Some(train_config.active_domains.clone()),
        alpha: Some(train_config.alpha),
        clamp: Some(train_config.clamp),
        seed: Some(train_config.seed),
        eval_every: Some(train_config.eval_every),
        init_checkpoint: file.init_checkpoint.clone(),
        model: Some(ModelOverrides {
            conv_channels: Some(model_config.conv_channels.clone()),
            tap_width: Some(model_config.tap_width),
            hidden_width: Some(model_config.hidden_width),
            leaky_slope: Some(model_config.leaky_slope),
        }),
    };
    let manifest = RunManifest {
        command: "train".to_string(),
        seed: train_config.seed,
        config: resolved,
        model: model_config.clone(),
        artifacts: BTreeMap::from([
            ("metrics_csv".to_string(), metrics_path.display().to_string()),
            ("checkpoint".to_string(), checkpoint_path.display().to_string()),
        ]),
        format_versions: FormatVersions {
            checkpoint: format::FORMAT_VERSION,
            metrics_schema: METRICS_SCHEMA_VERSION,
            dataset: meta.format_version,
        },
        config_fingerprint: format!("{:016x}", train_config.fingerprint()),
        timing: Timing {
            started_unix_ms: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            duration_ms: wall.elapsed().as_millis() as u64,
        },
    };
    write_json(&manifest_path, &manifest)?;

    if let Some(last) = result.metrics.last() {
        println!(
            "finished {} after {} epochs; final epoch {} evaluated over {} domains",
            protocol.name(),
            train_config.epochs,
            last.epoch,
            datasets.len()
        );
    }
    println!("metrics:    {}", metrics_path.display());
    println!("checkpoint: {}", checkpoint_path.display());
    println!("manifest:   {}", manifest_path.display());
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────

fn parse_split(name: &str) -> Result<Split, CliError> {
    match name {
        "val" => Ok(Split::Val),
        "train" => Ok(Split::Train),
        other => Err(usage(format!("unknown split {other:?} (expected val or train)"))),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let (meta, datasets) = load_datasets(&args.data)?;
    check_checkpoint_fits_data(&ckpt.model_config, &meta)?;

    let records = eval_records(&ckpt, &datasets, split)?;
    println!("domain  split  accuracy  clf_loss  dmn_loss");
    for r in &records {
        println!(
            "{:>6}  {:>5}  {:>8.4}  {:>8.4}  {:>8.4}",
            r.domain, r.split, r.accuracy, r.clf_loss, r.dmn_loss
        );
    }
    if let Some(out) = &args.out {
        write_metrics_csv(out, &records)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Per-domain evaluation rows for a checkpoint, labeled with the epoch
/// and λ the producing run logged last.
fn eval_records(
    ckpt: &crate::checkpoint::Checkpoint,
    datasets: &[DomainDataset],
    split: Split,
) -> Result<Vec<MetricsRecord>, Error> {
    let lambda = if Protocol::from_code(ckpt.protocol_code)? == Protocol::Da {
        factor(&ckpt.schedule)?
    } else {
        0.0
    };
    datasets
        .iter()
        .map(|ds| {
            evaluate(
                &ckpt.model_config,
                &ckpt.params,
                ds,
                split,
                ckpt.epochs_completed,
                lambda,
            )
        })
        .collect()
}

fn check_checkpoint_fits_data(config: &ModelConfig, meta: &DatasetMeta) -> Result<(), CliError> {
    if config.input_size != meta.image_size
        || config.num_classes != meta.num_classes
        || config.num_domains != meta.num_domains
    {
        return Err(CliError::Runtime(Error::dim(
            "eval",
            format!(
                "checkpoint model ({}px, {} classes, {} domains) does not fit data ({}px, {} classes, {} domains)",
                config.input_size, config.num_classes, config.num_domains,
                meta.image_size, meta.num_classes, meta.num_domains
            ),
        )));
    }
    Ok(())
}

// ── project ─────────────────────────────────────────────────────────

fn cmd_project(args: ProjectArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let (meta, datasets) = load_datasets(&args.data)?;
    check_checkpoint_fits_data(&ckpt.model_config, &meta)?;
    let samples: Vec<_> = datasets.iter().flat_map(|d| d.samples.iter().cloned()).collect();
    let projection = project_latent(&ckpt.model_config, &ckpt.params, &samples)?;
    if projection.degenerate {
        eprintln!("warning: latents are rank-deficient; projection is all zeros");
    }
    write_projection_csv(&args.out, &projection)?;
    println!("wrote {} rows to {}", projection.points.len(), args.out.display());
    Ok(())
}

// ── schedule ────────────────────────────────────────────────────────

fn cmd_schedule(args: ScheduleArgs) -> Result<(), CliError> {
    if args.steps == 0 {
        return Err(usage("--steps must be ≥ 1"));
    }
    if args.rows < 2 {
        return Err(usage("--rows must be ≥ 2"));
    }
    if !args.alpha.is_finite() || args.alpha <= 0.0 {
        return Err(usage(format!("--alpha must be positive, got {}", args.alpha)));
    }
    if let Some(clamp) = args.clamp {
        if !clamp.is_finite() || clamp <= 0.0 {
            return Err(usage(format!("--clamp must be positive, got {clamp}")));
        }
    }
    match args.clamp {
        Some(_) => println!("n,n_over_N,lambda,ceiling"),
        None => println!("n,n_over_N,lambda"),
    }
    for i in 0..args.rows {
        // Evenly spaced over [0, N], endpoints included.
        let n = (i as u128 * args.steps as u128 / (args.rows - 1) as u128) as u64;
        let state = ScheduleState {
            step: n,
            total_steps: args.steps,
            alpha: args.alpha,
            clamp: args.clamp.unwrap_or(1.0),
        };
        let lambda = factor(&state).map_err(CliError::from)?;
        match args.clamp {
            Some(clamp) => println!("{n},{},{lambda},{}", n as f64 / args.steps as f64, clamp * lambda),
            None => println!("{n},{},{lambda}", n as f64 / args.steps as f64),
        }
    }
    Ok(())
}

// ── shared helpers ──────────────────────────────────────────────────

fn parse_usize_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|e| format!("{part:?}: {e}")))
        .collect()
}
