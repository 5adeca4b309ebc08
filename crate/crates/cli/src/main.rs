//! Command-line front end: dataset generation, pre-training, zero-shot
//! evaluation and prediction, and gradient verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use wifo::channel::{
    generate_dataset_with_clean, parse_scenario, read_dataset, write_atomic, write_dataset, Axis, CsiGrid, DatasetMeta,
};
use wifo::eval::{evaluate_dataset, reports_to_csv, zero_pad_predict, EvalOptions, NmseAveraging, PredictionTask};
use wifo::model::{load_checkpoint, save_checkpoint, ModelConfig, Parameters};
use wifo::train::{check_gradients, pretrain, GradCheckOptions, LossReport, StepRecord, TrainConfig, TrainObserver, TrainSet};
use wifo::{Real, WifoError};

#[derive(Parser)]
#[command(name = "wifo", version, about = "Masked-autoencoder foundation model for 3D CSI")]
struct Cli {
    /// Master seed. Overrides the seed in a scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 gives bit-reproducible runs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a standardized CSI dataset from a scenario file.
    Generate(GenerateArgs),
    /// Pre-train a model on one or more datasets.
    Pretrain(PretrainArgs),
    /// Score zero-shot prediction against trivial baselines.
    Evaluate(EvaluateArgs),
    /// Write predicted slabs for every sample of a dataset.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    samples: usize,
    /// Also write the noise-free samples, standardized with the same statistics.
    #[arg(long)]
    clean_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PretrainArgs {
    #[arg(long = "data", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = "tiny")]
    model: String,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    /// Warmup length in epochs; defaults to 5/200 of the run.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    weight_decay: f64,
    /// Save the checkpoint every N epochs (0: only at the end).
    #[arg(long, default_value_t = 10)]
    checkpoint_every: usize,
    #[arg(long)]
    out: PathBuf,
    /// Loss log; defaults to `<out>.losses.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum TaskArg {
    Time,
    #[value(alias = "freq")]
    Frequency,
    Both,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "data", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TaskArg::Both)]
    task: TaskArg,
    /// Known prefix along the task axis; defaults to half the axis.
    #[arg(long)]
    known: Option<usize>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Ratio of pooled sums instead of the mean of per-sample NMSE.
    #[arg(long)]
    pooled: bool,
    /// Score against noise-free targets (one file per `--data`, same order).
    #[arg(long = "clean-targets", num_args = 1..)]
    clean_targets: Vec<PathBuf>,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Time)]
    task: TaskArg,
    #[arg(long)]
    known: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value = "micro")]
    model: String,
    /// Test hook: scale the analytic gradient of this tensor by 1.5.
    #[arg(long)]
    corrupt: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    argv: Vec<String>,
    precision: Precision,
    threads: Option<usize>,
    seeds: Value,
    config: Value,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    stats: Value,
    duration_s: f64,
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

struct Ctx {
    precision: Precision,
    threads: Option<usize>,
    seed: Option<u64>,
    start: Instant,
}

impl Ctx {
    #[allow(clippy::too_many_arguments)]
    fn write_manifest(
        &self,
        command: &'static str,
        anchor: &Path,
        seeds: Value,
        config: Value,
        inputs: &[&Path],
        outputs: &[&Path],
        stats: Value,
    ) -> Result<()> {
        let manifest = RunManifest {
            command,
            argv: std::env::args().collect(),
            precision: self.precision,
            threads: self.threads,
            seeds,
            config,
            inputs: inputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?,
            stats,
            duration_s: self.start.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_atomic(&manifest_path(anchor), text.as_bytes())?;
        Ok(())
    }
}

fn dataset_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load(path: &Path) -> Result<(Vec<CsiGrid>, DatasetMeta)> {
    read_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn cmd_generate(ctx: &Ctx, args: &GenerateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut scenario = parse_scenario(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = ctx.seed {
        scenario.seed = seed;
    }
    let (noisy, clean, meta) = generate_dataset_with_clean(&scenario, args.samples)?;
    write_dataset(&args.out, &noisy, &meta)?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(path) = &args.clean_out {
        write_dataset(path, &clean, &meta)?;
        outputs.push(path.as_path());
    }
    let raw_power = meta.std * meta.std + meta.mean.norm_sqr();
    println!(
        "wrote {} samples of shape {:?} to {} (mean {:.4e}{:+.4e}j, std {:.4e})",
        args.samples,
        meta.shape,
        args.out.display(),
        meta.mean.re,
        meta.mean.im,
        meta.std
    );
    ctx.write_manifest(
        "generate",
        &args.out,
        json!({ "scenario": scenario.seed }),
        json!({ "scenario": scenario, "args": args }),
        &[args.config.as_path()],
        &outputs,
        json!({
            "shape": meta.shape,
            "num_samples": meta.num_samples,
            "mean": [meta.mean.re, meta.mean.im],
            "std": meta.std,
            "raw_mean_power": raw_power,
        }),
    )
}

struct CliObserver<'a> {
    out: &'a Path,
    log: &'a Path,
    every: usize,
    lines: String,
}

impl<T: Real> TrainObserver<T> for CliObserver<'_> {
    fn on_step(&mut self, record: &StepRecord) -> wifo::Result<()> {
        let line = serde_json::to_string(record).map_err(|e| WifoError::Format(e.to_string()))?;
        self.lines.push_str(&line);
        self.lines.push('\n');
        Ok(())
    }

    fn on_epoch_end(&mut self, epoch: usize, summary: &LossReport, params: &Parameters<T>) -> wifo::Result<()> {
        eprintln!(
            "epoch {:>4}  random {:.5}  time {:.5}  frequency {:.5}  mean {:.5}",
            epoch, summary.random, summary.time, summary.frequency, summary.mean
        );
        write_atomic(self.log, self.lines.as_bytes())?;
        if self.every > 0 && (epoch + 1) % self.every == 0 {
            save_checkpoint(self.out, params)?;
        }
        Ok(())
    }
}

fn cmd_pretrain(ctx: &Ctx, args: &PretrainArgs) -> Result<()> {
    match ctx.precision {
        Precision::F32 => run_pretrain::<f32>(ctx, args),
        Precision::F64 => run_pretrain::<f64>(ctx, args),
    }
}

fn run_pretrain<T: Real>(ctx: &Ctx, args: &PretrainArgs) -> Result<()> {
    let model = ModelConfig::from_preset(&args.model)?;
    let mut config = TrainConfig::scaled_to(args.epochs);
    config.batch_size = args.batch_size;
    config.base_lr = args.lr;
    config.weight_decay = args.weight_decay;
    if let Some(w) = args.warmup {
        config.warmup_epochs = w;
    }
    config.seed = ctx.seed.unwrap_or(0);
    config.grad_check_mode = matches!(ctx.precision, Precision::F64);

    let mut sets = Vec::new();
    for path in &args.data {
        let (samples, _) = load(path)?;
        sets.push(TrainSet {
            id: dataset_id(path),
            samples,
        });
    }
    let log = args.log.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".losses.jsonl");
        args.out.with_file_name(name)
    });
    let mut observer = CliObserver {
        out: &args.out,
        log: &log,
        every: args.checkpoint_every,
        lines: String::new(),
    };
    let (params, summary) = pretrain::<T>(&sets, &model, &config, &mut observer)?;
    save_checkpoint(&args.out, &params)?;
    write_atomic(&log, observer.lines.as_bytes())?;
    println!("trained {} steps; checkpoint {}", summary.steps, args.out.display());

    let inputs: Vec<&Path> = args.data.iter().map(PathBuf::as_path).collect();
    ctx.write_manifest(
        "pretrain",
        &args.out,
        json!({ "train": config.seed }),
        json!({ "model": model, "train": config, "args": args }),
        &inputs,
        &[args.out.as_path(), log.as_path()],
        json!({ "steps": summary.steps, "final_epoch": summary.epochs.last() }),
    )
}

fn tasks_for(arg: TaskArg, known: Option<usize>, shape: (usize, usize, usize)) -> Vec<PredictionTask> {
    let axes: &[Axis] = match arg {
        TaskArg::Time => &[Axis::Time],
        TaskArg::Frequency => &[Axis::Frequency],
        TaskArg::Both => &[Axis::Time, Axis::Frequency],
    };
    axes.iter()
        .map(|&axis| {
            let mut task = PredictionTask::half(axis, shape);
            if let Some(k) = known {
                task.known = k;
            }
            task
        })
        .collect()
}

fn cmd_evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<()> {
    match ctx.precision {
        Precision::F32 => run_evaluate(ctx, args, &load_checkpoint::<f32>(&args.checkpoint)?),
        Precision::F64 => run_evaluate(ctx, args, &load_checkpoint::<f64>(&args.checkpoint)?),
    }
}

fn run_evaluate<T: Real>(ctx: &Ctx, args: &EvaluateArgs, params: &Parameters<T>) -> Result<()> {
    if !args.clean_targets.is_empty() && args.clean_targets.len() != args.data.len() {
        bail!(WifoError::InvalidArgument(format!(
            "{} --clean-targets files for {} --data files",
            args.clean_targets.len(),
            args.data.len()
        )));
    }
    let averaging = if args.pooled { NmseAveraging::Pooled } else { NmseAveraging::PerSample };
    let mut reports = Vec::new();
    for (i, path) in args.data.iter().enumerate() {
        let (samples, meta) = load(path)?;
        let clean = match args.clean_targets.get(i) {
            Some(p) => Some(load(p)?.0),
            None => None,
        };
        let options = EvalOptions {
            averaging,
            clean_targets: clean.as_deref(),
        };
        for task in tasks_for(args.task, args.known, meta.shape) {
            let report = evaluate_dataset(params, &dataset_id(path), &samples, task, &options)?;
            println!(
                "{:<20} {:<9} known {:>3}  model {:.4e}  zero {:.4e}  repeat-last {:.4e}",
                report.dataset_id,
                task.axis.name(),
                task.known,
                report.nmse_model,
                report.nmse_zero,
                report.nmse_repeat_last
            );
            reports.push(report);
        }
    }
    let text = serde_json::to_string_pretty(&json!({ "reports": reports }))?;
    write_atomic(&args.report, text.as_bytes())?;
    let mut outputs = vec![args.report.as_path()];
    if let Some(csv) = &args.csv {
        write_atomic(csv, reports_to_csv(&reports).as_bytes())?;
        outputs.push(csv.as_path());
    }
    let mut inputs: Vec<&Path> = vec![args.checkpoint.as_path()];
    inputs.extend(args.data.iter().map(PathBuf::as_path));
    inputs.extend(args.clean_targets.iter().map(PathBuf::as_path));
    ctx.write_manifest(
        "evaluate",
        &args.report,
        Value::Null,
        json!({ "args": args, "model": params.config }),
        &inputs,
        &outputs,
        json!({ "num_reports": reports.len() }),
    )
}

fn cmd_predict(ctx: &Ctx, args: &PredictArgs) -> Result<()> {
    match ctx.precision {
        Precision::F32 => run_predict(ctx, args, &load_checkpoint::<f32>(&args.checkpoint)?),
        Precision::F64 => run_predict(ctx, args, &load_checkpoint::<f64>(&args.checkpoint)?),
    }
}

fn run_predict<T: Real>(ctx: &Ctx, args: &PredictArgs, params: &Parameters<T>) -> Result<()> {
    if args.task == TaskArg::Both {
        bail!(WifoError::InvalidArgument("predict takes a single task: time or frequency".into()));
    }
    let (samples, meta) = load(&args.data)?;
    let task = tasks_for(args.task, args.known, meta.shape)[0];
    let predicted = samples
        .iter()
        .map(|grid| {
            let known = grid.slab(task.axis, 0..task.known)?;
            zero_pad_predict(params, &known, task, meta.shape)
        })
        .collect::<wifo::Result<Vec<_>>>()?;
    let out_meta = DatasetMeta {
        config: None,
        shape: predicted[0].shape(),
        num_samples: predicted.len(),
        mean: meta.mean,
        std: meta.std,
        standardized: meta.standardized,
    };
    write_dataset(&args.out, &predicted, &out_meta)?;
    println!(
        "wrote {} predicted slabs of shape {:?} to {}",
        predicted.len(),
        out_meta.shape,
        args.out.display()
    );
    ctx.write_manifest(
        "predict",
        &args.out,
        Value::Null,
        json!({ "args": args, "task": task }),
        &[args.checkpoint.as_path(), args.data.as_path()],
        &[args.out.as_path()],
        json!({ "shape": out_meta.shape }),
    )
}

/// Returns whether the check passed.
fn cmd_gradcheck(ctx: &Ctx, args: &GradcheckArgs) -> Result<bool> {
    let model = ModelConfig::from_preset(&args.model)?;
    let opts = GradCheckOptions {
        seed: ctx.seed.unwrap_or(0),
        corrupt_tensor: args.corrupt.clone(),
        ..GradCheckOptions::default()
    };
    let report = check_gradients(&model, &opts)?;
    for g in &report.groups {
        println!("{:<28} {:>6}  rel {:.3e}  max-abs {:.3e}", g.name, g.numel, g.rel_error, g.max_abs_error);
    }
    println!(
        "worst: {} rel {:.3e} (tolerance {:.0e}) -> {}",
        report.worst.name,
        report.worst.rel_error,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(path) = &args.report {
        write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        ctx.write_manifest(
            "gradcheck",
            path,
            json!({ "params": opts.seed }),
            json!({ "model": model, "args": args, "step": opts.step }),
            &[],
            &[path.as_path()],
            json!({ "passed": report.passed, "worst": report.worst }),
        )?;
    }
    Ok(report.passed)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx {
        precision: cli.precision,
        threads: cli.threads,
        seed: cli.seed,
        start: Instant::now(),
    };
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a)?,
        Command::Pretrain(a) => cmd_pretrain(&ctx, a)?,
        Command::Evaluate(a) => cmd_evaluate(&ctx, a)?,
        Command::Predict(a) => cmd_predict(&ctx, a)?,
        Command::Gradcheck(a) => {
            if !cmd_gradcheck(&ctx, a)? {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<WifoError>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
