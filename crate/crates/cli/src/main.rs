//! `coral-cloze`: train, evaluate and run the cloze-filler scoring model.
//!
//! Exit codes: 0 on success, 2 for validation/configuration/usage errors,
//! 3 for numeric failures. All diagnostics go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coral_cloze_core::commands::{
    cmd_eval, cmd_gradcheck, cmd_predict, cmd_train, EvalOptions, GradCheckConfig,
};
use coral_cloze_core::config::{SelectMetric, TrainConfig, TrainConfigPatch};
use coral_cloze_core::encoder::PoolingMode;
use coral_cloze_core::error::{Error, Result};
use coral_cloze_core::ordinal::BinningMode;

#[derive(Parser)]
#[command(
    name = "coral-cloze",
    version,
    about = "Ordinal multi-task scoring of cloze-task fillers",
    after_help = "The CORAL_CLOZE_THREADS environment variable caps internal parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the selected checkpoint plus a run log.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and write a predictions TSV.
    Predict(PredictArgs),
    /// Compare a predictions file against gold labels.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training data TSV.
    #[arg(long)]
    train: PathBuf,
    /// Dev data TSV (used for per-epoch evaluation and model selection).
    #[arg(long)]
    dev: PathBuf,
    /// Flat key=value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint output path; the run log goes to `<out>.log`.
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    /// Precomputed-embedding file replacing the hashing featurizer.
    #[arg(long)]
    emb: Option<PathBuf>,

    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate for the cosine schedule.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    /// Score binning: round or floor.
    #[arg(long)]
    binning: Option<BinningMode>,
    /// Pooling: concat or filler_only.
    #[arg(long)]
    pooling: Option<PoolingMode>,
    /// Featurizer dimension (power of two).
    #[arg(long)]
    d_e: Option<usize>,
    /// Projection width (defaults to d_e / 2).
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    hash_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fold dev into training (final-epoch checkpoint is kept).
    #[arg(long)]
    merge_dev: bool,
    /// Checkpoint selection metric: spearman or accuracy.
    #[arg(long)]
    select: Option<SelectMetric>,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint produced by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// Data TSV to score (gold columns may be empty).
    #[arg(long)]
    data: PathBuf,
    /// Predictions TSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Precomputed-embedding file replacing the hashing featurizer.
    #[arg(long)]
    emb: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions TSV (id, predicted_class, predicted_score).
    #[arg(long)]
    pred: PathBuf,
    /// Gold data TSV.
    #[arg(long)]
    gold: PathBuf,
    /// Average Spearman per context instead of globally.
    #[arg(long)]
    per_instance: bool,
    /// Report format: text (key=value) or json.
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_c: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_r: f64,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        TrainConfigPatch::parse_file(path)?.apply(&mut cfg);
    }
    let flags = TrainConfigPatch {
        epochs: args.epochs,
        batch_size: args.batch_size,
        base_lr: args.lr,
        weight_decay: args.weight_decay,
        lambda_c: args.lambda_c,
        lambda_r: args.lambda_r,
        binning: args.binning,
        pooling: args.pooling,
        d_e: args.d_e,
        h: args.h,
        hash_seed: args.hash_seed,
        seed: args.seed,
        merge_dev: if args.merge_dev { Some(true) } else { None },
        select: args.select,
    };
    flags.apply(&mut cfg);

    let outcome = cmd_train(
        &cfg,
        &args.train,
        &args.dev,
        &args.out,
        args.emb.as_deref(),
    )?;
    print!("{}", outcome.report.to_kv_text());
    println!("best_epoch={}", outcome.best_epoch);
    println!("checkpoint={}", outcome.checkpoint_path.display());
    println!("log={}", outcome.log_path.display());
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let summary = cmd_predict(&args.ckpt, &args.data, &args.out, args.emb.as_deref())?;
    println!(
        "wrote {} predictions to {}",
        summary.n,
        summary.out_path.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let report = cmd_eval(
        &args.pred,
        &args.gold,
        EvalOptions {
            per_instance: args.per_instance,
        },
    )?;
    let rendered = match args.format {
        ReportFormat::Text => report.to_kv_text(),
        ReportFormat::Json => {
            let mut s = report.to_json()?;
            s.push('\n');
            s
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Error::io(path, e))?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn run_gradcheck(args: GradcheckArgs) -> Result<()> {
    let report = cmd_gradcheck(&GradCheckConfig {
        seed: args.seed,
        h: args.h,
        tol: args.tol,
        lambda_c: args.lambda_c,
        lambda_r: args.lambda_r,
        ..GradCheckConfig::default()
    })?;
    print!("{}", report.render());
    if !report.pass {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= tol {:.1e}",
            report.max_rel_error, report.tol
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
