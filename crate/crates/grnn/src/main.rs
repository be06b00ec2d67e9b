//! Experiment CLI: train and evaluate sequence classifiers built from the
//! gated cell variants, check gradients against finite differences, and
//! print parameter-count tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grnn::cells::CellKind;
use grnn::harness::{
    param_count_table, run_eval, run_gradcheck, run_train, OptimizerKind, RunConfig, SequenceMode,
    GRADCHECK_TOLERANCE,
};
use grnn::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_GRADCHECK: u8 = 4;

#[derive(Parser)]
#[command(
    name = "grnn",
    version,
    about = "Gated recurrent network training on MNIST sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and write metrics/checkpoint files.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Check analytic gradients against central differences for every cell.
    Gradcheck(GradcheckArgs),
    /// Print parameter counts for every cell kind at the given sizes.
    Paramcount(ParamcountArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Cell variant: srnn, lstm, gru, mgu, mgu1, mgu2, or mgu3.
    #[arg(long)]
    cell: CellKind,

    /// Hidden units; defaults to 50 for rows28, 100 for pixels784.
    #[arg(long)]
    hidden: Option<usize>,

    /// Sequence representation: rows28, pixels784, or synthetic.
    #[arg(long, default_value = "rows28")]
    seq: SequenceMode,

    /// Directory holding the MNIST IDX files (plain or .gz). Falls back to
    /// $GRNN_DATA_DIR, then ./data.
    #[arg(long)]
    data_dir: Option<PathBuf>,

    /// Seed for initialization, shuffling, and synthetic data.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    /// Optimizer: rmsprop or adam.
    #[arg(long, default_value = "rmsprop")]
    optimizer: OptimizerKind,

    /// Mini-batch size.
    #[arg(long, default_value_t = 100)]
    batch: usize,

    /// Training epochs; defaults to 50 for rows28, 25 for pixels784.
    #[arg(long)]
    epochs: Option<usize>,

    /// Metrics CSV output path.
    #[arg(long)]
    metrics: Option<PathBuf>,

    /// Checkpoint output path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// Optional global L2 gradient clip.
    #[arg(long)]
    clip: Option<f64>,

    /// Record zero wall-clock seconds so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,

    /// Use only the first N training examples.
    #[arg(long)]
    train_limit: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Checkpoint to load.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seed for the check instances.
    #[arg(long, default_value_t = 123)]
    seed: u64,
}

#[derive(Args)]
struct ParamcountArgs {
    /// Hidden size n.
    n: usize,
    /// Input size m.
    m: usize,
    /// Optional class count; adds readout-inclusive totals.
    k: Option<usize>,
}

fn default_epochs(mode: SequenceMode) -> usize {
    match mode {
        SequenceMode::Rows28 => 50,
        SequenceMode::Pixels784 => 25,
        SequenceMode::Synthetic => 20,
    }
}

fn build_config(args: &TrainArgs) -> RunConfig {
    let mut config = RunConfig::new(args.model.cell, args.model.seq);
    config.hidden = args.model.hidden;
    config.lr = args.lr;
    config.optimizer = args.optimizer;
    config.batch_size = args.batch;
    config.epochs = args.epochs.unwrap_or_else(|| default_epochs(args.model.seq));
    config.seed = args.model.seed;
    config.data_dir = args.model.data_dir.clone();
    config.metrics_path = args.metrics.clone();
    config.checkpoint_path = args.checkpoint.clone();
    config.clip_norm = args.clip;
    config.deterministic = args.deterministic;
    config.train_limit = args.train_limit;
    config
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let config = build_config(args);
    println!(
        "training {} (hidden {}) on {} | {} lr={} batch={} epochs={} seed={}",
        config.cell,
        config.hidden_size(),
        config.mode,
        config.optimizer,
        config.lr,
        config.batch_size,
        config.epochs,
        config.seed
    );
    let outcome = run_train(&config)?;
    for row in &outcome.metrics {
        println!(
            "epoch {:>3}: train_loss {:.6} train_acc {:.4} test_acc {:.4} ({:.1}s)",
            row.epoch, row.train_loss, row.train_acc, row.test_acc, row.seconds
        );
    }
    if let Some(path) = &config.metrics_path {
        println!("metrics written to {}", path.display());
    }
    if let Some(path) = &config.checkpoint_path {
        println!("checkpoint written to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let mut config = RunConfig::new(args.model.cell, args.model.seq);
    config.hidden = args.model.hidden;
    config.seed = args.model.seed;
    config.data_dir = args.model.data_dir.clone();
    let acc = run_eval(&args.checkpoint, &config)?;
    println!("test accuracy: {acc:.4}");
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool, Error> {
    let rows = run_gradcheck(args.seed)?;
    let mut all_passed = true;
    for row in &rows {
        let verdict = if row.passed() { "pass" } else { "FAIL" };
        println!(
            "{:<5} max relative error {:>12.3e}  {verdict}",
            row.kind.name(),
            row.max_rel_error
        );
        all_passed &= row.passed();
    }
    println!(
        "gradient check {} (tolerance {GRADCHECK_TOLERANCE:.0e})",
        if all_passed { "passed" } else { "failed" }
    );
    Ok(all_passed)
}

fn cmd_paramcount(args: &ParamcountArgs) {
    match args.k {
        Some(k) => {
            println!("{:<5} {:>12} {:>12}", "cell", "cell-only", "with-readout");
            for (kind, cell, total) in param_count_table(args.n, args.m, Some(k)) {
                println!("{:<5} {:>12} {:>12}", kind.name(), cell, total.unwrap());
            }
        }
        None => {
            println!("{:<5} {:>12}", "cell", "cell-only");
            for (kind, cell, _) in param_count_table(args.n, args.m, None) {
                println!("{:<5} {:>12}", kind.name(), cell);
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => match cmd_gradcheck(args) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_GRADCHECK),
            Err(err) => Err(err),
        },
        Command::Paramcount(args) => {
            cmd_paramcount(args);
            Ok(())
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
