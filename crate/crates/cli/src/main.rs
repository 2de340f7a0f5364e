//! `gaitlrp` command-line front end.

mod commands;
mod config;
mod error;
mod manifest;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Keys;

#[derive(Parser)]
#[command(name = "gaitlrp", version, about = "Train, explain and stress-test gait classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gait dataset with known discriminative windows.
    Synth(SynthArgs),
    /// Validate and normalize a gait CSV file.
    Ingest(IngestArgs),
    /// Train one model per cross-validation fold.
    Train(RunArgs),
    /// Score trained fold models on their test folds (accuracy table).
    Eval(RunArgs),
    /// Compute relevance maps for every test trial.
    Explain(ExplainArgs),
    /// Run the perturbation analysis (AOPC table).
    Perturb(PerturbArgs),
    /// Coefficient of variation of relevance per subject (CoV table).
    Reliability(RunArgs),
    /// Draw relevance-coloured curves as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config with flat keys, or a run manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root [env: GAITLRP_OUT, default: gaitlrp-out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for explanation and perturbation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Data {
    /// Gait CSV file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Expected feature set: GRF, FBJA, FBJAX, LBJA or LBJAX.
    #[arg(long)]
    feature_set: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Restrict to one cross-validation round.
    #[arg(long)]
    fold: Option<usize>,
    /// Fit preprocessing statistics on `full` data or on each round's `train` part.
    #[arg(long)]
    fit_scope: Option<String>,
    /// Comma-separated architecture names, e.g. `CNN-A,MLP-3-256`.
    #[arg(long)]
    arch: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    feature_set: Option<String>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// Base name of the written files.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: Data,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: Data,
    /// Explained class: `true` or `predicted`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: Data,
    /// Comma-separated: gaussian:<sigma>, salt-, salt+, pepper, shot.
    #[arg(long)]
    noise: Option<String>,
    /// `random` or `relevance`.
    #[arg(long)]
    ordering: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Draw orders per model instead of sharing them across models.
    #[arg(long)]
    unpaired: bool,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: Data,
    #[arg(long)]
    subject: Option<usize>,
    /// Trial id; defaults to the subject's first trial.
    #[arg(long)]
    trial: Option<usize>,
    /// Comma-separated channel indices.
    #[arg(long)]
    channels: Option<String>,
    /// Shaded time-index ranges, e.g. `0:60`.
    #[arg(long)]
    stance: Option<String>,
    /// Draw every trial of the subject in one grid.
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl Common {
    fn keys(&self) -> Keys {
        Keys {
            out: self.out.clone(),
            seed: self.seed,
            threads: self.threads,
            ..Default::default()
        }
    }
}

impl Data {
    fn keys(&self) -> Keys {
        Keys {
            dataset: self.dataset.clone(),
            feature_set: self.feature_set.clone(),
            folds: self.folds,
            fold: self.fold,
            fit_scope: self.fit_scope.clone(),
            arch: self.arch.clone(),
            ..Default::default()
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Explain(_) => "explain",
            Command::Perturb(_) => "perturb",
            Command::Reliability(_) => "reliability",
            Command::Render(_) => "render",
        }
    }

    fn parts(&self) -> (&Common, Keys) {
        match self {
            Command::Synth(a) => (
                &a.common,
                Keys {
                    feature_set: a.feature_set.clone(),
                    subjects: a.subjects,
                    trials: a.trials,
                    noise_std: a.noise_std,
                    amplitude: a.amplitude,
                    name: a.name.clone(),
                    ..Default::default()
                },
            ),
            Command::Ingest(a) => (
                &a.common,
                Keys {
                    input: a.input.clone(),
                    name: a.name.clone(),
                    ..Default::default()
                },
            ),
            Command::Train(a) | Command::Eval(a) | Command::Reliability(a) => (&a.common, a.data.keys()),
            Command::Explain(a) => (
                &a.common,
                Keys {
                    target: a.target.clone(),
                    epsilon: a.epsilon,
                    ..a.data.keys()
                },
            ),
            Command::Perturb(a) => (
                &a.common,
                Keys {
                    noise: a.noise.clone(),
                    ordering: a.ordering.clone(),
                    steps: a.steps,
                    repetitions: a.repetitions,
                    unpaired: a.unpaired.then_some(true),
                    epsilon: a.epsilon,
                    ..a.data.keys()
                },
            ),
            Command::Render(a) => (
                &a.common,
                Keys {
                    subject: a.subject,
                    trial: a.trial,
                    channels: a.channels.clone(),
                    stance: a.stance.clone(),
                    grid: a.grid.then_some(true),
                    target: a.target.clone(),
                    epsilon: a.epsilon,
                    ..a.data.keys()
                },
            ),
        }
    }
}

fn run(cli: Cli) -> error::Result<()> {
    let name = cli.command.name();
    let (common, specific) = cli.command.parts();
    let mut keys = common.keys().or(specific);
    if let Some(path) = &common.config {
        keys = keys.or(config::load(path, name)?);
    }
    let manifest = commands::dispatch(name, keys)?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
