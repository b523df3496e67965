//! `entnet` command-line tool.
//!
//! Exit status: 0 on success, 1 for user errors (bad flags or config,
//! missing or malformed files), 2 for internal errors and failed gradient
//! checks.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entnet::Error;

use crate::commands as cmd;
use crate::config::Settings;

#[derive(Parser)]
#[command(name = "entnet", version, about = "Recurrent entity networks: generate, train, evaluate, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a world-model dataset split 10:1:1 into train/valid/test files.
    Generate(GenerateArgs),
    /// Train over one or more seeds; keep the best by validation error.
    Train(TrainArgs),
    /// Error table for one or more checkpoints.
    Eval(EvalArgs),
    /// Nearest vocabulary words of every memory slot after reading a story.
    Inspect(InspectArgs),
    /// Compare analytic and finite-difference gradients on a random model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (default `$ENTNET_OUT/<name>`, or `runs/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    task: Option<String>,
    /// Story length in statement lines.
    #[arg(long = "T")]
    t: Option<usize>,
    /// Variable length: lower bound (with --t-max).
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    /// Total stories over all three splits.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// world, babi or cbt.
    #[arg(long)]
    task: Option<String>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    task_id: Option<usize>,
    /// NE or CN (CBT only).
    #[arg(long)]
    cbt_kind: Option<String>,
    /// babi10k, babi1k, world, cbt or custom.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// general or simplified.
    #[arg(long)]
    variant: Option<String>,
    /// prelu or identity.
    #[arg(long)]
    memory_phi: Option<String>,
    #[arg(long)]
    output_phi: Option<String>,
    #[arg(long)]
    normalize: Option<bool>,
    /// free, tied or candidates.
    #[arg(long)]
    keys: Option<String>,
    /// Comma-separated tokens for tied keys, one per slot.
    #[arg(long)]
    key_tokens: Option<String>,
    /// mask or bow.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    dual_encoding: Option<bool>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    /// Stop the seed search at the first run with zero validation error.
    #[arg(long)]
    stop_at_perfect: Option<bool>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    /// halve_epochs:N, halve_updates:N or constant.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without validation improvement before stopping, or `none`.
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoints to evaluate; one table row each.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Dataset directory, overriding the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    task_id: Option<usize>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    task_id: Option<usize>,
    #[arg(long, default_value = "valid")]
    split: String,
    /// Sample index within the split.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Neighbors per slot.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Story length in sentences.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    memory_phi: Option<String>,
    #[arg(long)]
    output_phi: Option<String>,
}

/// Flag values that were given, as settings.
fn flags<const N: usize>(pairs: [(&str, Option<String>); N]) -> Settings {
    let mut s = Settings::default();
    for (k, v) in pairs {
        if let Some(v) = v {
            s.set(k, v);
        }
    }
    s
}

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn path_text(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn overrides(data: &Option<PathBuf>, task_id: &Option<usize>) -> Settings {
    flags([("data", path_text(data)), ("task_id", text(task_id))])
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => {
            let f = flags([
                ("task", a.task.clone()),
                ("T", text(&a.t)),
                ("t_min", text(&a.t_min)),
                ("t_max", text(&a.t_max)),
                ("n", text(&a.n)),
                ("seed", text(&a.seed)),
            ]);
            let s = cmd::resolve(cmd::generate_defaults(), a.common.config.as_deref(), &f, cmd::GENERATE_KEYS)?;
            let name = match s.raw("t_max") {
                Some(hi) if hi != "none" => format!("world-T{}-{hi}-seed{}", s.str("t_min")?, s.str("seed")?),
                _ => format!("world-T{}-seed{}", s.str("T")?, s.str("seed")?),
            };
            let dir = cmd::run_dir(a.common.out.as_deref(), &name);
            print!("{}", cmd::generate(&s, &dir)?);
        }
        Command::Train(a) => {
            let f = flags([
                ("task", a.task.clone()),
                ("data", path_text(&a.data)),
                ("task_id", text(&a.task_id)),
                ("cbt_kind", a.cbt_kind.clone()),
                ("protocol", a.protocol.clone()),
                ("d", text(&a.d)),
                ("m", text(&a.m)),
                ("variant", a.variant.clone()),
                ("memory_phi", a.memory_phi.clone()),
                ("output_phi", a.output_phi.clone()),
                ("normalize", text(&a.normalize)),
                ("keys", a.keys.clone()),
                ("key_tokens", a.key_tokens.clone()),
                ("encoder", a.encoder.clone()),
                ("dual_encoding", text(&a.dual_encoding)),
                ("seeds", a.seeds.clone()),
                ("stop_at_perfect", text(&a.stop_at_perfect)),
                ("optimizer", a.optimizer.clone()),
                ("lr", text(&a.lr)),
                ("schedule", a.schedule.clone()),
                ("batch_size", text(&a.batch_size)),
                ("clip", text(&a.clip)),
                ("epochs", text(&a.epochs)),
                ("patience", a.patience.clone()),
                ("dropout", text(&a.dropout)),
            ]);
            let mut chosen = match &a.common.config {
                Some(p) => Settings::load(p)?,
                None => Settings::default(),
            };
            chosen.overlay(&f);
            let defaults = cmd::train_defaults(&chosen)?;
            let s = cmd::resolve(defaults, a.common.config.as_deref(), &f, cmd::TRAIN_KEYS)?;
            let name = match s.str("task")? {
                "babi" => format!("babi-task{}", s.str("task_id")?),
                t => t.to_string(),
            };
            let dir = cmd::run_dir(a.common.out.as_deref(), &name);
            let quiet = a.quiet;
            let mut log = |line: &str| {
                if !quiet {
                    eprintln!("{line}");
                }
            };
            println!("{}", cmd::train(&s, &dir, &mut log)?);
        }
        Command::Eval(a) => {
            let rows = cmd::eval(&a.models, &overrides(&a.data, &a.task_id), &a.split)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", cmd::format_table(&rows));
            }
        }
        Command::Inspect(a) => {
            let (report, preamble) = cmd::inspect(&a.model, &overrides(&a.data, &a.task_id), &a.split, a.index, a.k)?;
            if a.json {
                println!("{}", report.to_json()?);
            } else {
                print!("{preamble}\n{report}");
            }
        }
        Command::Gradcheck(a) => {
            let f = flags([
                ("d", text(&a.d)),
                ("m", text(&a.m)),
                ("T", text(&a.t)),
                ("seed", text(&a.seed)),
                ("variant", a.variant.clone()),
                ("memory_phi", a.memory_phi.clone()),
                ("output_phi", a.output_phi.clone()),
            ]);
            let s = cmd::resolve(cmd::gradcheck_defaults(), a.config.as_deref(), &f, cmd::GRADCHECK_KEYS)?;
            let r = cmd::gradcheck(&s)?;
            let passed = cmd::gradcheck_passed(&r);
            println!(
                "max relative error {:.3e} at {} ({} entries checked, {} skipped at PReLU kinks): {}",
                r.max_rel_error,
                r.worst,
                r.checked,
                r.kinked,
                if passed { "pass" } else { "FAIL" }
            );
            if !passed {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// 1 for problems with the user's input, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::Io(_)
            | Error::MalformedLine { .. }
            | Error::UnknownToken(_)
            | Error::TooLong { .. }
            | Error::Json(_)
            | Error::Checkpoint(_)
            | Error::EmptyCorpus
            | Error::NoBlank
            | Error::BadCandidateCount(_)
            | Error::UntiedKeys
            | Error::InvalidRate(_)
            | Error::OffGrid { .. },
        ) => 1,
        _ if err.downcast_ref::<serde_json::Error>().is_some() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
