use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use emotts::model::Variant;
use emotts::train::Phase;

mod commands;
mod settings;

use settings::{RunDir, Settings, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(
    name = "emotts",
    version,
    about = "Emotion-controllable discrete-token speech synthesis"
)]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Master seed, recorded in every output artifact.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: runs/<timestamp>-seed<seed>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate, filter, augment and split a toy emotion corpus.
    GenData(GenDataArgs),
    /// Pretrain or finetune a model on a manifest.
    Train(TrainArgs),
    /// Greedy synthesis for every entry of a manifest.
    Synth(SynthArgs),
    /// Score synthesized audio against references.
    Eval(EvalArgs),
    /// Synthesize and evaluate several checkpoints; print one row each.
    Compare(CompareArgs),
    /// Synthetic audit of automatic judges against rater MOS.
    MetricAudit(AuditArgs),
    /// Finite-difference gradient check on a miniature model.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// `pipeline` (generated texts), `overfit` or `hard`.
    #[arg(long)]
    pub corpus: Option<String>,
    /// Pipeline corpus: accepted pairs requested per emotion.
    #[arg(long)]
    pub per_emotion: Option<usize>,
    /// Overfit corpus size.
    #[arg(long)]
    pub count: Option<usize>,
    /// Paraphrased description variants per entry.
    #[arg(long)]
    pub paraphrases: Option<usize>,
    #[arg(long)]
    pub wer_threshold: Option<f64>,
    #[arg(long)]
    pub retry_cap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ff_dim: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long, value_parser = parse_phase)]
    pub phase: Option<Phase>,
    /// Starting checkpoint; required for finetuning.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Manifest split to train on (`train`, `val`, `test` or `all`).
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub repetition_penalty: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    pub reference: Option<String>,
    /// Synthesized manifest (from `synth`); defaults to the reference itself.
    #[arg(long)]
    pub generated: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated recall categories, or `all`.
    #[arg(long)]
    pub recall: Option<String>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// `name=checkpoint` pairs, repeatable or comma-separated.
    #[arg(long = "system", value_delimiter = ',')]
    pub systems: Vec<String>,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub recall: Option<String>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub systems: Option<usize>,
    #[arg(long)]
    pub items_per_system: Option<usize>,
    #[arg(long)]
    pub raters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// Variant to check (default: all six).
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Sample at most this many entries per tensor instead of all.
    #[arg(long)]
    pub max_entries: Option<usize>,
    /// Optimizer steps before checking, to move off the initialization.
    #[arg(long)]
    pub warm_steps: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: emotts::Error| e.to_string())
}

fn parse_phase(s: &str) -> std::result::Result<Phase, String> {
    s.parse().map_err(|e: emotts::Error| e.to_string())
}

/// Shared state for one invocation.
pub struct Context {
    pub settings: Settings,
    pub seed: u64,
    out_dir: Option<PathBuf>,
}

impl Context {
    /// Creates the run directory and records the resolved settings; call
    /// once every setting has been read.
    pub fn run_dir(&mut self, command: &str) -> Result<RunDir> {
        let dir = RunDir::create(self.out_dir.take(), self.seed)?;
        dir.record(command, &self.settings)?;
        log::info!("writing to {}", dir.path.display());
        Ok(dir)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.get("seed", cli.seed, 0)?;
    let out_dir = settings.get_opt::<String>("out-dir", cli.out_dir.map(|p| p.display().to_string()))?;
    let mut ctx = Context {
        settings,
        seed,
        out_dir: out_dir.map(PathBuf::from),
    };
    match cli.command {
        Command::GenData(a) => commands::gen_data(&mut ctx, a),
        Command::Train(a) => commands::train(&mut ctx, a),
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Eval(a) => commands::eval(&mut ctx, a),
        Command::Compare(a) => commands::compare(&mut ctx, a),
        Command::MetricAudit(a) => commands::metric_audit(&mut ctx, a),
        Command::GradCheck(a) => commands::grad_check(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
