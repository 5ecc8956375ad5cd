//! `adam` — operator surface for the multilingual personality
//! recognition lab: synthetic data, augmentation with leakage auditing,
//! linguistic metrics, CLAD training with ablations and generalization
//! protocols, evaluation statistics, and embedding probes.

mod commands;
mod config;
mod manifest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "adam",
    version,
    about = "Multilingual personality recognition lab",
    max_term_width = 100
)]
pub struct Cli {
    /// Emit machine-readable JSON to stdout instead of human text.
    #[arg(long, global = true)]
    pub json: bool,

    /// KEY=VALUE config file; flags take precedence over file values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus with embeddings and teacher bundle.
    Synth(SynthArgs),
    /// Translate or rewrite samples through a completion provider.
    Augment(AugmentArgs),
    /// Run the label-leakage judges over augmented datasets.
    Judge(JudgeArgs),
    /// Compute syllable, lexical diversity, and density metrics.
    Lint(LintArgs),
    /// Train a model with the combined objective or the BCE baseline.
    Train(TrainArgs),
    /// Train every loss-component combination and tabulate accuracy.
    Ablate(AblateArgs),
    /// Evaluate a checkpoint; optionally compare two checkpoints.
    Eval(EvalArgs),
    /// Train probes distinguishing two embedding sets over several seeds.
    Probe(ProbeArgs),
    /// Leave-one-language-out training and held-out evaluation.
    Generalize(GeneralizeArgs),
    /// Train on English only and evaluate the other languages.
    Zeroshot(ZeroshotArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Master seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of groups to generate.
    #[arg(long, default_value_t = 500)]
    pub groups: usize,
    /// Number of languages (1..=5, in en,fr,bm,jp,zh order).
    #[arg(long, default_value_t = 5)]
    pub languages: usize,
    /// Trait dimensions (4 or 5).
    #[arg(long, default_value_t = 5)]
    pub dims: usize,
    /// Teacher probability sharpness.
    #[arg(long, default_value_t = 2.0)]
    pub signal_strength: f64,
    /// Per-language deviation from the shared embedding map.
    #[arg(long, default_value_t = 0.25)]
    pub language_spread: f64,
    /// Embedding noise, one value for all languages or a comma list.
    #[arg(long, default_value = "0.1", value_name = "F[,F..]")]
    pub noise: String,
    /// Content-flip fraction per language (single value or comma list).
    #[arg(long, default_value = "0", value_name = "F[,F..]")]
    pub flip_fraction: String,
    /// Blind the teacher on the last trait dimension.
    #[arg(long)]
    pub teacher_blind_last_dim: bool,
    /// Teacher embedding width.
    #[arg(long, default_value_t = 12)]
    pub teacher_width: usize,
    /// Student embedding width.
    #[arg(long, default_value_t = 16)]
    pub student_width: usize,
    /// Train/validation/test ratios as "R,R,R".
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub split_ratios: String,
    /// Seed of the stratified split.
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Source dataset (JSONL samples).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Label scheme of the dataset: big5 or mbti4.
    #[arg(long, default_value = "big5")]
    pub scheme: String,
    /// Augmentation mode: toga, piga, or opposite-en.
    #[arg(long)]
    pub mode: String,
    /// Target language code (en, fr, bm, jp, zh).
    #[arg(long)]
    pub target_lang: String,
    /// Completion provider: mock or http.
    #[arg(long, default_value = "mock")]
    pub provider: String,
    /// Directory for the content-addressed completion cache.
    #[arg(long, value_name = "DIR")]
    pub cache_dir: PathBuf,
    /// Maximum concurrent provider requests.
    #[arg(long, default_value_t = 2)]
    pub max_inflight: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Chat-completions endpoint for the http provider.
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Model name for the http provider.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the provider auth token.
    #[arg(long, default_value = "PROVIDER_API_TOKEN")]
    pub token_env: String,
    /// Sampling temperature for the http provider (provider default if unset).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Keywords the mock judge flags (comma separated).
    #[arg(long, default_value = "introvert,extrovert")]
    pub mock_keywords: String,
}

#[derive(Args)]
pub struct JudgeArgs {
    /// Original (source-language) dataset.
    #[arg(long, value_name = "FILE")]
    pub original: PathBuf,
    /// Label scheme of the datasets: big5 or mbti4.
    #[arg(long, default_value = "big5")]
    pub scheme: String,
    /// Judge kind: csp or tcp.
    #[arg(long)]
    pub kind: String,
    /// One translated dataset to audit.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["toga", "piga"])]
    pub translated: Option<PathBuf>,
    /// TOGA-translated dataset (paired audit with --piga).
    #[arg(long, value_name = "FILE", requires = "piga")]
    pub toga: Option<PathBuf>,
    /// PIGA-translated dataset (paired audit with --toga).
    #[arg(long, value_name = "FILE", requires = "toga")]
    pub piga: Option<PathBuf>,
    /// Completion provider: mock or http.
    #[arg(long, default_value = "mock")]
    pub provider: String,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Chat-completions endpoint for the http provider.
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Model name for the http provider.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the provider auth token.
    #[arg(long, default_value = "PROVIDER_API_TOKEN")]
    pub token_env: String,
    /// Keywords the mock judge flags (comma separated).
    #[arg(long, default_value = "introvert,extrovert")]
    pub mock_keywords: String,
}

#[derive(Args)]
pub struct LintArgs {
    /// Dataset to analyze (JSONL samples).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Label scheme of the dataset: big5 or mbti4.
    #[arg(long, default_value = "big5")]
    pub scheme: String,
    /// Method tag recorded in the report: toga or piga.
    #[arg(long)]
    pub method: String,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct TrainOpts {
    /// Random seed (initialization, batching, negatives).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Groups per optimization step.
    #[arg(long)]
    pub batch_groups: Option<usize>,
    /// Epoch budget.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Early-stop patience on validation balanced accuracy.
    #[arg(long)]
    pub patience: Option<usize>,
    /// KL weight φ.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Attention-loss weight ψ.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Contrastive weight ρ.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Distillation temperature τ.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Contrastive margin m.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Contrastive scoring: corrected or literal.
    #[arg(long)]
    pub contrastive_mode: Option<String>,
    /// Use the strictly literal attention scaling.
    #[arg(long)]
    pub attention_literal: bool,
    /// Shared projection width.
    #[arg(long)]
    pub proj_width: Option<usize>,
    /// Use student inputs as-is instead of the trainable encoder.
    #[arg(long)]
    pub frozen_encoder: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Data directory produced by `synth` (or matching its layout).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Objective: clad or bce.
    #[arg(long, default_value = "clad")]
    pub objective: String,
    /// Loss components for the clad objective, e.g. "kl+al+cl".
    #[arg(long, default_value = "kl+al+cl")]
    pub ablation: String,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Data directory produced by `synth` (or matching its layout).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// "all" or a comma list of combos like "kl,al,cl,kl+al".
    #[arg(long, default_value = "all")]
    pub combos: String,
    /// Score against synthetic ground truth when available.
    #[arg(long)]
    pub against_truth: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Data directory produced by `synth` (or matching its layout).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Second checkpoint for a paired McNemar comparison.
    #[arg(long, value_name = "FILE")]
    pub compare: Option<PathBuf>,
    /// Split part to evaluate: train, validation, or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Score against synthetic ground truth when available.
    #[arg(long)]
    pub against_truth: bool,
    /// Algorithm label written into the results table.
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Args)]
pub struct ProbeArgs {
    /// Embedding JSONL of the "−" class.
    #[arg(long, value_name = "FILE")]
    pub a: PathBuf,
    /// Embedding JSONL of the "+" class.
    #[arg(long, value_name = "FILE")]
    pub b: PathBuf,
    /// Probe kind: lr or svm.
    #[arg(long, default_value = "lr")]
    pub kind: String,
    /// Number of independent seeded runs.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Existing split JSON; derived from the group ids when absent.
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,
    /// Seed of the derived split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    /// Full-batch descent epochs.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Descent step size.
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
}

#[derive(Args)]
pub struct GeneralizeArgs {
    /// Data directory produced by `synth` (or matching its layout).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Score against synthetic ground truth when available.
    #[arg(long)]
    pub against_truth: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args)]
pub struct ZeroshotArgs {
    /// Data directory produced by `synth` (or matching its layout).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Score against synthetic ground truth when available.
    #[arg(long)]
    pub against_truth: bool,
    #[command(flatten)]
    pub opts: TrainOpts,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes; everything else is
            // a usage error.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                adam_core::Error::Provider(_) => 3,
                adam_core::Error::Config(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
