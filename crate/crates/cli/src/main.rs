//! `reta`: command-line pipeline for reward-model reliability evaluation.
//!
//! Every subcommand writes its outputs into `--out` together with a
//! `run_config.json` echo of the effective configuration. Errors are printed
//! to standard error as one JSON object; exit code 2 means bad input, 3 means
//! a computation failed.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reta::bon::BonVariant;
use reta::synth::DistSpec;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "reta", version, about = "Reward-model reliability toolkit")]
struct Cli {
    /// JSON config file; its keys override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select k diverse prompts from embedded candidates with a k-DPP.
    SamplePrompts(SampleArgs),
    /// Generate a synthetic dataset and score table, optionally with a convergence report.
    Synth(SynthArgs),
    /// Check a dataset and score tables, printing a JSON report.
    Validate(DataArgs),
    /// RETA curves per RM.
    Reta(RetaArgs),
    /// Best-of-n curve family per RM.
    Bon(BonArgs),
    /// Hit rate, NDCG, MRR, pairwise accuracy and win rate per RM.
    Metrics(MetricArgs),
    /// Rewrite a dataset and its score tables in canonical form.
    Export(DataArgs),
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Dataset directory with prompts.jsonl and responses.jsonl.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// RM score file (repeatable).
    #[arg(long = "rm-scores")]
    rm_scores: Vec<PathBuf>,
    /// Also evaluate the oracle as if it were an RM.
    #[arg(long)]
    include_oracle: bool,
    /// Upper bound on oracle scores accepted by the loader.
    #[arg(long)]
    oracle_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DataArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            dataset: self.dataset.clone(),
            rm_scores: (!self.rm_scores.is_empty()).then(|| self.rm_scores.clone()),
            include_oracle: self.include_oracle.then_some(true),
            oracle_max: self.oracle_max,
            out: self.out.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RetaArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Eta value (repeatable, strictly decreasing); defaults to 15 points from 1 to 1/128.
    #[arg(long = "eta")]
    etas: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    n_low: Option<f64>,
    #[arg(long)]
    n_high: Option<f64>,
    #[arg(long)]
    n_exponent: Option<f64>,
    /// Report raw average oracle scores instead of normalized values.
    #[arg(long)]
    no_normalize: bool,
    /// Also write the unnormalized curves next to the normalized ones.
    #[arg(long)]
    ablation: bool,
}

#[derive(Args)]
struct BonArgs {
    #[command(flatten)]
    data: DataArgs,
    /// best_of_n, rank_k_of_n:K or best_m_of_n:M (repeatable).
    #[arg(long = "variant")]
    variants: Vec<BonVariant>,
    /// Subset sizes; defaults to powers of two.
    #[arg(long = "n", value_delimiter = ',')]
    n_values: Vec<usize>,
}

#[derive(Args)]
struct MetricArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Ground-truth fraction for hit rate.
    #[arg(long)]
    eta: Option<f64>,
    /// Hit-rate cutoffs; defaults to N/8, N/4, N/2.
    #[arg(long = "k", value_delimiter = ',')]
    hit_rate_k: Vec<usize>,
    /// Which RM pick MRR and NDCG evaluate (1 = best).
    #[arg(long = "j")]
    selection_rank_j: Option<usize>,
    /// Win/draw/loss labels for one RM, as RM=PATH (repeatable).
    #[arg(long = "labels", value_parser = parse_label)]
    labels: Vec<(String, PathBuf)>,
}

#[derive(Args)]
struct SampleArgs {
    /// Candidate prompts file with embeddings.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Distribution spec: a JSON file or inline JSON `{"kind": ..., "params": {...}}`.
    #[arg(long, value_parser = parse_spec)]
    spec: Option<DistSpec>,
    #[arg(long)]
    prompts: Option<usize>,
    /// Responses per prompt.
    #[arg(long = "responses")]
    responses: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run a convergence experiment over these N values.
    #[arg(long = "convergence", value_delimiter = ',')]
    convergence_n: Vec<usize>,
    /// Eta for the convergence experiment.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_label(s: &str) -> Result<(String, PathBuf), String> {
    let (rm, path) = s.split_once('=').ok_or("expected RM=PATH")?;
    Ok((rm.to_string(), PathBuf::from(path)))
}

fn parse_spec(s: &str) -> Result<DistSpec, String> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| format!("{s}: {e}"))?
    };
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn non_empty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    (!v.is_empty()).then(|| v.to_vec())
}

impl Command {
    fn flags(&self) -> RunConfig {
        match self {
            Command::Validate(d) | Command::Export(d) => d.config(),
            Command::Reta(a) => RunConfig {
                eta_grid: non_empty(&a.etas),
                seed: a.seed,
                resamples: a.resamples,
                n_range_low_coeff: a.n_low,
                n_range_high_coeff: a.n_high,
                n_exponent: a.n_exponent,
                normalize: a.no_normalize.then_some(false),
                ablation: a.ablation.then_some(true),
                ..a.data.config()
            },
            Command::Bon(a) => RunConfig {
                variants: non_empty(&a.variants),
                n_values: non_empty(&a.n_values),
                ..a.data.config()
            },
            Command::Metrics(a) => RunConfig {
                eta: a.eta,
                hit_rate_k: non_empty(&a.hit_rate_k),
                selection_rank_j: a.selection_rank_j,
                labels: (!a.labels.is_empty()).then(|| a.labels.iter().cloned().collect::<BTreeMap<_, _>>()),
                ..a.data.config()
            },
            Command::SamplePrompts(a) => RunConfig {
                candidates: a.candidates.clone(),
                k: a.k,
                seed: a.seed,
                epsilon: a.epsilon,
                max_steps: a.max_steps,
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Synth(a) => RunConfig {
                spec: a.spec.clone(),
                num_prompts: a.prompts,
                responses_per_prompt: a.responses,
                seed: a.seed,
                convergence_n: non_empty(&a.convergence_n),
                eta: a.eta,
                resamples: a.resamples,
                out: a.out.clone(),
                ..Default::default()
            },
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::input("InvalidThreads", e.to_string()))?;
    }
    let mut cfg = cli.command.flags();
    if let Some(path) = &cli.config {
        cfg = cfg.overlay(RunConfig::from_file(path)?);
    }
    let outputs = match cli.command {
        Command::SamplePrompts(_) => commands::cmd_sample_prompts(cfg)?,
        Command::Synth(_) => commands::cmd_synth(cfg)?,
        Command::Reta(_) => commands::cmd_reta(cfg)?,
        Command::Bon(_) => commands::cmd_bon(cfg)?,
        Command::Metrics(_) => commands::cmd_metrics(cfg)?,
        Command::Export(_) => commands::cmd_export(cfg)?,
        Command::Validate(_) => {
            let (report, outputs) = commands::cmd_validate(cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            for path in &outputs {
                eprintln!("wrote {}", path.display());
            }
            if !report.ok {
                let errors = report.errors().count();
                return Err(CliError::input("ValidationFailed", format!("{errors} error(s) in report")));
            }
            return Ok(());
        }
    };
    for path in outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
