mod backends;
mod commands;
mod harvest;
mod manifest;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Lexicon-seeded weakly supervised NER.
#[derive(Debug, Parser)]
#[command(name = "lexner", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "LEXNER_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the pipeline seed.
    #[arg(long, global = true, env = "LEXNER_SEED")]
    pub seed: Option<u64>,
    /// `stub:<file.json>`, `tcp://host:port` or `exec:<command>`.
    #[arg(long, global = true, env = "LEXNER_MLM_ENDPOINT")]
    pub mlm_endpoint: Option<String>,
    /// `native` (default), `tcp://host:port` or `exec:<command>`.
    #[arg(long, global = true, env = "LEXNER_TAGGER_ENDPOINT")]
    pub tagger_endpoint: Option<String>,
    /// Output directory (or file, for single-output commands).
    #[arg(long, global = true, env = "LEXNER_OUT")]
    pub out: Option<PathBuf>,
    /// Check inputs and configuration without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank proper-noun spans of a corpus by frequency; optionally pick a lexicon.
    Harvest(harvest::HarvestArgs),
    /// Label a corpus with a lexicon (and optionally the masked-LM heuristic).
    Annotate(commands::AnnotateArgs),
    /// Run the full self-training pipeline.
    Run(commands::RunArgs),
    /// Tag a corpus with a trained model.
    Predict(commands::PredictArgs),
    /// Entity-level precision, recall and F1 against gold labels.
    Eval(commands::EvalArgs),
    /// Summarize a rule trace log.
    InspectTraces(commands::InspectArgs),
    /// Serve a stub masked-LM backend over the wire protocol.
    ServeStubMlm(serve::ServeMlmArgs),
    /// Serve the built-in tagger over the plugin protocol.
    ServeNativeTagger(serve::ServeTaggerArgs),
    /// Write a synthetic corpus, lexicon and matching stub backend.
    Synth(commands::SynthArgs),
}

/// Errors in how the tool was invoked (missing inputs, bad configuration).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEXNER_LOG", "info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let result = match cli.command {
        Command::Harvest(a) => harvest::run(&cli.global, a),
        Command::Annotate(a) => commands::annotate(&cli.global, a),
        Command::Run(a) => commands::run(&cli.global, a),
        Command::Predict(a) => commands::predict(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
        Command::InspectTraces(a) => commands::inspect_traces(&cli.global, a),
        Command::ServeStubMlm(a) => serve::serve_stub_mlm(a),
        Command::ServeNativeTagger(a) => serve::serve_native_tagger(a),
        Command::Synth(a) => commands::synth(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
