//! Command-line front end for the corpus calibration toolkit.
//!
//! Run configuration is layered: a flat `key=value` config file (via
//! `--config`) is read first, `TOPICFORGE_*` environment variables
//! override it, and command-line flags override both. Every run writes a
//! `manifest.json` recording input digests, the merged configuration with
//! each value's winning layer, and output digests. Exit codes: 0 success,
//! 1 I/O, 2 invalid input data, 3 configuration, 4 transport, 5 feasible
//! calibration not found.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod commands;
mod fail;
mod seed;
mod settings;

use fail::Failure;
use settings::Settings;

#[derive(Parser)]
#[command(name = "topicforge", version, about = "Build and calibrate biology QA corpora")]
struct Cli {
    /// Flat key=value config file; the lowest-precedence settings layer.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a question-answer dataset and print its summary
    Ingest(IngestArgs),
    /// Attach topic labels with a classifier backend
    Classify(ClassifyArgs),
    /// Prune a labeled dataset toward target topic shares
    Calibrate(CalibrateArgs),
    /// Draft exam-style questions from text chunks
    Qagen(QagenArgs),
    /// Judge responses against gold answers and score rewards
    Verify(VerifyArgs),
    /// Rebuild the topic reference counts from article indexing
    FetchPubmed(FetchPubmedArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset to validate (JSON Lines)
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct BackendArgs {
    /// Classifier backend: rule-stub, scripted, or http
    #[arg(long)]
    backend: Option<String>,
    /// Endpoint for the http backend
    #[arg(long)]
    backend_url: Option<String>,
    /// Response file for the scripted backend (JSON array of strings)
    #[arg(long)]
    script: Option<PathBuf>,
    /// Maximum records or chunks in flight
    #[arg(long)]
    max_in_flight: Option<usize>,
}

impl BackendArgs {
    fn apply(&self, settings: &mut Settings) {
        settings.set_flag("backend", self.backend.as_ref());
        settings.set_flag("backend_url", self.backend_url.as_ref());
        settings.set_flag("script", self.script.as_ref().map(|p| p.display()));
        settings.set_flag("max_in_flight", self.max_in_flight);
    }
}

#[derive(Args)]
struct ClassifyArgs {
    /// Dataset to label (JSON Lines)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for labeled output, transcripts, and the manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Label everything as in-domain instead of asking the gate
    #[arg(long)]
    skip_gate: bool,
    /// Keep existing labels and only label records without any
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Labeled dataset (JSON Lines)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Reference count snapshot (TSV)
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Directory for kept ids, trace, reports, and the manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Stop once the distance to the target is at or below this
    #[arg(long)]
    tau: Option<f64>,
    /// Derive the distance threshold from a tolerated sampling error rate
    #[arg(long)]
    error_rate: Option<f64>,
    /// Smoothing exponent applied to the reference counts (1 = as-is)
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight on the underrepresentation penalty
    #[arg(long)]
    lambda: Option<f64>,
    /// Removals per iteration
    #[arg(long)]
    k: Option<usize>,
    /// Never shrink the kept set below this many records
    #[arg(long)]
    n_min: Option<usize>,
    /// Iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct QagenArgs {
    /// Text chunks to draft from (JSON Lines)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for records, rejections, transcripts, and the manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Run seed; answer positions derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum relevance score for a chunk to reach generation
    #[arg(long)]
    relevance_min: Option<u8>,
    /// Minimum grade for a multiple-choice draft
    #[arg(long)]
    mcq_grade_min: Option<u8>,
    /// Required grade for a freeform draft
    #[arg(long)]
    freeform_required_score: Option<u8>,
    /// Choices per multiple-choice question
    #[arg(long)]
    num_answers: Option<usize>,
    /// `source` value stamped on produced records
    #[arg(long)]
    source: Option<String>,
    /// Skip multiple-choice drafting
    #[arg(long)]
    skip_mcq: bool,
    /// Skip freeform drafting
    #[arg(long)]
    skip_freeform: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Items to judge: JSON Lines of {id?, response, gold, answer_format}
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for verdicts and the manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Reward for a correct answer
    #[arg(long)]
    correct_weight: Option<f64>,
    /// Bonus for exactly one well-placed answer marker
    #[arg(long)]
    format_bonus: Option<f64>,
    /// Penalty for degenerate repetition
    #[arg(long)]
    repetition_penalty: Option<f64>,
    /// Token n-gram length checked for repetition
    #[arg(long)]
    repetition_window: Option<usize>,
    /// Occurrences at which an n-gram counts as repetition
    #[arg(long)]
    repetition_threshold: Option<usize>,
}

#[derive(Args)]
struct FetchPubmedArgs {
    /// Search term
    #[arg(long)]
    term: Option<String>,
    /// Publication window start, YYYY-MM
    #[arg(long = "from", value_name = "YYYY-MM")]
    date_from: Option<String>,
    /// Publication window end, YYYY-MM
    #[arg(long = "to", value_name = "YYYY-MM")]
    date_to: Option<String>,
    /// Directory for the count snapshot, article list, and manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Answer requests from this url-to-body JSON map instead of the network
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Stop paging after this many article ids
    #[arg(long)]
    max_ids: Option<usize>,
    /// Ids per request page
    #[arg(long)]
    page_size: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("{failure}");
            std::process::exit(failure.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => {
            settings.set_flag("input", args.input.as_ref().map(|p| p.display()));
            commands::ingest::run(&settings)
        }
        Command::Classify(args) => {
            settings.set_flag("input", args.input.as_ref().map(|p| p.display()));
            settings.set_flag("out_dir", args.out_dir.as_ref().map(|p| p.display()));
            args.backend.apply(&mut settings);
            settings.set_switch("skip_gate", args.skip_gate);
            commands::classify::run(&settings, args.resume)
        }
        Command::Calibrate(args) => {
            settings.set_flag("input", args.input.as_ref().map(|p| p.display()));
            settings.set_flag("counts", args.counts.as_ref().map(|p| p.display()));
            settings.set_flag("out_dir", args.out_dir.as_ref().map(|p| p.display()));
            settings.set_flag("tau", args.tau);
            settings.set_flag("error_rate", args.error_rate);
            settings.set_flag("alpha", args.alpha);
            settings.set_flag("lambda", args.lambda);
            settings.set_flag("k", args.k);
            settings.set_flag("n_min", args.n_min);
            settings.set_flag("max_iters", args.max_iters);
            commands::calibrate::run(&settings)
        }
        Command::Qagen(args) => {
            settings.set_flag("input", args.input.as_ref().map(|p| p.display()));
            settings.set_flag("out_dir", args.out_dir.as_ref().map(|p| p.display()));
            args.backend.apply(&mut settings);
            settings.set_flag("seed", args.seed);
            settings.set_flag("relevance_min", args.relevance_min);
            settings.set_flag("mcq_grade_min", args.mcq_grade_min);
            settings.set_flag("freeform_required_score", args.freeform_required_score);
            settings.set_flag("num_answers", args.num_answers);
            settings.set_flag("source", args.source.as_ref());
            settings.set_switch("skip_mcq", args.skip_mcq);
            settings.set_switch("skip_freeform", args.skip_freeform);
            commands::qagen::run(&settings)
        }
        Command::Verify(args) => {
            settings.set_flag("input", args.input.as_ref().map(|p| p.display()));
            settings.set_flag("out_dir", args.out_dir.as_ref().map(|p| p.display()));
            settings.set_flag("correct_weight", args.correct_weight);
            settings.set_flag("format_bonus", args.format_bonus);
            settings.set_flag("repetition_penalty", args.repetition_penalty);
            settings.set_flag("repetition_window", args.repetition_window);
            settings.set_flag("repetition_threshold", args.repetition_threshold);
            commands::verify::run(&settings)
        }
        Command::FetchPubmed(args) => {
            settings.set_flag("term", args.term.as_ref());
            settings.set_flag("date_from", args.date_from.as_ref());
            settings.set_flag("date_to", args.date_to.as_ref());
            settings.set_flag("out_dir", args.out_dir.as_ref().map(|p| p.display()));
            settings.set_flag("fixture", args.fixture.as_ref().map(|p| p.display()));
            settings.set_flag("max_ids", args.max_ids);
            settings.set_flag("page_size", args.page_size);
            commands::fetch_pubmed::run(&settings)
        }
    }
}
