//! `plx`: command-line front end for the variant analysis toolkit.
//!
//! Each subcommand wraps one pipeline stage and speaks the toolkit's file
//! formats: artifact graph documents, refactoring bundles (JSON), platform
//! documents, feature model text, and JSON reports. Structured output goes
//! to stdout or `--output`; a short human-readable summary always goes to
//! stderr. Exit codes: 0 on success, 1 on domain errors (unreadable input,
//! failed stage), 2 on usage errors.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plx_core::eval::MATCH_OVERLAP;
use plx_core::{DetectionConfig, GeneratorConfig, IntegrationOrder};

#[derive(Parser)]
#[command(name = "plx", version, about = "Clone detection, variant integration, and feature-model synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse source text into an artifact graph document.
    Parse(ParseArgs),
    /// Report clone classes found in one or more graphs.
    Detect(DetectArgs),
    /// Replace clone members with component instances.
    Refactor(RefactorArgs),
    /// Mine the variant taxonomy of a graph family.
    Taxonomy(TaxonomyArgs),
    /// Merge a variant family into one platform document.
    Integrate(IntegrateArgs),
    /// Synthesize a feature model from a platform document.
    Synthesize(SynthesizeArgs),
    /// Derive one variant back out of a platform document.
    Derive(DeriveArgs),
    /// Generate a benchmark family with a known clone answer key.
    Generate(GenerateArgs),
    /// Run the whole pipeline over a family and score it.
    Evaluate(EvaluateArgs),
}

/// Clone detection knobs shared by every detecting subcommand.
#[derive(Args)]
struct DetectionOpts {
    /// Similarity threshold for forming near-miss clone classes.
    #[arg(long, default_value_t = DetectionConfig::default().theta, value_parser = parse_unit_closed)]
    theta: f64,
    /// Smallest subtree token mass considered a clone candidate.
    #[arg(long, default_value_t = DetectionConfig::default().min_tokens)]
    min_tokens: usize,
}

impl DetectionOpts {
    fn config(&self) -> DetectionConfig {
        DetectionConfig {
            theta: self.theta,
            min_tokens: self.min_tokens,
            ..DetectionConfig::default()
        }
    }
}

/// Integration order for platform construction.
#[derive(Copy, Clone, ValueEnum)]
enum OrderArg {
    /// Integrate variants in the order given on the command line.
    Given,
    /// Integrate most-similar-first along the mined taxonomy.
    Taxonomy,
}

impl From<OrderArg> for IntegrationOrder {
    fn from(order: OrderArg) -> IntegrationOrder {
        match order {
            OrderArg::Given => IntegrationOrder::Given,
            OrderArg::Taxonomy => IntegrationOrder::Taxonomy,
        }
    }
}

#[derive(Args)]
struct ParseArgs {
    /// Source file to parse.
    input: PathBuf,
    /// Variant id recorded in the graph; defaults to the file stem.
    #[arg(long)]
    variant: Option<String>,
    /// Write the graph document here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Graph documents to scan.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    detection: DetectionOpts,
    /// Write the clone reports (JSON array) here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RefactorArgs {
    /// Graph document to refactor.
    input: PathBuf,
    #[command(flatten)]
    detection: DetectionOpts,
    /// Write the refactoring bundle (JSON) here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TaxonomyArgs {
    /// Graph documents of the family.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the taxonomy (JSON) here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IntegrateArgs {
    /// Graph documents or refactoring bundles to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Similarity threshold for the last matching tier.
    #[arg(long, default_value_t = DetectionConfig::default().theta, value_parser = parse_unit_closed)]
    theta: f64,
    /// Integration order.
    #[arg(long, value_enum, default_value_t = OrderArg::Taxonomy)]
    order: OrderArg,
    /// Write the platform document here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Platform document to analyze.
    input: PathBuf,
    /// Write the feature model here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DeriveArgs {
    /// Platform document to derive from.
    input: PathBuf,
    /// Variant id to derive.
    #[arg(long)]
    variant: String,
    /// Write the derived graph document here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Seed for the generator's random stream; every random choice flows
    /// from it, so equal seeds reproduce the corpus byte for byte.
    #[arg(long)]
    seed: u64,
    /// Classes in the seed system.
    #[arg(long, default_value_t = 6)]
    classes: usize,
    /// Methods per class.
    #[arg(long, default_value_t = 4)]
    methods: usize,
    /// Baseline statements per method body.
    #[arg(long, default_value_t = 5)]
    statements: usize,
    /// Number of variants to derive.
    #[arg(long, default_value_t = GeneratorConfig::default().variant_count)]
    variants: usize,
    /// Exact-duplicate clone pairs planted per variant.
    #[arg(long, default_value_t = 0)]
    type1: usize,
    /// Consistently renamed clone pairs planted per variant.
    #[arg(long, default_value_t = 0)]
    type2: usize,
    /// Near-miss clone pairs planted per variant.
    #[arg(long, default_value_t = 0)]
    type3: usize,
    /// Upper bound on statement edits applied to a near-miss copy.
    #[arg(long, default_value_t = GeneratorConfig::default().type3_max_edits)]
    max_edits: usize,
    /// Probability that a method site mutates in a derived variant.
    #[arg(long, default_value_t = GeneratorConfig::default().variant_mutation_rate, value_parser = parse_unit_closed)]
    mutation_rate: f64,
    /// Minimum token mass of a planted clone.
    #[arg(long, default_value_t = GeneratorConfig::default().min_clone_mass)]
    min_mass: usize,
    /// Directory receiving one `<variant>.graph` per variant plus
    /// `truth.json` and `genealogy.json`.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Graph documents of the family to evaluate.
    #[arg(required_unless_present = "bundle", conflicts_with = "bundle")]
    inputs: Vec<PathBuf>,
    /// Directory written by `plx generate`; reads its graphs and answer key.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Ground-truth JSON for precision/recall scoring.
    #[arg(long, conflicts_with = "bundle")]
    truth: Option<PathBuf>,
    #[command(flatten)]
    detection: DetectionOpts,
    /// Member overlap required to match a reported class to the answer key.
    #[arg(long, default_value_t = MATCH_OVERLAP, value_parser = parse_unit_open)]
    overlap: f64,
    /// Write the evaluation report (JSON) here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Accepts a float in [0, 1].
fn parse_unit_closed(text: &str) -> Result<f64, String> {
    let value: f64 = text.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("{value} is outside [0, 1]"))
    }
}

/// Accepts a float in (0, 1].
fn parse_unit_open(text: &str) -> Result<f64, String> {
    let value: f64 = text.parse().map_err(|e| format!("{e}"))?;
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(format!("{value} is outside (0, 1]"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Parse(args) => commands::parse(&args),
        Command::Detect(args) => commands::detect(&args),
        Command::Refactor(args) => commands::refactor(&args),
        Command::Taxonomy(args) => commands::taxonomy(&args),
        Command::Integrate(args) => commands::integrate(&args),
        Command::Synthesize(args) => commands::synthesize(&args),
        Command::Derive(args) => commands::derive(&args),
        Command::Generate(args) => commands::generate(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("plx: {error:#}");
            ExitCode::FAILURE
        }
    }
}
