use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Ambiguity/disagreement scoring, intervention sieving and counterfactual
/// round simulation for range-based rating annotations.
///
/// Datasets are read as JSON (`.json`) or as an annotations CSV
/// (`condition,instance,annotator,lower,upper`) with a sidecar JSON holding
/// the scale and instances. Every command that writes `-o OUT` also writes
/// `OUT.manifest.json`, which `replay` re-executes.
///
/// JUDGMENT_SIEVE_THREADS bounds worker threads (0 or unset = all cores).
#[derive(Debug, Parser, Serialize, Deserialize)]
#[command(name = "judgment-sieve", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check a dataset against every invariant; exit 1 if any are violated.
    Validate(ValidateArgs),
    /// Per-instance ambiguity and disagreement for one condition.
    Score(ScoreArgs),
    /// Assign context / deliberation / none per instance from baseline scores.
    Sieve(SieveArgs),
    /// Evaluate one sieved or uniform counterfactual round.
    Simulate(SimulateArgs),
    /// Evaluate sieved rounds over a list of threshold fractions.
    Sweep(SweepArgs),
    /// Generate a synthetic three-condition dataset.
    Synth(SynthArgs),
    /// Run repeated sieving rounds on a synthetic crowd.
    Iterate(IterateArgs),
    /// Reshape score tables or sweep outputs into plot-ready long tables.
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// Dataset file (.json, or .csv with a sidecar)
    #[arg(value_name = "IN")]
    pub input: PathBuf,
    /// Sidecar JSON for CSV input [default: IN with `.meta.json` in place of `.csv`]
    #[arg(long, value_name = "PATH")]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output file; stdout when omitted (no manifest is written then)
    #[arg(short, long, value_name = "OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootArgs {
    /// Seed for bootstrap and permutation resampling
    #[arg(long)]
    pub seed: u64,
    /// Bootstrap replicates per interval
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Confidence level of the percentile intervals
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Condition to score
    #[arg(long, default_value = "baseline")]
    pub condition: String,
    /// CSV: instance,ambiguity,disagreement,annotators
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SieveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Top fraction of instances (by each metric) eligible for an intervention
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    /// Override the fraction used for the ambiguity cutoff
    #[arg(long)]
    pub ambiguity_fraction: Option<f64>,
    /// Override the fraction used for the disagreement cutoff
    #[arg(long)]
    pub disagreement_fraction: Option<f64>,
    /// CSV: instance,decision,ambiguity,disagreement
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("round").required(true).args(["fraction", "uniform"])))]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Sieve fraction for a targeted round
    #[arg(long, conflicts_with = "uniform")]
    pub fraction: Option<f64>,
    /// Draw every instance from this condition instead of sieving
    #[arg(long, value_name = "COND")]
    pub uniform: Option<String>,
    #[command(flatten)]
    pub boot: BootArgs,
    /// Permutation replicates for the p-values against baseline
    #[arg(long, default_value_t = 10_000)]
    pub perm_reps: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated sieve fractions
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.25")]
    pub fractions: Vec<f64>,
    #[command(flatten)]
    pub boot: BootArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CrowdArgs {
    /// JSON file with optional `crowd` and `effects` objects
    #[arg(long, value_name = "CFG")]
    pub config: Option<PathBuf>,
    /// Generator seed (overrides the config file)
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub annotators: Option<usize>,
    /// Context width factor
    #[arg(long)]
    pub kappa_a: Option<f64>,
    /// Deliberation dispersion factor
    #[arg(long)]
    pub kappa_d: Option<f64>,
    #[arg(long)]
    pub context_dispersion_factor: Option<f64>,
    #[arg(long)]
    pub deliberation_width_factor: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub crowd: CrowdArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IterateArgs {
    #[command(flatten)]
    pub crowd: CrowdArgs,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    /// Stop once both mean ambiguity and mean disagreement fall below this
    #[arg(long)]
    pub stop_below: Option<f64>,
    /// Bootstrap replicates per round summary
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStyle {
    /// Inputs are score tables (`score` output), one per condition; the
    /// condition is taken from `NAME=PATH`, the JSON table, or the file stem
    Slices,
    /// Inputs are `sweep` outputs
    Sweep,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Score tables or sweep CSVs
    #[arg(value_name = "INPUTS", required = true)]
    pub inputs: Vec<String>,
    #[arg(long, value_enum)]
    pub style: ReportStyle,
    /// Share of baseline instances in each slice
    #[arg(long, default_value_t = 0.1)]
    pub slice_fraction: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written next to a previous output
    #[arg(value_name = "MANIFEST")]
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded one
    #[arg(short, long, value_name = "OUT")]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Score(_) => "score",
            Command::Sieve(_) => "sieve",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
            Command::Iterate(_) => "iterate",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out_mut(&mut self) -> Option<&mut Option<PathBuf>> {
        match self {
            Command::Score(a) => Some(&mut a.output.out),
            Command::Sieve(a) => Some(&mut a.output.out),
            Command::Simulate(a) => Some(&mut a.output.out),
            Command::Sweep(a) => Some(&mut a.output.out),
            Command::Synth(a) => Some(&mut a.output.out),
            Command::Iterate(a) => Some(&mut a.output.out),
            Command::Report(a) => Some(&mut a.output.out),
            Command::Validate(_) | Command::Replay(_) => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.boot.seed),
            Command::Sweep(a) => Some(a.boot.seed),
            Command::Synth(a) => Some(a.crowd.seed),
            Command::Iterate(a) => Some(a.crowd.seed),
            _ => None,
        }
    }
}
