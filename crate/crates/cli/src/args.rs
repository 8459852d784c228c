//! Flags, the JSON config file, and their merge (flags win).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(name = "walshdiv", version, about = "Divergence constructions for Walsh-Fourier series")]
pub struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate or classify index sequences.
    #[command(subcommand)]
    Seq(SeqCommand),
    /// Dirichlet-kernel norms against V(n)/8 and V(n).
    Kernel(KernelArgs),
    /// Build and verify one divergence polynomial.
    Lemma1(Lemma1Args),
    /// Plan the truncated witness and sample it.
    Witness(WitnessArgs),
    /// Growth-function diagnostics.
    Phi(PhiArgs),
    /// Move random polynomials into the flat gaps of a plan.
    Relocate(RelocateArgs),
}

#[derive(Subcommand, Debug)]
pub enum SeqCommand {
    Gen(SeqGenArgs),
    Classify(ClassifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Default)]
pub struct SeqSource {
    /// nested-canonical, separated-canonical or powers-of-two.
    #[arg(long)]
    pub seq: Option<String>,
    /// Explicit comma-separated terms; overrides --seq.
    #[arg(long)]
    pub terms: Option<String>,
    /// Index of the first generated term.
    #[arg(long)]
    pub start: Option<u64>,
    /// Number of generated terms.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SeqGenArgs {
    #[command(flatten)]
    pub source: SeqSource,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub source: SeqSource,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[arg(long)]
    pub n_max: Option<u64>,
    /// Grid resolution; defaults to the bit length of n-max.
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Lemma1Args {
    #[command(flatten)]
    pub source: SeqSource,
    /// 1-based level position in the sequence.
    #[arg(long)]
    pub nu: Option<usize>,
    /// Largest resolution at which Q is materialised.
    #[arg(long)]
    pub dense_cap: Option<u32>,
    /// Random points at which the witnessing cut is reported.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub source: SeqSource,
    /// Truncation horizon J.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// `identity` or `canonical:K` (the sequence's own growth function).
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dense_cap: Option<u32>,
    /// witness.csv destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON dump of the plan.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PhiArgs {
    #[command(flatten)]
    pub source: SeqSource,
    /// Number of knots of φ_(n_k).
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RelocateArgs {
    #[command(flatten)]
    pub source: SeqSource,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of random polynomials.
    #[arg(long)]
    pub polys: Option<usize>,
    /// Resolution of each random polynomial (degree below 2^this).
    #[arg(long)]
    pub poly_resolution: Option<u32>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config file contents; keys match the long flag names with `_`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seq: Option<String>,
    pub terms: Option<String>,
    pub start: Option<u64>,
    pub count: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub n_max: Option<u64>,
    pub resolution: Option<u32>,
    pub nu: Option<usize>,
    pub dense_cap: Option<u32>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub phi: Option<String>,
    pub plan_out: Option<PathBuf>,
    pub knots: Option<usize>,
    pub polys: Option<usize>,
    pub poly_resolution: Option<u32>,
}

impl SeqSource {
    pub fn merged(&self, file: &FileConfig) -> SeqSource {
        SeqSource {
            seq: self.seq.clone().or_else(|| file.seq.clone()),
            terms: self.terms.clone().or_else(|| file.terms.clone()),
            start: self.start.or(file.start),
            count: self.count.or(file.count),
        }
    }
}
