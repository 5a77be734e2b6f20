use std::path::PathBuf;

use cayley_gibbs::measure::ConditionalVariant;
use cayley_gibbs::tree::RootMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::grid::Grid;

#[derive(Debug, Parser)]
#[command(
    name = "cayley-gibbs",
    version,
    about = "Translation-invariant Gibbs measures of the bilayer Ising model on Cayley trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find all positive fixed points of the boundary-law recursion.
    Solve(SolveArgs),
    /// Lower bound on the number of translation-invariant measures (a = b = c = 1).
    Classify(ClassifyArgs),
    /// Edge-conditional curves over a θ grid, as CSV or JSON.
    Sweep(SweepArgs),
    /// Hidden-pair distribution on one edge given the observed pair.
    Conditional(ConditionalArgs),
    /// Sum-product marginals and max-product MAP for an observed layer.
    Bp(BpArgs),
    /// Forward sample of the tree-indexed Markov chain.
    Sample(SampleArgs),
    /// Run the oracle suite and write a JSON report.
    Verify(VerifyArgs),
    /// Sample, denoise the observed layer and report flip counts.
    DemoDenoise(DemoArgs),
}

/// Model parameters: `--k` with either `--theta [--a --b --c]` or
/// `--J --beta [--emission]`, or a JSON `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// JSON run configuration (model keys plus optional depth, root_mode, seed, point, sigma).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Branching number of the Cayley tree.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Coupling constant J.
    #[arg(long = "J", alias = "coupling", allow_hyphen_values = true)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Emission scores p(δ|ε) as mm,mp,pm,pp (hidden first).
    #[arg(long, allow_hyphen_values = true)]
    pub emission: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TreeArgs {
    /// Depth n of the ball V_n.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Root degree convention: full (k + 1) or reduced (k).
    #[arg(long)]
    pub root_mode: Option<RootMode>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    /// Fixed point u,v,w; defaults to a solver solution.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Index into the solver's solution list (default 0).
    #[arg(long)]
    pub solution: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    /// Multistart Newton on the full system (always applicable).
    Full,
    /// Scalar reductions on the invariant sets (a = b = c = 1 only).
    Invariant,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = SolveMethod::Full)]
    pub method: SolveMethod,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub theta: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// μ₀, μ₁, μ₂ for a = b = c = 1.
    Fig1,
    /// μ* for k = 1, a = b, c = 1.
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum)]
    pub family: Family,
    /// θ grid as start:stop:step.
    #[arg(long)]
    pub theta: Grid,
    /// Emission ratio a = b for the fig2 family.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, value_enum, default_value = "derived")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Derived,
    Printed,
}

impl From<VariantArg> for ConditionalVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Derived => ConditionalVariant::Derived,
            VariantArg::Printed => ConditionalVariant::Printed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConditionalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub point: PointArgs,
    /// Observed pair on the edge, e.g. +1,-1.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub point: PointArgs,
    /// Observed layer: a JSON file, or inline JSON (BFS array or path → spin map).
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Seed for the random observed layers and the sampler check.
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
