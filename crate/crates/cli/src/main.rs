mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use treatfair::Error;

/// Audit and mitigate disparities in non-binary treatment decisions.
#[derive(Debug, Parser)]
#[command(name = "treatfair", version, about, propagate_version = true)]
pub struct Cli {
    /// Worker threads for row-parallel work (defaults to available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the synthetic loan benchmark and write CSV, schema config and
    /// generator settings.
    Simulate(SimulateArgs),
    /// Learn an additive-noise model from data and write it as JSON.
    Fit(FitArgs),
    /// Counterfactual treatment disparities and their effect on outcomes.
    Audit(AuditArgs),
    /// Build the treatment-fair dataset for a disadvantaged group.
    Mitigate(MitigateArgs),
    /// Risk scores under a treatment policy, as CDF grids per group.
    Risk(RiskArgs),
    /// Lender loss (LGD) and applicant interest (ESI) per group.
    Losses(LossesArgs),
    /// Train a logistic predictor, optionally post-processed for a
    /// group-fairness criterion.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    /// Label noise scaled by gamma for the disadvantaged group.
    Noisy,
    /// Group-dependent threshold, no label noise.
    Deterministic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GaussianReading {
    StdDev,
    Variance,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0.03)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Variant::Noisy)]
    pub variant: Variant,
    /// How the second parameter of each Gaussian is read.
    #[arg(long, value_enum, default_value_t = GaussianReading::StdDev)]
    pub gaussian: GaussianReading,
    /// Output CSV; `<stem>.schema.json`, `<stem>.synth.json` and
    /// `<stem>.provenance.json` are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema config JSON (roles, kinds, categorical codes).
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `oracle` for the synthetic generator's equations, or a model JSON
    /// written by `fit`.
    #[arg(long)]
    pub model: String,
    /// Generator settings for `--model oracle` (default `<data stem>.synth.json`).
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Linear,
    Pairwise,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Bic,
    None,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BasisArg::Pairwise)]
    pub basis: BasisArg,
    #[arg(long, value_enum, default_value_t = SelectionArg::Bic)]
    pub selection: SelectionArg,
    #[arg(long, default_value_t = 1e-6)]
    pub regularization: f64,
    /// Drop a candidate edge, as `PARENT:CHILD`. Repeatable.
    #[arg(long = "exclude-edge", value_name = "PARENT:CHILD")]
    pub exclude_edges: Vec<String>,
    /// Fit on every row instead of the seeded 80% training split.
    #[arg(long)]
    pub all_rows: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeltaArg {
    Difference,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum MultiArg {
    None,
    Avg,
    Max,
    Var,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FlipArg {
    Single,
    Joint,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutcomeAggArg {
    WorstCase,
    Mean,
    Variance,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sensitive column (defaults to the first one in the schema).
    #[arg(long)]
    pub sensitive: Option<String>,
    /// Factual and counterfactual sensitive values, as codes or labels.
    #[arg(long, num_args = 2, value_names = ["FACTUAL", "COUNTERFACTUAL"], required = true)]
    pub group_pair: Vec<String>,
    #[arg(long, value_enum, default_value_t = StatArg::Median)]
    pub stats: StatArg,
    #[arg(long, value_enum, default_value_t = DeltaArg::Difference)]
    pub delta: DeltaArg,
    /// Aggregate over every counterfactual sensitive value instead of one pair.
    #[arg(long, value_enum, default_value_t = MultiArg::None)]
    pub multi: MultiArg,
    /// Sensitive columns spanning the multi-sensitive value set.
    #[arg(long = "multi-column")]
    pub multi_columns: Vec<String>,
    #[arg(long, value_enum, default_value_t = FlipArg::Single)]
    pub flip: FlipArg,
    #[arg(long, value_enum, default_value_t = OutcomeAggArg::WorstCase)]
    pub outcome_aggregator: OutcomeAggArg,
    /// Divide multi-sensitive averages by |S| - 1.
    #[arg(long)]
    pub corrected_normalizer: bool,
    /// Predictor JSON from `predict`; audit only the rows it accepts.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    /// Report JSON; the flat CSV goes to `<stem>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub sensitive: Option<String>,
    #[arg(long)]
    pub disadvantaged: String,
    #[arg(long)]
    pub advantaged: String,
    /// Fail if the intervened group's repayment rate drops.
    #[arg(long)]
    pub require_non_harm: bool,
    /// Fair dataset CSV; the summary goes to `<stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Factual,
    Empirical,
    Counterfactual,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub sensitive: Option<String>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Factual)]
    pub policy: PolicyArg,
    /// Reference group for the empirical and counterfactual policies.
    #[arg(long)]
    pub group: Option<String>,
    /// Monte Carlo draws per row for the empirical policy.
    #[arg(long, default_value_t = treatfair::mitigation::DEFAULT_SAMPLE_COUNT)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference data for the empirical policy (defaults to `--data`).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// CDF CSV (`group,threshold,cdf`); the summary goes to `<stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormulaArg {
    RateDuration,
    AnnuityAmount,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Loan amount column.
    #[arg(long)]
    pub amount: String,
    /// Grouping column (defaults to the first sensitive column).
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long, value_enum, default_value_t = FormulaArg::RateDuration)]
    pub formula: FormulaArg,
    /// Duration column in months, for `rate-duration`.
    #[arg(long)]
    pub duration_column: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub rate_percent: f64,
    /// Annuity column, for `annuity-amount`.
    #[arg(long)]
    pub annuity_column: Option<String>,
    #[arg(long, default_value_t = 15.0)]
    pub years: f64,
    /// Name recorded for the dataset in the report.
    #[arg(long, default_value = "data")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum CriterionArg {
    None,
    Dp,
    Eod,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub sensitive: Option<String>,
    #[arg(long, value_enum, default_value_t = CriterionArg::None)]
    pub criterion: CriterionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = treatfair::predictors::DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub regularization: f64,
    /// Predictor JSON with train and test metrics.
    #[arg(long)]
    pub out: PathBuf,
}

const EXIT_USAGE: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::EmptyGroup { .. } | Error::Degenerate(_) | Error::EmptyPolicy => 3,
        Error::InvalidConfig(_) | Error::NegativeRate(_) | Error::MissingColumn(_) | Error::UnknownValue { .. } => {
            EXIT_USAGE
        }
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::NonNumericCell { .. }
        | Error::OutcomeNotBinary { .. }
        | Error::RoleMissing(_)
        | Error::UnknownColumn(_) => 5,
        _ => 4,
    }
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let doc = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error("usage", e.render().to_string().trim(), EXIT_USAGE),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return report_error("usage", "--threads must be at least 1", EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report_error("usage", &e.to_string(), EXIT_USAGE);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e.kind(), &e.to_string(), exit_code(&e)),
    }
}
