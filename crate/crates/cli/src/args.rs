use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mortproj", version, about = "Bayesian mortality projection pipeline")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a deaths/exposure panel and write it in canonical form.
    Ingest(IngestArgs),
    /// Non-smoker prevalence tools.
    #[command(subcommand)]
    Smoking(SmokingCommand),
    /// Average age-at-diagnosis from incidence rates.
    Aad(AadArgs),
    /// Sample the posterior of one model.
    Fit(FitArgs),
    /// Forward selection by Bayes factors.
    Select(SelectArgs),
    /// Posterior-predictive rate surface over a horizon.
    Project(ProjectArgs),
    /// Diagnosis-delay scenario against the baseline projection.
    Scenario(ScenarioArgs),
    /// Cumulative excess deaths of observed counts over a baseline surface.
    Excess(ExcessArgs),
    /// Pearson residual table of a fitted run.
    Residuals(ResidualsArgs),
    /// Synthetic data.
    #[command(subcommand)]
    Simlab(SimlabCommand),
}

#[derive(Debug, Args, Serialize)]
pub struct PanelArgs {
    /// Panel schema (TOML).
    #[arg(long)]
    pub schema: PathBuf,
    /// Deaths and exposures (CSV).
    #[arg(long)]
    pub panel: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: PanelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SmokingCommand {
    /// Fill unobserved years from the quadratic trend fit.
    Backcast(BackcastArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BackcastArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1981)]
    pub from: i32,
    #[arg(long, default_value_t = 2019)]
    pub to: i32,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AadArgs {
    #[command(flatten)]
    pub input: PanelArgs,
    /// Incidence rates (age_group, gender, deprivation, region, year, lambda_hat).
    #[arg(long)]
    pub incidence: PathBuf,
    /// Standard population (age_group, weight); defaults to ESP 2013.
    #[arg(long)]
    pub std: Option<PathBuf>,
    /// Pool AAD over deprivation quintiles.
    #[arg(long)]
    pub region_only: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CovariateArgs {
    /// Complete covariate set (JSON), as written by `fit` or `simlab generate`.
    #[arg(long = "covariates", conflicts_with_all = ["aad", "incidence", "smoking"])]
    pub set: Option<PathBuf>,
    /// Precomputed AAD table, as written by `aad`.
    #[arg(long, conflicts_with = "incidence")]
    pub aad: Option<PathBuf>,
    /// Incidence rates to compute AAD from.
    #[arg(long)]
    pub incidence: Option<PathBuf>,
    #[arg(long)]
    pub std: Option<PathBuf>,
    #[arg(long)]
    pub region_only: bool,
    /// Complete non-smoker prevalence series (after `smoking backcast`).
    #[arg(long)]
    pub smoking: Option<PathBuf>,
    /// Last year for which lagged NS values are stored (default: last panel year + 18).
    #[arg(long)]
    pub ns_through: Option<i32>,
}

#[derive(Debug, Args, Serialize)]
pub struct SamplerArgs {
    /// Sampler settings (TOML); flags below override it.
    #[arg(long)]
    pub sampler: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Prior hyperparameters (TOML).
    #[arg(long)]
    pub priors: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Builtin name (lung_female, lung_male, breast_female) or spec TOML.
    #[arg(long)]
    pub spec: String,
    #[command(flatten)]
    pub input: PanelArgs,
    #[command(flatten)]
    pub covariates: CovariateArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Keep latent log-rates of every stored draw.
    #[arg(long)]
    pub store_latent: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: PanelArgs,
    #[command(flatten)]
    pub covariates: CovariateArgs,
    /// Gender to model.
    #[arg(long, default_value = "female")]
    pub gender: String,
    /// Terms of the starting model, comma separated.
    #[arg(long, default_value = "intercept,year")]
    pub null: String,
    /// Candidate terms in declaration order, comma separated.
    #[arg(long)]
    pub candidates: String,
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Main effects first, then interactions of accepted terms.
    #[arg(long)]
    pub two_stage: bool,
    /// Also report DIC for every scored model.
    #[arg(long)]
    pub dic: bool,
    /// Retained draws per temperature.
    #[arg(long)]
    pub draws_per_rung: Option<usize>,
    #[arg(long)]
    pub rungs: Option<usize>,
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct HorizonArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Projected exposures (age_group, gender, [deprivation], region, year, exposure).
    #[arg(long)]
    pub pop: Option<PathBuf>,
    /// Last projected year.
    #[arg(long)]
    pub horizon: i32,
    /// Year whose quintile shares split a population without deprivation (default: last panel year).
    #[arg(long)]
    pub shares_year: Option<i32>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub horizon: HorizonArgs,
    /// Also emit the anchor year.
    #[arg(long)]
    pub include_anchor: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub horizon: HorizonArgs,
    #[arg(long)]
    pub delay_months: f64,
    /// `default` or a CSV of (year, fraction).
    #[arg(long, default_value = "default")]
    pub schedule: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExcessArgs {
    /// Observed deaths panel (CSV) described by `--schema`.
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Baseline surface written by `project`.
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long)]
    pub first: Option<i32>,
    #[arg(long)]
    pub last: Option<i32>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ResidualsArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SimlabCommand {
    /// Simulate a panel, covariates and truth record from a generator config.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Generator config (TOML); omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
