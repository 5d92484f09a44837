//! Command-line front end for interrupted time series analysis.
//!
//! Exit codes: 0 on success, 1 when the numerics cannot proceed
//! (degenerate designs, nonstationarity, unbracketed power searches),
//! 2 for input and configuration problems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;
mod svg;

use settings::Settings;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(its_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<its_core::Error> for CliError {
    fn from(e: its_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                its_core::ErrorClass::Input => 2,
                its_core::ErrorClass::Numerical => 1,
            },
        }
    }
}

/// Analyze interrupted time series designs by simulating counterfactual
/// post-policy trajectories from a lagged-outcome model.
#[derive(Parser)]
#[command(name = "its", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command. Each flag overrides the config-file
/// key of the same name.
#[derive(Args, Debug)]
struct CommonArgs {
    /// Plain-text config file: key = value lines grouped by section headers
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with columns t, the outcome, optional M and covariates
    #[arg(long)]
    input: Option<PathBuf>,
    /// Name of the outcome column
    #[arg(long)]
    outcome: Option<String>,
    /// Last pre-policy month
    #[arg(long)]
    t0: Option<i64>,
    /// Model terms: comma list of intercept,time,quarters,sin,cov:NAME
    #[arg(long)]
    model: Option<String>,
    /// Include lagged outcome and covariates (sets both lag flags)
    #[arg(long)]
    lag: Option<bool>,
    /// Include the lagged outcome term
    #[arg(long = "lag-outcome")]
    lag_outcome: Option<bool>,
    /// Include lag-1 copies of the structural columns
    #[arg(long = "lag-covariates")]
    lag_covariates: Option<bool>,
    /// Collinearity pivot threshold (relative to the largest pivot)
    #[arg(long = "pivot-tol")]
    pivot_tol: Option<f64>,
    /// Number of simulated trajectories
    #[arg(long = "R", value_name = "R")]
    replicates: Option<usize>,
    /// Band level: the envelope covers the middle 1 - alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Last simulated time (defaults to the last observed time)
    #[arg(long)]
    horizon: Option<i64>,
    /// Smooth the envelope (true/false)
    #[arg(long)]
    smooth: Option<bool>,
    /// Loess span in (0, 1]
    #[arg(long)]
    span: Option<f64>,
    /// Loess polynomial degree (0, 1 or 2)
    #[arg(long)]
    degree: Option<usize>,
    /// Rows the smoother sees: post | all | pre
    #[arg(long = "smooth-range")]
    smooth_range: Option<String>,
    /// Working seasonality model for smoothing (term list)
    #[arg(long = "season-model")]
    season_model: Option<String>,
    /// Output directory
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Summary statistic: avg | smoothed
    #[arg(long)]
    stat: Option<String>,
    /// First month of the averaging range
    #[arg(long = "stat-first")]
    stat_first: Option<i64>,
    /// Last month of the averaging range
    #[arg(long = "stat-last")]
    stat_last: Option<i64>,
    /// Month at which the smoothed statistic is read
    #[arg(long = "stat-at")]
    stat_at: Option<i64>,
}

#[derive(Args, Debug)]
struct AdjustArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grouped CSV with columns t, group, n, y and optional M
    #[arg(long = "grouped-input")]
    grouped_input: Option<PathBuf>,
    /// Outcome kind: mean | proportion | count
    #[arg(long)]
    kind: Option<String>,
    /// Target-mix window: post | all | FROM:TO
    #[arg(long)]
    window: Option<String>,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Constant post-policy shift to detect
    #[arg(long)]
    effect: Option<f64>,
    /// Solve for the effect reaching this power instead
    #[arg(long = "target-power")]
    target_power: Option<f64>,
    /// Trajectories per inner analysis
    #[arg(long = "r-inner")]
    r_inner: Option<usize>,
    /// Number of outer datasets
    #[arg(long = "n-outer")]
    n_outer: Option<usize>,
    /// Pre-policy months in the generator
    #[arg(long = "n-pre")]
    n_pre: Option<usize>,
    /// Post-policy months in the generator
    #[arg(long = "n-post")]
    n_post: Option<usize>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    /// Residual autocorrelation of the generator
    #[arg(long)]
    rho: Option<f64>,
    /// Innovation SD of the generator
    #[arg(long)]
    sigma: Option<f64>,
    /// Quarter offsets relative to Q1
    #[arg(long)]
    q2: Option<f64>,
    #[arg(long)]
    q3: Option<f64>,
    #[arg(long)]
    q4: Option<f64>,
    /// Sinusoid coefficients (yearly period)
    #[arg(long = "sin-coef")]
    sin_coef: Option<f64>,
    #[arg(long = "cos-coef")]
    cos_coef: Option<f64>,
    /// First month of the tested averaging range
    #[arg(long = "stat-first")]
    stat_first: Option<i64>,
    /// Last month of the tested averaging range
    #[arg(long = "stat-last")]
    stat_last: Option<i64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to pre-policy data and report coefficients
    Fit(CommonArgs),
    /// Simulate counterfactual trajectories and write envelope CSV + SVG
    Envelope(CommonArgs),
    /// Test a post-policy summary against the simulated distribution
    Test(TestArgs),
    /// Post-stratify grouped monthly data to a fixed case mix
    Adjust(AdjustArgs),
    /// Estimate power or minimum detectable effect by nested simulation
    Power(PowerArgs),
}

fn common_settings(args: &CommonArgs) -> Result<Settings, CliError> {
    let mut settings = match &args.config {
        Some(path) => Settings::from_config_file(path)?,
        None => Settings::default(),
    };
    settings.set_opt("input", &args.input.as_ref().map(|p| p.display().to_string()));
    settings.set_opt("outcome", &args.outcome);
    settings.set_opt("t0", &args.t0);
    settings.set_opt("model", &args.model);
    settings.set_opt("lag", &args.lag);
    settings.set_opt("lag-outcome", &args.lag_outcome);
    settings.set_opt("lag-covariates", &args.lag_covariates);
    settings.set_opt("pivot-tol", &args.pivot_tol);
    settings.set_opt("R", &args.replicates);
    settings.set_opt("alpha", &args.alpha);
    settings.set_opt("seed", &args.seed);
    settings.set_opt("horizon", &args.horizon);
    settings.set_opt("smooth", &args.smooth);
    settings.set_opt("span", &args.span);
    settings.set_opt("degree", &args.degree);
    settings.set_opt("smooth-range", &args.smooth_range);
    settings.set_opt("season-model", &args.season_model);
    settings.set_opt(
        "out-dir",
        &args.out_dir.as_ref().map(|p| p.display().to_string()),
    );
    Ok(settings)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(args) => commands::cmd_fit(&common_settings(args)?),
        Command::Envelope(args) => commands::cmd_envelope(&common_settings(args)?),
        Command::Test(args) => {
            let mut settings = common_settings(&args.common)?;
            settings.set_opt("stat", &args.stat);
            settings.set_opt("stat-first", &args.stat_first);
            settings.set_opt("stat-last", &args.stat_last);
            settings.set_opt("stat-at", &args.stat_at);
            commands::cmd_test(&settings)
        }
        Command::Adjust(args) => {
            let mut settings = common_settings(&args.common)?;
            settings.set_opt(
                "grouped-input",
                &args.grouped_input.as_ref().map(|p| p.display().to_string()),
            );
            settings.set_opt("kind", &args.kind);
            settings.set_opt("window", &args.window);
            commands::cmd_adjust(&settings)
        }
        Command::Power(args) => {
            let mut settings = common_settings(&args.common)?;
            settings.set_opt("effect", &args.effect);
            settings.set_opt("target-power", &args.target_power);
            settings.set_opt("r-inner", &args.r_inner);
            settings.set_opt("n-outer", &args.n_outer);
            settings.set_opt("n-pre", &args.n_pre);
            settings.set_opt("n-post", &args.n_post);
            settings.set_opt("beta0", &args.beta0);
            settings.set_opt("beta1", &args.beta1);
            settings.set_opt("rho", &args.rho);
            settings.set_opt("sigma", &args.sigma);
            settings.set_opt("q2", &args.q2);
            settings.set_opt("q3", &args.q3);
            settings.set_opt("q4", &args.q4);
            settings.set_opt("sin-coef", &args.sin_coef);
            settings.set_opt("cos-coef", &args.cos_coef);
            settings.set_opt("stat-first", &args.stat_first);
            settings.set_opt("stat-last", &args.stat_last);
            commands::cmd_power(&settings)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
