//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by data loading, model fitting, simulation and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-consecutive times: expected t={expected} after t={previous}, found t={found}")]
    NonConsecutiveTimes {
        previous: i64,
        expected: i64,
        found: i64,
    },

    #[error("non-numeric cell `{value}` in column `{column}` at data row {row}")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },

    #[error("t0={t0} outside observed time range {min}..={max} (or too few rows on either side)")]
    T0OutOfRange { t0: i64, min: i64, max: i64 },

    #[error("outcome `{column}` is missing or non-finite at t={time}")]
    NonFiniteOutcome { column: String, time: i64 },

    #[error("month-of-year {value} out of range 1..=12 at t={time}")]
    BadMonth { value: i64, time: i64 },

    #[error("non-consecutive months at t={time}: month {found} does not follow {previous}")]
    NonConsecutiveMonths {
        time: i64,
        previous: i64,
        found: i64,
    },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid synthetic specification: {0}")]
    InvalidSynthetic(String),

    #[error("empty usable row set for design construction")]
    EmptyDesign,

    #[error("too few usable rows: need at least {needed}, have {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("degenerate design: no columns retained")]
    DegenerateDesign,

    #[error("outcome is constant over the fitting window; lagged-outcome model is unidentified")]
    ConstantOutcome,

    #[error("lagged-outcome coefficient {0} implies a nonstationary process; conversion undefined")]
    NonstationaryRho(f64),

    #[error("residual-parameter conversion requires a pure trend model (intercept + linear time)")]
    NotPureTrend,

    #[error("covariate `{name}` has no value at simulated time t={time}")]
    MissingPostCovariate { name: String, time: i64 },

    #[error("non-positive degrees of freedom: n={n}, k={k}")]
    NonPositiveDof { n: usize, k: usize },

    #[error("alpha must lie strictly inside (0,1), got {0}")]
    InvalidAlpha(f64),

    #[error("summary statistic range [{first}, {last}] is empty or outside the simulated horizon")]
    BadStatRange { first: i64, last: i64 },

    #[error("smoothing window too small: span {span} yields {got} points, need at least {needed}")]
    WindowTooSmall {
        span: f64,
        got: usize,
        needed: usize,
    },

    #[error("invalid smoother: {0}")]
    InvalidSmoother(String),

    #[error("group `{group}` has zero count at t={time} but carries positive target weight")]
    ZeroGroupCount { group: String, time: i64 },

    #[error("grouped data incomplete: group `{group}` missing at t={time}")]
    IncompleteGroupGrid { group: String, time: i64 },

    #[error("duplicate grouped row for group `{group}` at t={time}")]
    DuplicateGroupRow { group: String, time: i64 },

    #[error("target-mix window [{from}, {to}] has zero total count")]
    ZeroWindowTotal { from: i64, to: i64 },

    #[error("invalid target mix: {0}")]
    InvalidMix(String),

    #[error("invalid power scenario: {0}")]
    InvalidScenario(String),

    #[error("effect-size search failed to bracket target power {target}: power at effect {effect} is {power}")]
    UnbracketedPower {
        target: f64,
        effect: f64,
        power: f64,
    },

    #[error("power estimates non-monotone in effect size beyond Monte Carlo noise")]
    NonMonotonePower,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by callers that map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, file problems, or configuration mistakes.
    Input,
    /// The inputs were well-formed but the numerics could not proceed.
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            MissingColumn(_)
            | NonConsecutiveTimes { .. }
            | NonNumericCell { .. }
            | T0OutOfRange { .. }
            | NonFiniteOutcome { .. }
            | BadMonth { .. }
            | NonConsecutiveMonths { .. }
            | InvalidSpec(_)
            | InvalidSynthetic(_)
            | InvalidAlpha(_)
            | BadStatRange { .. }
            | InvalidSmoother(_)
            | IncompleteGroupGrid { .. }
            | DuplicateGroupRow { .. }
            | InvalidMix(_)
            | InvalidScenario(_)
            | Io(_)
            | Csv(_) => ErrorClass::Input,
            EmptyDesign
            | TooFewRows { .. }
            | DegenerateDesign
            | ConstantOutcome
            | NonstationaryRho(_)
            | NotPureTrend
            | MissingPostCovariate { .. }
            | NonPositiveDof { .. }
            | WindowTooSmall { .. }
            | ZeroGroupCount { .. }
            | ZeroWindowTotal { .. }
            | UnbracketedPower { .. }
            | NonMonotonePower => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
