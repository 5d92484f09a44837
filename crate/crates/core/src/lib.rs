// Index loops mirror the matrix algebra they implement, and negated
// comparisons on floats double as NaN guards.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Interrupted time series analysis via counterfactual simulation.
//!
//! The pipeline: fit a lagged-outcome regression to pre-policy data
//! ([`lagfit`]), simulate plausible counterfactual post-policy
//! trajectories with parameter uncertainty ([`simengine`]), and compare
//! the observed series against the simulated distribution through
//! envelopes, summary-statistic tests and smoothed impact curves
//! ([`inference`]). Seasonality enters either as quarter indicators,
//! sinusoids or named covariates ([`linmodel`]); composition drift is
//! handled by post-stratification ([`poststrat`]); prospective designs
//! are sized by nested simulation ([`power`]).

pub mod error;
pub mod inference;
pub mod lagfit;
pub mod linalg;
pub mod linmodel;
pub mod poststrat;
pub mod power;
pub mod series;
pub mod simengine;

pub use error::{Error, ErrorClass, Result};
pub use inference::{
    loess, make_envelope, smooth_series, smoothed_envelope, test_summary, Envelope, EnvelopeRow,
    SmootherSpec, SummaryStatistic, TestResult,
};
pub use lagfit::{
    check_constraint, fit_pre_policy, to_residual_params, ConstraintRow, LaggedFit, ResidualParams,
};
pub use linmodel::{
    build_design, classic_its, ols, ClassicItsResult, Design, ModelSpec, OlsFit, RowRange, Term,
};
pub use poststrat::{
    adjust_series, adjusted_time_series, compute_target_mix, GroupedMonthly, GroupedRow,
    MixTarget, OutcomeKind,
};
pub use power::{estimate_mdes, estimate_power, PowerResult, PowerScenario};
pub use series::{
    add_lagged_covariates, generate_synthetic, load_csv, Column, SyntheticSpec, TimeSeriesData,
};
pub use simengine::{
    draw_params, rho_diagnostics, simulate_known_params, simulate_trajectories, ParamDraw,
    RhoDiagnostics, TrajectorySet,
};
