//! Shared fixtures for the pipeline benchmarks.

use its_core::lagfit::{fit_pre_policy, LaggedFit};
use its_core::linmodel::ModelSpec;
use its_core::series::{generate_synthetic, SyntheticSpec, TimeSeriesData};

/// A seasonal series sized like a multi-year monthly evaluation.
pub fn bench_series() -> TimeSeriesData {
    generate_synthetic(&SyntheticSpec {
        beta0: 100.0,
        beta1: -0.2,
        rho: 0.5,
        sigma: 3.0,
        quarter_offsets: Some([6.0, -4.0, 2.0]),
        n_pre: 96,
        n_post: 24,
        t0: 0,
        seed: 1,
        ..Default::default()
    })
    .expect("valid spec")
}

/// The seasonal analysis model for [`bench_series`].
pub fn bench_model() -> ModelSpec {
    ModelSpec::trend()
        .with_quarter_dummies()
        .with_lag_outcome(true)
        .with_lag_covariates(true)
}

pub fn bench_fit() -> (TimeSeriesData, LaggedFit) {
    let data = bench_series();
    let fit = fit_pre_policy(&data, &bench_model()).expect("fit");
    (data, fit)
}
