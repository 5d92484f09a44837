//! Acceptance suite: every criterion the library must meet, one test per
//! criterion, each printing a pass line with the measured margin. Run
//! with `cargo test -p its-core --test acceptance -- --nocapture` to see
//! the lines; the companion CLI determinism criterion lives in the cli
//! crate's acceptance suite.

#![allow(clippy::needless_range_loop)]

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use its_core::inference::{
    loess, make_envelope, smoothed_envelope, test_summary, SmootherSpec, SummaryStatistic,
};
use its_core::lagfit::{fit_pre_policy, to_residual_params, LaggedFit, ResidualParams};
use its_core::linmodel::{classic_its, ols, ModelSpec};
use its_core::poststrat::{
    adjust_series, compute_target_mix, GroupedMonthly, GroupedRow, MixTarget, OutcomeKind,
};
use its_core::power::{estimate_mdes, estimate_power, PowerScenario};
use its_core::series::{generate_synthetic, SyntheticSpec, TimeSeriesData};
use its_core::simengine::{simulate_known_params, simulate_trajectories};

#[test]
fn acceptance_01_ols_matches_normal_equations_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(8..=50usize);
        let k = rng.random_range(1..=6usize.min(n - 2));
        let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
        for _ in 1..k {
            columns.push((0..n).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect());
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let names: Vec<String> = (0..k).map(|j| format!("c{j}")).collect();

        let fit = ols(&columns, &names, &y, 1e-9).expect("well-conditioned design");
        assert!(fit.dropped_columns.is_empty());
        assert!(fit.vcov.max_asymmetry() <= 1e-12);
        let (coef_o, sigma_o, vcov_o, _) = normal_equations_fit(&columns, &y);

        let coef_scale = coef_o.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..k {
            let err = (fit.coefficients[j] - coef_o[j]).abs()
                / coef_o[j].abs().max(1e-6 * coef_scale.max(1e-12));
            worst = worst.max(err);
            assert!(err < 1e-10, "coefficient {j} off by {err:e}");
        }
        let sigma_err = (fit.sigma_hat - sigma_o).abs() / sigma_o.abs().max(1e-12);
        worst = worst.max(sigma_err);
        assert!(sigma_err < 1e-10, "sigma off by {sigma_err:e}");
        let vcov_scale = vcov_o
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..k {
                let err = (fit.vcov.get(i, j) - vcov_o[i][j]).abs()
                    / vcov_o[i][j].abs().max(1e-6 * vcov_scale);
                worst = worst.max(err);
                assert!(err < 1e-10, "vcov[{i}][{j}] off by {err:e}");
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(
        "01",
        "ols vs normal-equations oracle",
        &format!("100 designs, worst relative error {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_02_classic_its_closed_form_standard_errors() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n_pre = rng.random_range(6..=30usize);
        let n_post = rng.random_range(1..=8usize);
        let n = n_pre + n_post;
        let b0 = rng.random::<f64>() * 40.0 - 20.0;
        let b1 = rng.random::<f64>() * 2.0 - 1.0;
        let times: Vec<i64> = (1..=n as i64).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|&t| b0 + b1 * t as f64 + rng.random::<f64>() * 4.0 - 2.0)
            .collect();
        let data =
            TimeSeriesData::new(times.clone(), y.clone(), "Y", vec![], n_pre as i64, None)
                .unwrap();
        let classic = classic_its(&data).unwrap();

        // Full dummy-variable regression solved by plain normal equations.
        let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
        columns.push(times.iter().map(|&t| t as f64).collect());
        for &tp in &classic.times {
            columns.push(
                times
                    .iter()
                    .map(|&t| if t == tp { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        let (coef_o, sigma_o, vcov_o, _) = normal_equations_fit(&columns, &y);
        for (r, _) in classic.times.iter().enumerate() {
            let se_o = vcov_o[2 + r][2 + r].sqrt();
            let err = (classic.se_delta[r] - se_o).abs() / se_o;
            worst = worst.max(err);
            assert!(err < 1e-10, "se[{r}] off by {err:e}");
            let delta_err = (classic.delta_hat[r] - coef_o[2 + r]).abs()
                / coef_o[2 + r].abs().max(1e-6);
            assert!(delta_err < 1e-10, "delta[{r}] off by {delta_err:e}");
            assert!(
                classic.se_delta[r] >= classic.sigma_hat,
                "se {} below sigma {}",
                classic.se_delta[r],
                classic.sigma_hat
            );
        }
        let sigma_err = (classic.sigma_hat - sigma_o).abs() / sigma_o;
        assert!(sigma_err < 1e-10);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(
        "02",
        "closed-form ITS standard errors",
        &format!("50 splits, worst relative error {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_03_parameterization_roundtrip() {
    let mut worst = 0.0f64;
    for &rho in &[-0.8, -0.3, 0.0, 0.26, 0.5, 0.9] {
        for &b0 in &[-10.0, 0.0, 45.0] {
            for &b1 in &[-0.12, 0.0, 2.0] {
                let p = ResidualParams::new(b0, b1, rho, 1.3);
                let (l0, l1, l2) = p.lagged_coefficients();
                // Independent inverse map.
                let rho_back = l2;
                let beta1_back = l1 / (1.0 - l2);
                let beta0_back =
                    l0 / (1.0 - rho_back) - l1 * rho_back / ((1.0 - rho_back) * (1.0 - rho_back));
                let scale = b0.abs().max(b1.abs()).max(1.0);
                let err = (rho_back - rho)
                    .abs()
                    .max((beta1_back - b1).abs() / scale)
                    .max((beta0_back - b0).abs() / scale);
                worst = worst.max(err);
                assert!(err < 1e-12, "roundtrip at ({b0},{b1},{rho}): {err:e}");
            }
        }
    }

    // Noiseless recursion: exact recovery through the fitting surface.
    let mut y = vec![10.0];
    for _ in 1..14 {
        let prev = *y.last().unwrap();
        y.push(1.0 + 0.5 * prev);
    }
    let data = TimeSeriesData::new((1..=14).collect(), y, "Y", vec![], 12, None).unwrap();
    let fit = fit_pre_policy(&data, &ModelSpec::trend().with_lag_outcome(true)).unwrap();
    assert!((fit.ols.coefficient("intercept").unwrap() - 1.0).abs() < 1e-8);
    assert!(fit.ols.coefficient("t").unwrap().abs() < 1e-8);
    assert!((fit.rho_hat - 0.5).abs() < 1e-8);
    let p = to_residual_params(&fit).unwrap();
    assert!((p.beta0 - 2.0).abs() < 1e-8);
    assert!(p.beta1.abs() < 1e-8);
    pass(
        "03",
        "residual/lagged parameterization roundtrip",
        &format!("54-point grid, worst error {worst:.2e}; noiseless recursion exact"),
    );
}

#[test]
fn acceptance_04_residual_moments_of_synthetic_data() {
    let start = Instant::now();
    let n = 10_000usize;
    let data = generate_synthetic(&SyntheticSpec {
        beta0: 20.0,
        beta1: 0.05,
        rho: 0.6,
        sigma: 1.0,
        n_pre: n - 1,
        n_post: 1,
        t0: (n - 1) as i64,
        seed: 404,
        ..Default::default()
    })
    .unwrap();

    // Detrend with the independent normal-equations route.
    let times: Vec<f64> = data.times().iter().map(|&t| t as f64).collect();
    let columns = vec![vec![1.0; n], times.clone()];
    let (coef, _, _, _) = normal_equations_fit(&columns, data.outcome());
    let residuals: Vec<f64> = data
        .outcome()
        .iter()
        .zip(&times)
        .map(|(y, t)| y - coef[0] - coef[1] * t)
        .collect();

    let var = sample_var(&residuals);
    let target = 1.0 / (1.0 - 0.36);
    assert!(
        (var - target).abs() / target < 0.05,
        "residual variance {var} vs {target}"
    );
    let r1 = lag1_correlation(&residuals);
    assert!((r1 - 0.6).abs() < 0.05, "lag-1 correlation {r1}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass(
        "04",
        "synthetic residual moments",
        &format!(
            "var {var:.4} vs {target:.4}, lag-1 corr {r1:.4} vs 0.6, {elapsed:.2?}"
        ),
    );
}

#[test]
fn acceptance_05_ar_variance_accumulation() {
    let start = Instant::now();
    let fit = LaggedFit::from_trend_parts(0.0, 0.0, 0.5, 1.0, 60);
    let times: Vec<i64> = (-4..=4).collect();
    let data = TimeSeriesData::new(times, vec![0.0; 9], "Y", vec![], 0, None).unwrap();
    let r = 50_000;
    let set = simulate_known_params(&fit, &data, r, 505, 3).unwrap();
    let targets = [1.0, 1.25, 1.3125];
    let mut detail = String::new();
    for (h, &target) in targets.iter().enumerate() {
        let col = set.column(h);
        let var = sample_var(&col);
        assert!(
            (var - target).abs() / target < 0.03,
            "horizon {}: var {var} vs {target}",
            h + 1
        );
        detail.push_str(&format!("h{}={var:.4} ", h + 1));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(
        "05",
        "fixed-parameter AR variance accumulation",
        &format!("{detail}targets 1.0/1.25/1.3125, {elapsed:.2?}"),
    );
}

/// 500 null replications shared by the coverage and uniformity criteria:
/// per replication, whether the 95% envelope covered the realized value
/// at horizon 6, and the percentile of the 6-month average.
fn null_replications() -> &'static (usize, Vec<f64>) {
    static CELL: OnceLock<(usize, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = ModelSpec::trend().with_lag_outcome(true);
        let mut covered = 0usize;
        let mut percentiles = Vec::with_capacity(500);
        for rep in 0..500u64 {
            let data = generate_synthetic(&SyntheticSpec {
                beta0: 50.0,
                beta1: 0.1,
                rho: 0.3,
                sigma: 1.0,
                n_pre: 60,
                n_post: 6,
                t0: 0,
                seed: 60_000 + rep,
                ..Default::default()
            })
            .unwrap();
            let fit = fit_pre_policy(&data, &spec).unwrap();
            let traj = simulate_trajectories(&fit, &data, 1_000, 1_000 + rep, 6).unwrap();
            let env = make_envelope(&traj, &data, 0.05).unwrap();
            let row = env.row_at(6).unwrap();
            let y = row.observed.unwrap();
            if y >= row.lower.unwrap() && y <= row.upper.unwrap() {
                covered += 1;
            }
            let stat = SummaryStatistic::RangeAverage { first: 1, last: 6 };
            let res = test_summary(&traj, &data, &stat, 0.05).unwrap();
            percentiles.push(res.percentile);
        }
        (covered, percentiles)
    })
}

#[test]
fn acceptance_06_null_coverage_calibration() {
    let start = Instant::now();
    let (covered, _) = null_replications();
    let rate = *covered as f64 / 500.0;
    assert!(
        (0.92..=0.98).contains(&rate),
        "coverage {rate} outside [0.92, 0.98]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    pass(
        "06",
        "null envelope coverage at horizon 6",
        &format!("{rate:.3} over 500 replications, {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_07_null_percentiles_are_uniform() {
    let (_, percentiles) = null_replications();
    let ks = ks_distance_from_uniform(percentiles);
    assert!(ks < 0.08, "KS distance {ks}");
    pass(
        "07",
        "null p-value uniformity",
        &format!("KS distance {ks:.4} over 500 replications"),
    );
}

#[test]
fn acceptance_08_seasonality_model_narrows_the_envelope() {
    let start = Instant::now();
    let seasonal_model = ModelSpec::trend()
        .with_quarter_dummies()
        .with_lag_outcome(true)
        .with_lag_covariates(true);
    let plain_model = ModelSpec::trend().with_lag_outcome(true);
    let mut widths_seasonal = Vec::new();
    let mut widths_plain = Vec::new();
    for seed in 0..20u64 {
        let data = generate_synthetic(&SyntheticSpec {
            beta0: 100.0,
            beta1: -0.1,
            rho: 0.3,
            sigma: 1.0,
            quarter_offsets: Some([8.0, -5.0, 3.0]),
            n_pre: 60,
            n_post: 12,
            t0: 0,
            seed: 80_000 + seed,
            ..Default::default()
        })
        .unwrap();
        for (model, store) in [
            (&seasonal_model, &mut widths_seasonal),
            (&plain_model, &mut widths_plain),
        ] {
            let fit = fit_pre_policy(&data, model).unwrap();
            let traj = simulate_trajectories(&fit, &data, 2_000, seed, 12).unwrap();
            store.push(make_envelope(&traj, &data, 0.05).unwrap().mean_band_width());
        }
    }
    let w_seasonal = mean(&widths_seasonal);
    let w_plain = mean(&widths_plain);
    assert!(
        w_seasonal <= 0.75 * w_plain,
        "seasonal width {w_seasonal} not 25% below plain {w_plain}"
    );
    let elapsed = start.elapsed();
    pass(
        "08",
        "seasonality model narrows the envelope",
        &format!(
            "mean width {w_seasonal:.3} vs {w_plain:.3} ({:.0}% narrower), {elapsed:.2?}",
            100.0 * (1.0 - w_seasonal / w_plain)
        ),
    );
}

#[test]
fn acceptance_09_smoothing_narrows_the_envelope() {
    let start = Instant::now();
    let model = ModelSpec::trend().with_lag_outcome(true);
    let smoother = SmootherSpec::default();
    let runs = 200u64;
    let mut successes = 0usize;
    for seed in 0..runs {
        let data = generate_synthetic(&SyntheticSpec {
            beta0: 30.0,
            beta1: 0.05,
            rho: 0.3,
            sigma: 1.0,
            n_pre: 40,
            n_post: 12,
            t0: 0,
            seed: 90_000 + seed,
            ..Default::default()
        })
        .unwrap();
        let fit = fit_pre_policy(&data, &model).unwrap();
        let traj = simulate_trajectories(&fit, &data, 500, seed, 12).unwrap();
        let env = smoothed_envelope(&traj, &data, &smoother, 0.05).unwrap();
        if env.mean_smoothed_width().unwrap() < env.mean_band_width() {
            successes += 1;
        }
    }
    let p = sign_test_p(successes, runs as usize);
    assert!(p < 0.01, "sign test p {p} with {successes}/{runs} narrower");
    let elapsed = start.elapsed();
    pass(
        "09",
        "smoothed envelope is narrower",
        &format!("{successes}/{runs} paired runs narrower, sign-test p {p:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_10_loess_matches_per_point_wls() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let n = 30usize;
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect();
    let span = 0.5;
    let smoothed = loess(&x, &y, span, 1).unwrap();

    let window = (span * n as f64).ceil() as usize;
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut lo = i;
        let mut hi = i + 1;
        while hi - lo < window {
            if lo > 0 && (hi >= n || x[i] - x[lo - 1] <= x[hi] - x[i]) {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let d_max = (x[i] - x[lo]).max(x[hi - 1] - x[i]);
        // Closed-form weighted simple regression over the window.
        let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..hi {
            let u = (x[j] - x[i]).abs() / d_max;
            let w = if u >= 1.0 {
                0.0
            } else {
                (1.0 - u.powi(3)).powi(3)
            };
            sw += w;
            swx += w * x[j];
            swy += w * y[j];
            swxx += w * x[j] * x[j];
            swxy += w * x[j] * y[j];
        }
        let det = sw * swxx - swx * swx;
        let slope = (sw * swxy - swx * swy) / det;
        let intercept = (swy - slope * swx) / sw;
        let expected = intercept + slope * x[i];
        worst = worst.max((smoothed[i] - expected).abs());
        assert!(
            (smoothed[i] - expected).abs() < 1e-8,
            "point {i}: {} vs {expected}",
            smoothed[i]
        );
    }

    // Exact line reproduction at degree 1.
    let line: Vec<f64> = x.iter().map(|v| 7.0 - 0.4 * v).collect();
    let reproduced = loess(&x, &line, 0.6, 1).unwrap();
    for (a, b) in reproduced.iter().zip(&line) {
        assert!((a - b).abs() < 1e-10);
    }
    pass(
        "10",
        "loess vs per-point WLS oracle",
        &format!("30 points, worst absolute error {worst:.2e}; lines reproduced exactly"),
    );
}

#[test]
fn acceptance_11_post_stratification_hand_examples() {
    let month = |t: i64| {
        vec![
            GroupedRow {
                time: t,
                group: "A".into(),
                count: 40,
                outcome: 8.0,
                month: None,
            },
            GroupedRow {
                time: t,
                group: "B".into(),
                count: 60,
                outcome: 30.0,
                month: None,
            },
        ]
    };
    let mut rows = month(1);
    rows.extend(month(2));
    let counts = GroupedMonthly::from_rows(rows, OutcomeKind::Count).unwrap();
    let half = MixTarget::new(vec![("A".into(), 0.5), ("B".into(), 0.5)]).unwrap();
    let adjusted = adjust_series(&counts, &half).unwrap();
    assert_eq!(adjusted[0], 35.0);

    let month_p = |t: i64| {
        vec![
            GroupedRow {
                time: t,
                group: "A".into(),
                count: 40,
                outcome: 0.2,
                month: None,
            },
            GroupedRow {
                time: t,
                group: "B".into(),
                count: 60,
                outcome: 0.5,
                month: None,
            },
        ]
    };
    let mut rows = month_p(1);
    rows.extend(month_p(2));
    let props = GroupedMonthly::from_rows(rows, OutcomeKind::MeanOrProportion).unwrap();
    let adjusted = adjust_series(&props, &half).unwrap();
    assert_eq!(adjusted[0], 0.35);

    // Identity at the observed mix is exact.
    let observed_mix = compute_target_mix(&props, (1, 2)).unwrap();
    let identity = adjust_series(&props, &observed_mix).unwrap();
    let raw = (40.0 * 0.2 + 60.0 * 0.5) / 100.0;
    assert_eq!(identity[0], raw);
    pass(
        "11",
        "post-stratification hand examples",
        "count 35/100 exact, proportion 0.35 exact, identity at target mix exact",
    );
}

#[test]
fn acceptance_13_power_sanity() {
    let start = Instant::now();
    let base_generator = SyntheticSpec {
        beta0: 10.0,
        beta1: 0.05,
        rho: 0.3,
        sigma: 1.0,
        n_pre: 60,
        n_post: 12,
        t0: 0,
        seed: 0,
        ..Default::default()
    };
    let scenario = |generator: SyntheticSpec, effect: f64, n_outer: usize, r_inner: usize| {
        PowerScenario {
            summary: PowerScenario::default_summary(&generator),
            generator,
            effect,
            r_inner,
            n_outer,
            alpha: 0.05,
            seed: 1_313,
        }
    };

    // Null calibration: conservative rejection at most alpha + 0.03.
    let null = estimate_power(&scenario(base_generator.clone(), 0.0, 400, 200)).unwrap();
    assert!(
        null.rejection_rate <= 0.08,
        "null rejection {}",
        null.rejection_rate
    );
    assert_eq!(null.failures, 0);

    // Overwhelming effect.
    let sd = base_generator.stationary_sd();
    let strong = estimate_power(&scenario(base_generator.clone(), 10.0 * sd, 100, 100)).unwrap();
    assert!(
        strong.rejection_rate > 0.99,
        "overwhelming-effect power {}",
        strong.rejection_rate
    );

    // MDES monotone in sigma and in 1/n_pre, within Monte Carlo slack of
    // 0.03 stationary SDs.
    let tol = 0.03 * sd;
    let mdes_base = estimate_mdes(&scenario(base_generator.clone(), 0.0, 100, 100), 0.8).unwrap();
    let mut double_sigma = base_generator.clone();
    double_sigma.sigma = 2.0;
    let mdes_sigma2 = estimate_mdes(&scenario(double_sigma, 0.0, 100, 100), 0.8).unwrap();
    assert!(
        mdes_sigma2 > mdes_base - tol && mdes_sigma2 > mdes_base,
        "mdes did not grow with sigma: {mdes_base} -> {mdes_sigma2}"
    );
    let mut double_pre = base_generator.clone();
    double_pre.n_pre = 120;
    let mdes_longer = estimate_mdes(&scenario(double_pre, 0.0, 100, 100), 0.8).unwrap();
    assert!(
        mdes_longer <= mdes_base + tol,
        "mdes grew with more pre data: {mdes_base} -> {mdes_longer}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    pass(
        "13",
        "power sanity",
        &format!(
            "null {:.3}, strong {:.3}, mdes {:.3} -> sigma x2 {:.3}, n_pre x2 {:.3}, {elapsed:.2?}",
            null.rejection_rate, strong.rejection_rate, mdes_base, mdes_sigma2, mdes_longer
        ),
    );
}

#[test]
fn acceptance_13b_power_monotone_in_effect() {
    // Four-point grid with common random numbers; tolerance 0.03.
    let start = Instant::now();
    let generator = SyntheticSpec {
        beta0: 10.0,
        beta1: 0.05,
        rho: 0.3,
        sigma: 1.0,
        n_pre: 40,
        n_post: 12,
        t0: 0,
        seed: 0,
        ..Default::default()
    };
    let sd = generator.stationary_sd();
    let mut previous = -1.0f64;
    let mut rates = Vec::new();
    for &mult in &[0.0, 0.75, 1.5, 3.0] {
        let scenario = PowerScenario {
            summary: PowerScenario::default_summary(&generator),
            generator: generator.clone(),
            effect: mult * sd,
            r_inner: 100,
            n_outer: 200,
            alpha: 0.05,
            seed: 77,
        };
        let rate = estimate_power(&scenario).unwrap().rejection_rate;
        assert!(
            rate >= previous - 0.03,
            "power fell from {previous} to {rate} at effect {mult} SD"
        );
        rates.push(rate);
        previous = rate;
    }
    let elapsed = start.elapsed();
    pass(
        "13b",
        "power monotone in effect",
        &format!("grid {rates:?}, {elapsed:.2?}"),
    );
}
