//! Counterfactual trajectory simulation.
//!
//! Each replicate first draws a plausible parameter vector from the
//! sampling distribution of the fit (sigma from a scaled inverse
//! chi-square, then coefficients from a multivariate normal whose
//! covariance scales with the drawn sigma), then runs the lagged model
//! forward recursively from the observed anchor at t0, adding fresh
//! innovation noise at every step.
//!
//! Replicates use counter-based RNG substreams derived from the master
//! seed and the replicate id, so results are bit-identical no matter how
//! work is split across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lagfit::LaggedFit;
use crate::linalg::{cholesky_psd, Matrix};
use crate::linmodel::ColumnSource;
use crate::series::TimeSeriesData;

/// Fraction of explosive draws above which a warning is flagged.
pub const EXPLOSIVE_WARN_THRESHOLD: f64 = 0.05;

/// One plausible parameter vector.
#[derive(Debug, Clone)]
pub struct ParamDraw {
    /// Drawn regression coefficients, aligned to the fit's retained columns.
    pub beta_star: Vec<f64>,
    /// Drawn innovation SD (zero only for exact-fit degenerate models).
    pub sigma_star: f64,
    /// The drawn lagged-outcome coefficient (zero when unidentified).
    pub rho_star: f64,
    pub replicate_id: usize,
}

/// A set of simulated counterfactual post-policy trajectories.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    /// Simulated times t0+1 ..= horizon.
    pub times: Vec<i64>,
    /// One simulated series per replicate, each of length `times.len()`.
    pub trajectories: Vec<Vec<f64>>,
    /// The parameter draw behind each trajectory.
    pub draws: Vec<ParamDraw>,
    /// Master seed the set was generated from.
    pub seed: u64,
    /// (t0, observed outcome at t0): every recursion starts here.
    pub anchor: (i64, f64),
}

impl TrajectorySet {
    pub fn replicates(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.times.len()
    }

    /// Index of a time within the simulated horizon.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let offset = t - self.times.first()?;
        if offset >= 0 && (offset as usize) < self.times.len() {
            Some(offset as usize)
        } else {
            None
        }
    }

    /// Simulated values at one time across replicates.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.trajectories.iter().map(|tr| tr[index]).collect()
    }
}

/// Share of parameter draws outside the stationary range.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoDiagnostics {
    /// Fraction of draws with rho* >= 1 (projections compound).
    pub frac_explosive: f64,
    /// Fraction of draws with rho* < 0 (projections oscillate).
    pub frac_negative: f64,
    pub warn: bool,
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

struct DrawContext {
    chol: Matrix,
    dof: usize,
}

impl DrawContext {
    fn new(fit: &LaggedFit) -> Result<Self> {
        let n = fit.ols.n_used;
        let k = fit.ols.coefficients.len();
        if n <= k {
            return Err(Error::NonPositiveDof { n, k });
        }
        Ok(DrawContext {
            chol: cholesky_psd(&fit.ols.xtx_inv),
            dof: n - k,
        })
    }

    fn draw(&self, fit: &LaggedFit, replicate_id: usize, rng: &mut ChaCha8Rng) -> ParamDraw {
        // sigma* first: sigma*^2 = sigma_hat^2 * dof / chi2(dof).
        let chi = ChiSquared::new(self.dof as f64).expect("dof checked positive");
        let x: f64 = chi.sample(rng);
        let sigma_star = fit.sigma_tilde * (self.dof as f64 / x).sqrt();

        // beta* ~ N(beta_hat, sigma*^2 (X'X)^-1): the coefficient spread
        // scales with the drawn sigma.
        let k = fit.ols.coefficients.len();
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let lz = self.chol.mul_vec(&z);
        let beta_star: Vec<f64> = fit
            .ols
            .coefficients
            .iter()
            .zip(&lz)
            .map(|(b, d)| b + sigma_star * d)
            .collect();

        let rho_star = fit.rho_index().map(|i| beta_star[i]).unwrap_or(0.0);
        ParamDraw {
            beta_star,
            sigma_star,
            rho_star,
            replicate_id,
        }
    }
}

/// Draws `r` plausible parameter vectors from the fit's sampling
/// distribution; deterministic given the seed.
pub fn draw_params(fit: &LaggedFit, r: usize, seed: u64) -> Result<Vec<ParamDraw>> {
    if r == 0 {
        return Err(Error::InvalidSpec("at least one replicate required".into()));
    }
    let ctx = DrawContext::new(fit)?;
    Ok((0..r)
        .map(|rep| ctx.draw(fit, rep, &mut replicate_rng(seed, rep as u64)))
        .collect())
}

/// Simulates `r` counterfactual trajectories over t0+1 ..= horizon, each
/// from its own parameter draw, starting at the observed outcome at t0.
///
/// Post-policy values of every data-backed covariate must be available
/// through the horizon; calendar and sinusoid terms are computed from t
/// directly. Replicate `i` is identical regardless of thread count.
pub fn simulate_trajectories(
    fit: &LaggedFit,
    data: &TimeSeriesData,
    r: usize,
    seed: u64,
    horizon: i64,
) -> Result<TrajectorySet> {
    simulate_impl(fit, data, r, seed, horizon, true)
}

/// Simulates with the parameters held fixed at their estimates: only the
/// innovation noise is drawn. This understates uncertainty and is meant
/// for studying the recursion itself (and for exact variance checks);
/// [`simulate_trajectories`] is the real method.
pub fn simulate_known_params(
    fit: &LaggedFit,
    data: &TimeSeriesData,
    r: usize,
    seed: u64,
    horizon: i64,
) -> Result<TrajectorySet> {
    simulate_impl(fit, data, r, seed, horizon, false)
}

fn simulate_impl(
    fit: &LaggedFit,
    data: &TimeSeriesData,
    r: usize,
    seed: u64,
    horizon: i64,
    draw_parameters: bool,
) -> Result<TrajectorySet> {
    if r == 0 {
        return Err(Error::InvalidSpec("at least one replicate required".into()));
    }
    let t0 = data.t0();
    if horizon <= t0 {
        return Err(Error::InvalidSpec(format!(
            "horizon {horizon} must exceed t0 {t0}"
        )));
    }
    let ctx = DrawContext::new(fit)?;
    let times: Vec<i64> = (t0 + 1..=horizon).collect();
    let anchor_value = data
        .outcome_at(t0)
        .expect("t0 is always observed in validated data");

    // Evaluate every non-recursive column over the simulated horizon up
    // front; missing covariate values surface here as errors.
    let k = fit.ols.coefficients.len();
    let mut structural: Vec<Vec<f64>> = vec![vec![0.0; k]; times.len()];
    for (h, &t) in times.iter().enumerate() {
        for (j, col) in fit.design.columns.iter().enumerate() {
            if col.source == ColumnSource::LagOutcome {
                continue;
            }
            match col.value_at(data, t) {
                Some(v) => structural[h][j] = v,
                None => {
                    return Err(Error::MissingPostCovariate {
                        name: col.name.clone(),
                        time: t,
                    })
                }
            }
        }
    }
    let rho_index = fit.rho_index();

    let results: Vec<(Vec<f64>, ParamDraw)> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let draw = if draw_parameters {
                ctx.draw(fit, rep, &mut rng)
            } else {
                ParamDraw {
                    beta_star: fit.ols.coefficients.clone(),
                    sigma_star: fit.sigma_tilde,
                    rho_star: fit.rho_hat,
                    replicate_id: rep,
                }
            };
            let mut series = Vec::with_capacity(times.len());
            let mut prev = anchor_value;
            for row in &structural {
                let mut y = 0.0;
                for (j, x) in row.iter().enumerate() {
                    if Some(j) != rho_index {
                        y += draw.beta_star[j] * x;
                    }
                }
                y += draw.rho_star * prev;
                let noise: f64 = rng.sample(StandardNormal);
                y += noise * draw.sigma_star;
                series.push(y);
                prev = y;
            }
            (series, draw)
        })
        .collect();

    let mut trajectories = Vec::with_capacity(r);
    let mut draws = Vec::with_capacity(r);
    for (series, draw) in results {
        trajectories.push(series);
        draws.push(draw);
    }

    Ok(TrajectorySet {
        times,
        trajectories,
        draws,
        seed,
        anchor: (t0, anchor_value),
    })
}

/// Summarizes how often drawn lag coefficients leave the stationary
/// range. Draws are never censored: extreme draws stay in, and the
/// envelope quantiles trim them.
pub fn rho_diagnostics(draws: &[ParamDraw]) -> RhoDiagnostics {
    assert!(!draws.is_empty(), "diagnostics need at least one draw");
    let n = draws.len() as f64;
    let frac_explosive = draws.iter().filter(|d| d.rho_star >= 1.0).count() as f64 / n;
    let frac_negative = draws.iter().filter(|d| d.rho_star < 0.0).count() as f64 / n;
    RhoDiagnostics {
        frac_explosive,
        frac_negative,
        warn: frac_explosive > EXPLOSIVE_WARN_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagfit::fit_pre_policy;
    use crate::linmodel::ModelSpec;
    use crate::series::{generate_synthetic, SyntheticSpec};

    fn anchor_data(y_t0: f64) -> TimeSeriesData {
        let times: Vec<i64> = (-5..=6).collect();
        let outcome: Vec<f64> = times
            .iter()
            .map(|&t| if t == 0 { y_t0 } else { y_t0 + t as f64 * 0.1 })
            .collect();
        TimeSeriesData::new(times, outcome, "Y", vec![], 0, None).unwrap()
    }

    #[test]
    fn noiseless_recursion_converges_to_fixed_point() {
        let fit = LaggedFit::from_trend_parts(1.0, 0.0, 0.5, 0.0, 27);
        let data = anchor_data(4.0);
        let set = simulate_trajectories(&fit, &data, 3, 9, 6).unwrap();
        let expected = [3.0, 2.5, 2.25, 2.125, 2.0625, 2.03125];
        for traj in &set.trajectories {
            for (v, e) in traj.iter().zip(expected) {
                assert!((v - e).abs() < 1e-12, "{v} vs {e}");
            }
        }
        assert_eq!(set.anchor, (0, 4.0));
    }

    #[test]
    fn zero_vcov_keeps_coefficients_at_estimates() {
        let fit = LaggedFit::from_trend_parts(2.0, 0.1, 0.3, 1.5, 20);
        let draws = draw_params(&fit, 200, 4).unwrap();
        for d in &draws {
            assert_eq!(d.beta_star, vec![2.0, 0.1, 0.3]);
            assert!(d.sigma_star > 0.0);
            assert_eq!(d.rho_star, 0.3);
        }
    }

    #[test]
    fn sigma_star_squared_mean_matches_inverse_chi_square() {
        // E[sigma*^2] = sigma^2 * dof / (dof - 2); dof = 30 here.
        let fit = LaggedFit::from_trend_parts(0.0, 0.0, 0.2, 2.0, 30);
        let draws = draw_params(&fit, 50_000, 11).unwrap();
        let mean_sq: f64 =
            draws.iter().map(|d| d.sigma_star * d.sigma_star).sum::<f64>() / draws.len() as f64;
        let target = 4.0 * 30.0 / 28.0;
        assert!(
            (mean_sq - target).abs() / target < 0.03,
            "mean sigma*^2 {mean_sq} vs {target}"
        );
    }

    #[test]
    fn draw_moments_match_fit() {
        let data = generate_synthetic(&SyntheticSpec {
            beta0: 10.0,
            beta1: 0.2,
            rho: 0.4,
            sigma: 1.0,
            n_pre: 40,
            n_post: 5,
            t0: 0,
            seed: 44,
            ..Default::default()
        })
        .unwrap();
        let spec = ModelSpec::trend().with_lag_outcome(true);
        let fit = fit_pre_policy(&data, &spec).unwrap();
        let r = 20_000;
        let draws = draw_params(&fit, r, 3).unwrap();
        let k = fit.ols.coefficients.len();
        let dof = fit.ols.dof() as f64;

        // Means within 4 MC standard errors of the estimates.
        for j in 0..k {
            let mean: f64 = draws.iter().map(|d| d.beta_star[j]).sum::<f64>() / r as f64;
            let sd_target =
                (fit.ols.vcov.get(j, j) * dof / (dof - 2.0)).sqrt();
            let mcse = sd_target / (r as f64).sqrt();
            assert!(
                (mean - fit.ols.coefficients[j]).abs() < 4.0 * mcse + 1e-12,
                "coef {j}: mean {mean} vs {}",
                fit.ols.coefficients[j]
            );
        }

        // Covariance within 10% (relative to the entry scale) of
        // E[sigma*^2 / sigma^2] * vcov.
        let scale = dof / (dof - 2.0);
        let means: Vec<f64> = (0..k)
            .map(|j| draws.iter().map(|d| d.beta_star[j]).sum::<f64>() / r as f64)
            .collect();
        for i in 0..k {
            for j in 0..k {
                let emp: f64 = draws
                    .iter()
                    .map(|d| (d.beta_star[i] - means[i]) * (d.beta_star[j] - means[j]))
                    .sum::<f64>()
                    / (r - 1) as f64;
                let target = scale * fit.ols.vcov.get(i, j);
                let denom =
                    (scale * fit.ols.vcov.get(i, i) * scale * fit.ols.vcov.get(j, j)).sqrt();
                assert!(
                    (emp - target).abs() / denom < 0.10,
                    "cov[{i}][{j}]: {emp} vs {target}"
                );
            }
        }
    }

    #[test]
    fn fixed_theta_variance_accumulates_like_ar1() {
        let fit = LaggedFit::from_trend_parts(0.0, 0.0, 0.5, 1.0, 50);
        let data = anchor_data(0.0);
        let r = 20_000;
        let set = simulate_known_params(&fit, &data, r, 17, 3).unwrap();
        let targets = [1.0, 1.25, 1.3125];
        for (h, &target) in targets.iter().enumerate() {
            let col = set.column(h);
            let mean: f64 = col.iter().sum::<f64>() / r as f64;
            let var: f64 =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
            assert!(
                (var - target).abs() / target < 0.05,
                "horizon {}: var {var} vs {target}",
                h + 1
            );
        }
    }

    #[test]
    fn mean_prediction_matches_conditional_average() {
        // The average simulated endpoint equals the average one-step
        // conditional prediction up to the mean of the final noise draws.
        let data = generate_synthetic(&SyntheticSpec {
            beta0: 5.0,
            beta1: -0.05,
            rho: 0.5,
            sigma: 1.0,
            n_pre: 50,
            n_post: 6,
            t0: 0,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let spec = ModelSpec::trend().with_lag_outcome(true);
        let fit = fit_pre_policy(&data, &spec).unwrap();
        let r = 40_000;
        let set = simulate_trajectories(&fit, &data, r, 5, 6).unwrap();
        let t_last = 6i64;
        let h = set.index_of(t_last).unwrap();
        let mean_direct: f64 = set.column(h).iter().sum::<f64>() / r as f64;
        let mut mean_conditional = 0.0;
        for (rep, traj) in set.trajectories.iter().enumerate() {
            let d = &set.draws[rep];
            let prev = traj[h - 1];
            let b = &d.beta_star;
            mean_conditional += b[0] + b[1] * t_last as f64 + d.rho_star * prev;
        }
        mean_conditional /= r as f64;
        let tol = 4.0 * fit.sigma_tilde / (r as f64).sqrt();
        assert!(
            (mean_direct - mean_conditional).abs() < tol,
            "{mean_direct} vs {mean_conditional} (tol {tol})"
        );
    }

    #[test]
    fn identical_inputs_are_bit_identical_across_thread_counts() {
        let data = generate_synthetic(&SyntheticSpec {
            rho: 0.3,
            n_pre: 30,
            n_post: 8,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let spec = ModelSpec::trend().with_lag_outcome(true);
        let fit = fit_pre_policy(&data, &spec).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| simulate_trajectories(&fit, &data, 500, 123, 8).unwrap());
        let b = pool4.install(|| simulate_trajectories(&fit, &data, 500, 123, 8).unwrap());
        assert_eq!(a.trajectories, b.trajectories);
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert_eq!(x.beta_star, y.beta_star);
            assert_eq!(x.sigma_star, y.sigma_star);
        }
    }

    #[test]
    fn missing_post_covariate_is_an_error() {
        // Temp exists only through the observed range; simulating past
        // t_max needs values that are not there.
        let times: Vec<i64> = (1..=12).collect();
        let temp: Vec<f64> = times
            .iter()
            .map(|&t| 10.0 * (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
            .collect();
        let y: Vec<f64> = times
            .iter()
            .zip(&temp)
            .map(|(&t, &x)| 1.0 + 0.5 * t as f64 + 0.3 * x + 0.1 * ((t * 31) % 7) as f64)
            .collect();
        let data = TimeSeriesData::new(
            times,
            y,
            "Y",
            vec![crate::series::Column {
                name: "Temp".into(),
                values: temp,
            }],
            8,
            None,
        )
        .unwrap();
        let spec = ModelSpec::trend()
            .with_covariate("Temp")
            .with_lag_outcome(true)
            .with_lag_covariates(true);
        let fit = fit_pre_policy(&data, &spec).unwrap();
        let err = simulate_trajectories(&fit, &data, 10, 1, 16).unwrap_err();
        assert!(matches!(err, Error::MissingPostCovariate { .. }));
        // Within the observed range everything is available.
        assert!(simulate_trajectories(&fit, &data, 10, 1, 12).is_ok());
    }

    #[test]
    fn pure_trend_models_extrapolate_past_the_observed_range() {
        // Every column is a function of t, so any horizon works.
        let data = generate_synthetic(&SyntheticSpec {
            beta0: 3.0,
            beta1: 0.2,
            rho: 0.4,
            sigma: 1.0,
            n_pre: 30,
            n_post: 4,
            t0: 0,
            seed: 6,
            ..Default::default()
        })
        .unwrap();
        let spec = ModelSpec::trend().with_lag_outcome(true);
        let fit = fit_pre_policy(&data, &spec).unwrap();
        let set = simulate_trajectories(&fit, &data, 50, 2, 40).unwrap();
        assert_eq!(set.times.last(), Some(&40));
        assert_eq!(set.trajectories[0].len(), 40);
    }

    #[test]
    fn rho_diagnostics_counts_tails() {
        let mk = |rho: f64, id: usize| ParamDraw {
            beta_star: vec![0.0, 0.0, rho],
            sigma_star: 1.0,
            rho_star: rho,
            replicate_id: id,
        };
        let calm: Vec<ParamDraw> = (0..100).map(|i| mk(0.3, i)).collect();
        let d = rho_diagnostics(&calm);
        assert_eq!(d.frac_explosive, 0.0);
        assert_eq!(d.frac_negative, 0.0);
        assert!(!d.warn);

        let mixed: Vec<ParamDraw> = (0..100)
            .map(|i| mk(if i < 10 { 1.2 } else { 0.5 }, i))
            .collect();
        let d = rho_diagnostics(&mixed);
        assert!((d.frac_explosive - 0.10).abs() < 1e-12);
        assert!(d.warn);

        let negative: Vec<ParamDraw> = (0..100)
            .map(|i| mk(if i < 60 { -0.2 } else { 0.1 }, i))
            .collect();
        let d = rho_diagnostics(&negative);
        assert!((d.frac_negative - 0.60).abs() < 1e-12);
        assert!(!d.warn);
    }

    #[test]
    fn explosive_draw_fraction_reflects_sampling_distribution() {
        // rho_hat near 1 with a wide SE puts real mass above 1.
        let mut fit = LaggedFit::from_trend_parts(0.0, 0.0, 0.95, 1.0, 10);
        // Give the lag coefficient a standard error of about 0.1.
        fit.ols.xtx_inv.set(2, 2, 0.01);
        fit.ols.vcov.set(2, 2, 0.01);
        let draws = draw_params(&fit, 20_000, 21).unwrap();
        let d = rho_diagnostics(&draws);
        assert!(d.frac_explosive > 0.2, "frac {}", d.frac_explosive);
        assert!(d.warn);
    }

    #[test]
    fn negative_rho_hat_yields_mostly_negative_draws_without_warning() {
        // rho_hat = -0.2 with SE 0.1: the mass below zero is about
        // Phi(2) = 0.977; negative draws are reported, never flagged.
        let mut fit = LaggedFit::from_trend_parts(0.0, 0.0, -0.2, 1.0, 30);
        fit.ols.xtx_inv.set(2, 2, 0.01);
        fit.ols.vcov.set(2, 2, 0.01);
        let draws = draw_params(&fit, 20_000, 33).unwrap();
        let d = rho_diagnostics(&draws);
        assert!(d.frac_negative > 0.5, "frac_negative {}", d.frac_negative);
        assert!((d.frac_negative - 0.977).abs() < 0.05);
        assert_eq!(d.frac_explosive, 0.0);
        assert!(!d.warn);
    }
}
