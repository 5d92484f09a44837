//! The five pipeline commands: fit, envelope, test, adjust, power.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use its_core::inference::{
    make_envelope, smoothed_envelope, test_summary, Envelope, SmootherSpec, SummaryStatistic,
    TestResult,
};
use its_core::lagfit::{check_constraint, fit_pre_policy, LaggedFit};
use its_core::linmodel::{fit_design, ModelSpec, OlsFit, RowRange};
use its_core::poststrat::{
    adjust_series, compute_target_mix, GroupedMonthly, OutcomeKind,
};
use its_core::power::{estimate_mdes, estimate_power, PowerResult, PowerScenario};
use its_core::series::{load_csv, SyntheticSpec, TimeSeriesData};
use its_core::simengine::{rho_diagnostics, simulate_trajectories, TrajectorySet};

use crate::settings::Settings;
use crate::svg::envelope_svg;
use crate::CliError;

const DEFAULT_REPLICATES: usize = 10_000;
const DEFAULT_ALPHA: f64 = 0.05;

struct AnalysisInputs {
    data: TimeSeriesData,
    model: ModelSpec,
    replicates: usize,
    alpha: f64,
    seed: u64,
    horizon: i64,
    out_dir: PathBuf,
}

fn load_inputs(settings: &Settings) -> Result<AnalysisInputs, CliError> {
    let input = settings.require("input")?;
    let outcome = settings.require("outcome")?;
    let t0 = settings
        .get_i64("t0")?
        .ok_or_else(|| CliError::Config("missing required setting `t0`".into()))?;
    let data = load_csv(input, outcome, t0)?;
    let model = settings.model_spec()?;
    let replicates = settings.get_usize("R")?.unwrap_or(DEFAULT_REPLICATES);
    let alpha = settings.get_f64("alpha")?.unwrap_or(DEFAULT_ALPHA);
    let seed = settings.get_u64("seed")?.unwrap_or(0);
    let horizon = settings.get_i64("horizon")?.unwrap_or_else(|| data.t_max());
    let out_dir = PathBuf::from(settings.get("out-dir").unwrap_or("out"));
    Ok(AnalysisInputs {
        data,
        model,
        replicates,
        alpha,
        seed,
        horizon,
        out_dir,
    })
}

fn smoother_settings(settings: &Settings) -> Result<SmootherSpec, CliError> {
    Ok(SmootherSpec {
        span: settings.get_f64("span")?.unwrap_or(0.75),
        degree: settings.get_usize("degree")?.unwrap_or(1),
        fit_range: settings.smooth_range()?,
        seasonality_model: settings.season_model()?,
    })
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn coefficient_table(fit: &OlsFit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "  {:<16}{:>14}{:>14}", "column", "estimate", "std.error");
    for (i, name) in fit.column_names.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {:<16}{:>14.6}{:>14.6}",
            name,
            fit.coefficients[i],
            fit.std_error(i)
        );
    }
    out
}

fn fit_report(data: &TimeSeriesData, fit: &LaggedFit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "lagged-outcome model fit, pre-policy rows only");
    let _ = writeln!(
        out,
        "  outcome: {}   t0: {}   rows used: {}",
        data.outcome_name(),
        data.t0(),
        fit.ols.n_used
    );
    out.push_str(&coefficient_table(&fit.ols));
    let _ = writeln!(
        out,
        "  innovation SD (sigma): {:.6}   lag coefficient (rho): {:.6}",
        fit.sigma_tilde, fit.rho_hat
    );
    if !fit.rho_identified {
        let _ = writeln!(
            out,
            "  note: the lagged outcome was collinear with the trend (exact fit); rho treated as 0"
        );
    }
    if fit.ols.dropped_columns.is_empty() {
        let _ = writeln!(out, "  dropped for collinearity: none");
    } else {
        let _ = writeln!(
            out,
            "  dropped for collinearity: {}",
            fit.ols.dropped_columns.join(", ")
        );
    }
    let diag = check_constraint(fit);
    if !diag.is_empty() {
        let _ = writeln!(out, "  anti-trend diagnostic (implied -beta*rho vs estimated):");
        let _ = writeln!(
            out,
            "  {:<16}{:>14}{:>14}{:>14}",
            "column", "implied", "estimated", "discrepancy"
        );
        for row in &diag {
            let _ = writeln!(
                out,
                "  {:<16}{:>14.6}{:>14.6}{:>14.6}",
                row.name, row.implied, row.estimated, row.discrepancy
            );
        }
    }
    out
}

pub fn cmd_fit(settings: &Settings) -> Result<(), CliError> {
    let inputs = load_inputs(settings)?;
    let mut csv = String::from("column,coefficient,std_error\n");
    let summary = if inputs.model.lag_outcome() {
        let fit = fit_pre_policy(&inputs.data, &inputs.model)?;
        for (i, name) in fit.ols.column_names.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{name},{},{}",
                fit.ols.coefficients[i],
                fit.ols.std_error(i)
            );
        }
        fit_report(&inputs.data, &fit)
    } else {
        let (_, fit) = fit_design(&inputs.data, &inputs.model, RowRange::PreOnly)?;
        for (i, name) in fit.column_names.iter().enumerate() {
            let _ = writeln!(csv, "{name},{},{}", fit.coefficients[i], fit.std_error(i));
        }
        let mut out = String::new();
        let _ = writeln!(out, "lagless model fit, pre-policy rows only");
        let _ = writeln!(
            out,
            "  outcome: {}   t0: {}   rows used: {}",
            inputs.data.outcome_name(),
            inputs.data.t0(),
            fit.n_used
        );
        out.push_str(&coefficient_table(&fit));
        let _ = writeln!(out, "  residual SD: {:.6}", fit.sigma_hat);
        if !fit.dropped_columns.is_empty() {
            let _ = writeln!(
                out,
                "  dropped for collinearity: {}",
                fit.dropped_columns.join(", ")
            );
        }
        out
    };
    print!("{summary}");
    write_output(&inputs.out_dir, "fit.csv", &csv)?;
    write_output(&inputs.out_dir, "summary.txt", &summary)?;
    Ok(())
}

fn run_pipeline(inputs: &AnalysisInputs) -> Result<(LaggedFit, TrajectorySet), CliError> {
    let fit = fit_pre_policy(&inputs.data, &inputs.model)?;
    let traj = simulate_trajectories(
        &fit,
        &inputs.data,
        inputs.replicates,
        inputs.seed,
        inputs.horizon,
    )?;
    Ok((fit, traj))
}

fn print_rho_health(traj: &TrajectorySet) {
    let diag = rho_diagnostics(&traj.draws);
    if diag.warn {
        println!(
            "warning: {:.1}% of lag-coefficient draws are >= 1; projections compound and the band will be wide",
            100.0 * diag.frac_explosive
        );
    }
}

pub fn cmd_envelope(settings: &Settings) -> Result<(), CliError> {
    let inputs = load_inputs(settings)?;
    if !inputs.model.lag_outcome() {
        return Err(CliError::Config(
            "envelope simulation requires the lagged outcome (set lag-outcome = true)".into(),
        ));
    }
    let (_fit, traj) = run_pipeline(&inputs)?;
    print_rho_health(&traj);

    let smooth = settings.get_bool("smooth")?.unwrap_or(false);
    let envelope: Envelope = if smooth {
        let spec = smoother_settings(settings)?;
        smoothed_envelope(&traj, &inputs.data, &spec, inputs.alpha)?
    } else {
        make_envelope(&traj, &inputs.data, inputs.alpha)?
    };

    let outside = envelope
        .rows
        .iter()
        .filter(|r| match (r.observed, r.lower, r.upper) {
            (Some(y), Some(lo), Some(hi)) => y < lo || y > hi,
            _ => false,
        })
        .count();
    let banded = envelope.rows.iter().filter(|r| r.lower.is_some()).count();
    println!(
        "{} trajectories over t={}..={} (seed {}); {} of {} post-policy months outside the {:.0}% band",
        inputs.replicates,
        traj.times.first().unwrap(),
        traj.times.last().unwrap(),
        inputs.seed,
        outside,
        banded,
        100.0 * (1.0 - inputs.alpha)
    );

    let title = format!(
        "{} with {:.0}% envelope (R = {})",
        inputs.data.outcome_name(),
        100.0 * (1.0 - inputs.alpha),
        inputs.replicates
    );
    write_output(&inputs.out_dir, "envelope.csv", &envelope.to_csv_string())?;
    write_output(
        &inputs.out_dir,
        "envelope.svg",
        &envelope_svg(&envelope, inputs.data.t0(), &title),
    )?;
    Ok(())
}

fn statistic_from(settings: &Settings, inputs: &AnalysisInputs) -> Result<SummaryStatistic, CliError> {
    let kind = settings.get("stat").unwrap_or("avg");
    match kind {
        "avg" | "average" => {
            let first = settings
                .get_i64("stat-first")?
                .unwrap_or(inputs.data.t0() + 1);
            let last = settings
                .get_i64("stat-last")?
                .unwrap_or_else(|| inputs.horizon.min(inputs.data.t_max()));
            Ok(SummaryStatistic::RangeAverage { first, last })
        }
        "smoothed" => {
            let at = settings.get_i64("stat-at")?.ok_or_else(|| {
                CliError::Config("stat = smoothed requires `stat-at`".into())
            })?;
            Ok(SummaryStatistic::SmoothedValue {
                at,
                smoother: smoother_settings(settings)?,
            })
        }
        other => Err(CliError::Config(format!(
            "setting `stat`: expected avg | smoothed, got `{other}`"
        ))),
    }
}

fn test_report(result: &TestResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "summary statistic: {}", result.description);
    let _ = writeln!(out, "  observed: {:.6}", result.t_obs);
    let _ = writeln!(
        out,
        "  simulated {:.0}% interval: ({:.6}, {:.6})",
        100.0 * (1.0 - result.alpha),
        result.ci.0,
        result.ci.1
    );
    let _ = writeln!(
        out,
        "  posterior predictive p-value: {:.6} (percentile {:.4})",
        result.p_value, result.percentile
    );
    let _ = writeln!(
        out,
        "  estimated impact: {:.6}, interval ({:.6}, {:.6})",
        result.impact_point, result.impact_ci.0, result.impact_ci.1
    );
    let _ = writeln!(
        out,
        "  decision at alpha {}: {}",
        result.alpha,
        if result.rejects() {
            "reject (observed outside simulated interval)"
        } else {
            "no rejection"
        }
    );
    out
}

pub fn cmd_test(settings: &Settings) -> Result<(), CliError> {
    let inputs = load_inputs(settings)?;
    let stat = statistic_from(settings, &inputs)?;
    let (_fit, traj) = run_pipeline(&inputs)?;
    print_rho_health(&traj);
    let result = test_summary(&traj, &inputs.data, &stat, inputs.alpha)?;

    let report = test_report(&result);
    print!("{report}");
    let mut csv = String::from(
        "statistic,t_obs,ci_lower,ci_upper,p_value,percentile,impact_point,impact_lower,impact_upper,alpha,reject\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{}",
        result.description,
        result.t_obs,
        result.ci.0,
        result.ci.1,
        result.p_value,
        result.percentile,
        result.impact_point,
        result.impact_ci.0,
        result.impact_ci.1,
        result.alpha,
        result.rejects()
    );
    write_output(&inputs.out_dir, "test.csv", &csv)?;
    write_output(&inputs.out_dir, "summary.txt", &report)?;
    Ok(())
}

pub fn cmd_adjust(settings: &Settings) -> Result<(), CliError> {
    let grouped_input = settings.require("grouped-input")?;
    let kind = match settings.get("kind").unwrap_or("mean") {
        "mean" | "proportion" => OutcomeKind::MeanOrProportion,
        "count" => OutcomeKind::Count,
        other => {
            return Err(CliError::Config(format!(
                "setting `kind`: expected mean | proportion | count, got `{other}`"
            )))
        }
    };
    let grouped = GroupedMonthly::load_csv(grouped_input, kind)?;
    let t_max = *grouped.times().last().expect("nonempty grid");

    let window = match settings.get("window").unwrap_or("post") {
        "post" => {
            let t0 = settings.get_i64("t0")?.ok_or_else(|| {
                CliError::Config("window = post requires `t0`".into())
            })?;
            (t0 + 1, t_max)
        }
        "all" => (*grouped.times().first().unwrap(), t_max),
        range => {
            let (a, b) = range.split_once(':').ok_or_else(|| {
                CliError::Config(format!(
                    "setting `window`: expected post | all | <from>:<to>, got `{range}`"
                ))
            })?;
            let parse = |s: &str| {
                s.trim().parse::<i64>().map_err(|_| {
                    CliError::Config(format!("setting `window`: bad time `{s}`"))
                })
            };
            (parse(a)?, parse(b)?)
        }
    };

    let target = compute_target_mix(&grouped, window)?;
    println!(
        "target mix over t={}..={} (by case share):",
        window.0, window.1
    );
    for (group, weight) in target.weights() {
        println!("  {group:<12} {:>8.4}", weight);
    }

    let adjusted = adjust_series(&grouped, &target)?;
    let outcome_name = settings.get("outcome").unwrap_or("Y");
    let mut csv = String::new();
    let with_month = grouped.month_anchor().is_some();
    if with_month {
        let _ = writeln!(csv, "t,M,{outcome_name}");
    } else {
        let _ = writeln!(csv, "t,{outcome_name}");
    }
    for (i, &t) in grouped.times().iter().enumerate() {
        if let Some((t_ref, m_ref)) = grouped.month_anchor() {
            let m = ((m_ref as i64 - 1) + (t - t_ref)).rem_euclid(12) + 1;
            let _ = writeln!(csv, "{t},{m},{}", adjusted[i]);
        } else {
            let _ = writeln!(csv, "{t},{}", adjusted[i]);
        }
    }
    let out_dir = PathBuf::from(settings.get("out-dir").unwrap_or("out"));
    write_output(&out_dir, "adjusted.csv", &csv)?;
    Ok(())
}

fn generator_from(settings: &Settings) -> Result<SyntheticSpec, CliError> {
    let quarters = match (
        settings.get_f64("q2")?,
        settings.get_f64("q3")?,
        settings.get_f64("q4")?,
    ) {
        (None, None, None) => None,
        (a, b, c) => Some([a.unwrap_or(0.0), b.unwrap_or(0.0), c.unwrap_or(0.0)]),
    };
    let sinusoid = match (settings.get_f64("sin-coef")?, settings.get_f64("cos-coef")?) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(0.0), b.unwrap_or(0.0))),
    };
    Ok(SyntheticSpec {
        beta0: settings.get_f64("beta0")?.unwrap_or(0.0),
        beta1: settings.get_f64("beta1")?.unwrap_or(0.0),
        rho: settings.get_f64("rho")?.unwrap_or(0.0),
        sigma: settings.get_f64("sigma")?.unwrap_or(1.0),
        quarter_offsets: quarters,
        sinusoid,
        n_pre: settings.get_usize("n-pre")?.unwrap_or(60),
        n_post: settings.get_usize("n-post")?.unwrap_or(12),
        t0: settings.get_i64("t0")?.unwrap_or(0),
        seed: 0,
    })
}

fn power_report(scenario: &PowerScenario, result: &PowerResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nested-simulation power analysis");
    let _ = writeln!(
        out,
        "  generator: trend ({}, {}), rho {}, sigma {}, {} pre / {} post months",
        scenario.generator.beta0,
        scenario.generator.beta1,
        scenario.generator.rho,
        scenario.generator.sigma,
        scenario.generator.n_pre,
        scenario.generator.n_post
    );
    let _ = writeln!(
        out,
        "  outer datasets: {} (failures {}), inner trajectories: {}, alpha {}",
        result.n_outer, result.failures, scenario.r_inner, scenario.alpha
    );
    let _ = writeln!(out, "  effect: {:.6}", scenario.effect);
    let _ = writeln!(out, "  rejection rate: {:.4}", result.rejection_rate);
    let _ = writeln!(
        out,
        "  mean envelope width: {:.6}",
        result.mean_interval_width
    );
    if let Some(mdes) = result.mdes_estimate {
        let _ = writeln!(out, "  estimated MDES: {:.6}", mdes);
    }
    out
}

pub fn cmd_power(settings: &Settings) -> Result<(), CliError> {
    let generator = generator_from(settings)?;
    let first = settings
        .get_i64("stat-first")?
        .unwrap_or(generator.t0 + 1);
    let last = settings
        .get_i64("stat-last")?
        .unwrap_or(generator.t0 + generator.n_post as i64);
    let mut scenario = PowerScenario {
        summary: SummaryStatistic::RangeAverage { first, last },
        generator,
        effect: settings.get_f64("effect")?.unwrap_or(0.0),
        r_inner: settings.get_usize("r-inner")?.unwrap_or(200),
        n_outer: settings.get_usize("n-outer")?.unwrap_or(200),
        alpha: settings.get_f64("alpha")?.unwrap_or(DEFAULT_ALPHA),
        seed: settings.get_u64("seed")?.unwrap_or(0),
    };

    let result = match settings.get_f64("target-power")? {
        Some(target) => {
            let mdes = estimate_mdes(&scenario, target)?;
            scenario.effect = mdes;
            let mut r = estimate_power(&scenario)?;
            r.mdes_estimate = Some(mdes);
            r
        }
        None => estimate_power(&scenario)?,
    };

    let report = power_report(&scenario, &result);
    print!("{report}");
    let mut csv = String::from(
        "effect,rejection_rate,mean_interval_width,failures,n_outer,r_inner,alpha,mdes\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{}",
        scenario.effect,
        result.rejection_rate,
        result.mean_interval_width,
        result.failures,
        result.n_outer,
        scenario.r_inner,
        scenario.alpha,
        result
            .mdes_estimate
            .map(|m| m.to_string())
            .unwrap_or_default()
    );
    let out_dir = PathBuf::from(settings.get("out-dir").unwrap_or("out"));
    write_output(&out_dir, "power.csv", &csv)?;
    write_output(&out_dir, "summary.txt", &report)?;
    Ok(())
}
