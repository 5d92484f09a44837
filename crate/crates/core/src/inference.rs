//! Envelopes, averaged-impact tests and smoothed impact curves.
//!
//! A trajectory set plus the observed series turns into per-time quantile
//! bands, rank-based tests of summary statistics against the simulated
//! reference distribution, and loess-smoothed variants. Whatever
//! smoothing is applied to the observed series is applied unchanged to
//! every simulated series, which is what keeps the comparison valid: one
//! [`SmootherSpec`] flows to both sides.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linmodel::{build_design_columns, ModelSpec, RowRange};
use crate::series::TimeSeriesData;
use crate::simengine::TrajectorySet;

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// One time point of an envelope. Pre-policy rows carry the observed
/// value only; simulated rows carry the band and, when the time is still
/// within the observed range, the observed value.
#[derive(Debug, Clone, Default)]
pub struct EnvelopeRow {
    pub time: i64,
    pub observed: Option<f64>,
    pub mean_prediction: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub smoothed_observed: Option<f64>,
    pub smoothed_lower: Option<f64>,
    pub smoothed_upper: Option<f64>,
}

/// Per-time quantile band of simulated counterfactuals, with the observed
/// series attached for plotting.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub alpha: f64,
    pub rows: Vec<EnvelopeRow>,
}

impl Envelope {
    pub fn row_at(&self, t: i64) -> Option<&EnvelopeRow> {
        self.rows.iter().find(|r| r.time == t)
    }

    /// Mean upper-minus-lower width over rows that carry a band.
    pub fn mean_band_width(&self) -> f64 {
        let widths: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| Some(r.upper? - r.lower?))
            .collect();
        widths.iter().sum::<f64>() / widths.len().max(1) as f64
    }

    /// Mean width of the smoothed band, when present.
    pub fn mean_smoothed_width(&self) -> Option<f64> {
        let widths: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| Some(r.smoothed_upper? - r.smoothed_lower?))
            .collect();
        if widths.is_empty() {
            None
        } else {
            Some(widths.iter().sum::<f64>() / widths.len() as f64)
        }
    }

    /// Serializes the envelope in the documented CSV layout. Smoothed
    /// columns appear only when some row carries them.
    pub fn to_csv_string(&self) -> String {
        let smoothed = self.rows.iter().any(|r| {
            r.smoothed_observed.is_some()
                || r.smoothed_lower.is_some()
                || r.smoothed_upper.is_some()
        });
        let mut out = String::from("t,observed,mean_prediction,lower,upper");
        if smoothed {
            out.push_str(",smoothed_observed,smoothed_lower,smoothed_upper");
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.time,
                cell(r.observed),
                cell(r.mean_prediction),
                cell(r.lower),
                cell(r.upper)
            ));
            if smoothed {
                out.push_str(&format!(
                    ",{},{},{}",
                    cell(r.smoothed_observed),
                    cell(r.smoothed_lower),
                    cell(r.smoothed_upper)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the per-time quantile envelope of a trajectory set at level
/// `alpha` (band from the alpha/2 and 1-alpha/2 empirical quantiles).
pub fn make_envelope(
    traj: &TrajectorySet,
    data: &TimeSeriesData,
    alpha: f64,
) -> Result<Envelope> {
    check_alpha(alpha)?;
    let mut rows = Vec::new();
    for (i, &t) in data.times().iter().enumerate() {
        if t > traj.times[0] - 1 {
            break;
        }
        rows.push(EnvelopeRow {
            time: t,
            observed: Some(data.outcome()[i]),
            ..Default::default()
        });
    }
    for (h, &t) in traj.times.iter().enumerate() {
        let sorted = sorted_copy(&traj.column(h));
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        rows.push(EnvelopeRow {
            time: t,
            observed: data.outcome_at(t),
            mean_prediction: Some(mean),
            lower: Some(quantile(&sorted, alpha / 2.0)),
            upper: Some(quantile(&sorted, 1.0 - alpha / 2.0)),
            ..Default::default()
        });
    }
    Ok(Envelope { alpha, rows })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Loess and working-model settings for smoothing a series.
#[derive(Debug, Clone)]
pub struct SmootherSpec {
    /// Fraction of the points used in each local fit, in (0, 1].
    pub span: f64,
    /// Local polynomial degree (0, 1 or 2).
    pub degree: usize,
    /// Which part of each series is smoothed (and which rows train the
    /// working model). Post-only avoids dragging pre-policy points across
    /// the policy change.
    pub fit_range: RowRange,
    /// Optional working seasonality model: its predictions are set aside,
    /// the residuals smoothed, and the predictions added back, so the
    /// seasonal structure survives the smoothing.
    pub seasonality_model: Option<ModelSpec>,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        SmootherSpec {
            span: 0.75,
            degree: 1,
            fit_range: RowRange::PostOnly,
            seasonality_model: None,
        }
    }
}

impl SmootherSpec {
    fn validate(&self) -> Result<()> {
        if !(self.span > 0.0 && self.span <= 1.0) {
            return Err(Error::InvalidSmoother(format!(
                "span must lie in (0, 1], got {}",
                self.span
            )));
        }
        if self.degree > 2 {
            return Err(Error::InvalidSmoother(format!(
                "degree must be 0, 1 or 2, got {}",
                self.degree
            )));
        }
        if let Some(m) = &self.seasonality_model {
            if m.lag_outcome() || m.lag_covariates() {
                return Err(Error::InvalidSmoother(
                    "working seasonality model must not use lagged terms".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Loess: at each point, a tricube-weighted polynomial fit over the
/// `ceil(span * n)` nearest neighbors, evaluated at that point. `x` must
/// be ascending.
pub fn loess(x: &[f64], y: &[f64], span: f64, degree: usize) -> Result<Vec<f64>> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let window = (span * n as f64).ceil() as usize;
    let window = window.min(n);
    if window < degree + 2 {
        return Err(Error::WindowTooSmall {
            span,
            got: window,
            needed: degree + 2,
        });
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Symmetric nearest-neighbor window, clipped at the ends.
        let mut lo = i;
        let mut hi = i + 1;
        while hi - lo < window {
            let can_left = lo > 0;
            let can_right = hi < n;
            let go_left = match (can_left, can_right) {
                (true, true) => x[i] - x[lo - 1] <= x[hi] - x[i],
                (true, false) => true,
                (false, true) => false,
                (false, false) => break,
            };
            if go_left {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let d_max = (x[i] - x[lo]).max(x[hi - 1] - x[i]);
        let mut weights = Vec::with_capacity(hi - lo);
        for j in lo..hi {
            let w = if d_max == 0.0 {
                1.0
            } else {
                tricube((x[j] - x[i]).abs() / d_max)
            };
            weights.push(w);
        }
        out.push(local_fit(&x[lo..hi], &y[lo..hi], &weights, x[i], degree));
    }
    Ok(out)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let c = 1.0 - u * u * u;
        c * c * c
    }
}

/// Weighted polynomial fit evaluated at `x0`, centered there for
/// conditioning. Falls back to lower degrees when the local system is
/// singular (too few effective points), bottoming out at the weighted
/// mean.
fn local_fit(x: &[f64], y: &[f64], w: &[f64], x0: f64, degree: usize) -> f64 {
    for d in (1..=degree).rev() {
        if let Some(v) = solve_local(x, y, w, x0, d) {
            return v;
        }
    }
    let sw: f64 = w.iter().sum();
    if sw == 0.0 {
        return y[x.iter().position(|&xi| xi == x0).unwrap_or(0)];
    }
    x.iter()
        .zip(y.iter().zip(w))
        .map(|(_, (yi, wi))| yi * wi)
        .sum::<f64>()
        / sw
}

fn solve_local(x: &[f64], y: &[f64], w: &[f64], x0: f64, degree: usize) -> Option<f64> {
    let p = degree + 1;
    // Normal equations over centered powers u^0..u^degree.
    let mut a = [[0.0f64; 4]; 3];
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let u = xi - x0;
        let mut pow = [1.0, 0.0, 0.0, 0.0, 0.0];
        for q in 1..=2 * degree {
            pow[q] = pow[q - 1] * u;
        }
        for r in 0..p {
            for c in 0..p {
                a[r][c] += wi * pow[r + c];
            }
            a[r][p] += wi * pow[r] * yi;
        }
    }
    // Gauss elimination with partial pivoting on the small system.
    let scale = a
        .iter()
        .take(p)
        .flat_map(|row| row.iter().take(p))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m = a;
    let mut perm: Vec<usize> = (0..p).collect();
    for col in 0..p {
        let (best, best_val) = (col..p)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|l, r| l.1.total_cmp(&r.1))?;
        if best_val <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        m.swap(col, best);
        perm.swap(col, best);
        for r in col + 1..p {
            let f = m[r][col] / m[col][col];
            for c in col..=p {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut coef = [0.0f64; 3];
    for r in (0..p).rev() {
        let mut acc = m[r][p];
        for c in r + 1..p {
            acc -= m[r][c] * coef[c];
        }
        coef[r] = acc / m[r][r];
    }
    Some(coef[0]) // value at x0 is the centered intercept
}

/// Smooths one series (observed or simulated). Without a working model
/// this is a loess pass over the rows selected by `fit_range`. With one,
/// the model is fit to those rows, its predictions subtracted, the
/// residuals loess-smoothed, and the predictions added back.
///
/// Returns `(time, smoothed value)` pairs over the selected rows.
pub fn smooth_series(
    times: &[i64],
    values: &[f64],
    data: &TimeSeriesData,
    spec: &SmootherSpec,
) -> Result<Vec<(i64, f64)>> {
    assert_eq!(times.len(), values.len());
    spec.validate()?;
    let t0 = data.t0();
    let selected: Vec<usize> = (0..times.len())
        .filter(|&i| spec.fit_range.contains(times[i], t0))
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let sel_times: Vec<i64> = selected.iter().map(|&i| times[i]).collect();
    let sel_x: Vec<f64> = sel_times.iter().map(|&t| t as f64).collect();
    let sel_y: Vec<f64> = selected.iter().map(|&i| values[i]).collect();

    let smoothed = match &spec.seasonality_model {
        None => loess(&sel_x, &sel_y, spec.span, spec.degree)?,
        Some(model) => {
            let (columns, names) = build_design_columns(data, model, &sel_times)?;
            let fit = crate::linmodel::ols(&columns, &names, &sel_y, model.pivot_tol())?;
            let mut predicted = vec![0.0; sel_y.len()];
            for (j, &idx) in fit.retained_indices.iter().enumerate() {
                for (p, v) in predicted.iter_mut().zip(&columns[idx]) {
                    *p += fit.coefficients[j] * v;
                }
            }
            let residuals: Vec<f64> = sel_y
                .iter()
                .zip(&predicted)
                .map(|(y, p)| y - p)
                .collect();
            let smoothed_resid = loess(&sel_x, &residuals, spec.span, spec.degree)?;
            predicted
                .iter()
                .zip(&smoothed_resid)
                .map(|(p, r)| p + r)
                .collect()
        }
    };

    Ok(sel_times.into_iter().zip(smoothed).collect())
}

/// Assembles the series a smoother sees for one trajectory: the simulated
/// post-policy values, preceded by the observed pre-policy values when
/// the fit range reaches before t0.
fn trajectory_series(
    traj_values: &[f64],
    traj_times: &[i64],
    data: &TimeSeriesData,
    fit_range: RowRange,
) -> (Vec<i64>, Vec<f64>) {
    match fit_range {
        RowRange::PostOnly => (traj_times.to_vec(), traj_values.to_vec()),
        RowRange::All | RowRange::PreOnly => {
            let mut times = Vec::new();
            let mut values = Vec::new();
            for (i, &t) in data.times().iter().enumerate() {
                if t <= data.t0() {
                    times.push(t);
                    values.push(data.outcome()[i]);
                }
            }
            times.extend_from_slice(traj_times);
            values.extend_from_slice(traj_values);
            (times, values)
        }
    }
}

/// Envelope over identically smoothed series: every simulated trajectory
/// and the observed series pass through the same smoother, and the band
/// is the per-time quantiles of the smoothed trajectories.
pub fn smoothed_envelope(
    traj: &TrajectorySet,
    data: &TimeSeriesData,
    spec: &SmootherSpec,
    alpha: f64,
) -> Result<Envelope> {
    spec.validate()?;
    if spec.fit_range == RowRange::PreOnly {
        return Err(Error::InvalidSmoother(
            "pre-only smoothing cannot produce a post-policy envelope".into(),
        ));
    }
    let mut envelope = make_envelope(traj, data, alpha)?;

    let smoothed: Vec<Vec<(i64, f64)>> = traj
        .trajectories
        .par_iter()
        .map(|series| {
            let (times, values) = trajectory_series(series, &traj.times, data, spec.fit_range);
            smooth_series(&times, &values, data, spec)
        })
        .collect::<Result<_>>()?;

    // Observed series over its own available times, same smoother.
    let obs_times: Vec<i64> = data.times().to_vec();
    let obs_values: Vec<f64> = data.outcome().to_vec();
    let smoothed_obs = smooth_series(&obs_times, &obs_values, data, spec)?;
    for (t, v) in smoothed_obs {
        if let Some(row) = envelope.rows.iter_mut().find(|r| r.time == t) {
            row.smoothed_observed = Some(v);
        }
    }

    for (h, &t) in traj.times.iter().enumerate() {
        let mut column: Vec<f64> = Vec::with_capacity(smoothed.len());
        for series in &smoothed {
            // Post-policy rows sit at a fixed offset from the end.
            let idx = series.len() - traj.times.len() + h;
            debug_assert_eq!(series[idx].0, t);
            column.push(series[idx].1);
        }
        column.sort_unstable_by(f64::total_cmp);
        if let Some(row) = envelope.rows.iter_mut().find(|r| r.time == t) {
            row.smoothed_lower = Some(quantile(&column, alpha / 2.0));
            row.smoothed_upper = Some(quantile(&column, 1.0 - alpha / 2.0));
        }
    }
    Ok(envelope)
}

/// A scalar summary of a post-policy series, used as the test statistic.
#[derive(Debug, Clone)]
pub enum SummaryStatistic {
    /// Plain average of the outcomes over a closed time range.
    RangeAverage { first: i64, last: i64 },
    /// Value of the smoothed series at one time.
    SmoothedValue { at: i64, smoother: SmootherSpec },
}

impl std::fmt::Display for SummaryStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SummaryStatistic::RangeAverage { first, last } => {
                write!(f, "average of t={first}..={last}")
            }
            SummaryStatistic::SmoothedValue { at, .. } => {
                write!(f, "smoothed value at t={at}")
            }
        }
    }
}

/// Result of comparing an observed summary against the simulated
/// reference distribution.
#[derive(Debug, Clone)]
pub struct TestResult {
    /// The observed summary statistic.
    pub t_obs: f64,
    /// Central (1 - alpha) interval of the simulated summaries.
    pub ci: (f64, f64),
    /// Two-sided posterior-predictive p-value, min(q, 1 - q).
    pub p_value: f64,
    /// Mid-rank percentile q of the observed summary among simulated ones.
    pub percentile: f64,
    /// Interval for the impact: observed minus the reversed interval.
    pub impact_ci: (f64, f64),
    /// Observed summary minus the mean simulated summary.
    pub impact_point: f64,
    pub alpha: f64,
    pub description: String,
}

impl TestResult {
    /// The test rejects exactly when the observed summary falls outside
    /// the simulated interval.
    pub fn rejects(&self) -> bool {
        self.t_obs < self.ci.0 || self.t_obs > self.ci.1
    }
}

fn evaluate_range_average(times: &[i64], values: &[f64], first: i64, last: i64) -> Option<f64> {
    let picked: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= first && t <= last)
        .map(|(_, &v)| v)
        .collect();
    let expected = (last - first + 1) as usize;
    if picked.len() != expected {
        return None;
    }
    Some(picked.iter().sum::<f64>() / picked.len() as f64)
}

fn smoothed_value_at(
    times: &[i64],
    values: &[f64],
    data: &TimeSeriesData,
    smoother: &SmootherSpec,
    at: i64,
) -> Result<f64> {
    let smoothed = smooth_series(times, values, data, smoother)?;
    smoothed
        .iter()
        .find(|(t, _)| *t == at)
        .map(|(_, v)| *v)
        .ok_or(Error::BadStatRange {
            first: at,
            last: at,
        })
}

/// Compares the observed summary statistic to the distribution of the
/// same statistic over the simulated trajectories. The percentile uses
/// mid-ranks with a half-count continuity correction,
/// `q = (#below + #equal/2 + 1/2) / (R + 1)`, and `p = min(q, 1-q)`.
pub fn test_summary(
    traj: &TrajectorySet,
    data: &TimeSeriesData,
    stat: &SummaryStatistic,
    alpha: f64,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let t0 = data.t0();

    let (t_obs, simulated) = match stat {
        SummaryStatistic::RangeAverage { first, last } => {
            if first > last || *first <= t0 {
                return Err(Error::BadStatRange {
                    first: *first,
                    last: *last,
                });
            }
            let t_obs = evaluate_range_average(data.times(), data.outcome(), *first, *last)
                .ok_or(Error::BadStatRange {
                    first: *first,
                    last: *last,
                })?;
            let sims: Vec<f64> = traj
                .trajectories
                .iter()
                .map(|series| {
                    evaluate_range_average(&traj.times, series, *first, *last).ok_or(
                        Error::BadStatRange {
                            first: *first,
                            last: *last,
                        },
                    )
                })
                .collect::<Result<_>>()?;
            (t_obs, sims)
        }
        SummaryStatistic::SmoothedValue { at, smoother } => {
            if *at <= t0 {
                return Err(Error::BadStatRange { first: *at, last: *at });
            }
            // Observed and simulated series must pass through the same
            // smoothing window, so simulated series are truncated to the
            // observed range.
            let t_cap = data.t_max();
            if *at > t_cap {
                return Err(Error::BadStatRange { first: *at, last: *at });
            }
            let t_obs = smoothed_value_at(data.times(), data.outcome(), data, smoother, *at)?;
            let keep = traj.times.iter().filter(|&&t| t <= t_cap).count();
            let sims: Vec<f64> = traj
                .trajectories
                .par_iter()
                .map(|series| {
                    let (times, values) = trajectory_series(
                        &series[..keep],
                        &traj.times[..keep],
                        data,
                        smoother.fit_range,
                    );
                    smoothed_value_at(&times, &values, data, smoother, *at)
                })
                .collect::<Result<_>>()?;
            (t_obs, sims)
        }
    };

    let r = simulated.len();
    let sorted = sorted_copy(&simulated);
    let ci = (
        quantile(&sorted, alpha / 2.0),
        quantile(&sorted, 1.0 - alpha / 2.0),
    );
    let below = sorted.iter().filter(|&&v| v < t_obs).count() as f64;
    let equal = sorted.iter().filter(|&&v| v == t_obs).count() as f64;
    let q = (below + 0.5 * equal + 0.5) / (r as f64 + 1.0);
    let p_value = q.min(1.0 - q);
    let mean_sim = sorted.iter().sum::<f64>() / r as f64;

    Ok(TestResult {
        t_obs,
        ci,
        p_value,
        percentile: q,
        impact_ci: (t_obs - ci.1, t_obs - ci.0),
        impact_point: t_obs - mean_sim,
        alpha,
        description: stat.to_string(),
    })
}
