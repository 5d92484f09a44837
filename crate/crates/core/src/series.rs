//! Single-unit monthly time series: validated construction, CSV ingestion,
//! lagged-covariate augmentation and synthetic generation.
//!
//! Times are consecutive integer month indices with no gap; they may be
//! negative (a common convention puts the last pre-policy month at t0 = 0).
//! Calendar months, when known, map onto quarters as Q1 = {1,2,3},
//! Q2 = {4,5,6}, Q3 = {7,8,9}, Q4 = {10,11,12}.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linmodel::{ModelSpec, Term};

/// Prefix used for lag-1 copies of columns.
pub const LAG_PREFIX: &str = "lag_";

/// A named covariate column aligned to the time index.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Ordered monthly observations for one unit, with the policy change
/// taking effect after `t0`.
#[derive(Debug, Clone)]
pub struct TimeSeriesData {
    times: Vec<i64>,
    outcome: Vec<f64>,
    outcome_name: String,
    covariates: Vec<Column>,
    t0: i64,
    /// (time, month-of-year) pair anchoring the calendar, when known.
    month_anchor: Option<(i64, u32)>,
}

impl TimeSeriesData {
    /// Validates and assembles a series.
    ///
    /// Requires consecutive unit-step times, `t0` among them with at least
    /// three pre-policy and one post-policy point, a finite outcome, and
    /// covariate columns matching the time index in length.
    pub fn new(
        times: Vec<i64>,
        outcome: Vec<f64>,
        outcome_name: impl Into<String>,
        covariates: Vec<Column>,
        t0: i64,
        month_anchor: Option<(i64, u32)>,
    ) -> Result<Self> {
        let outcome_name = outcome_name.into();
        if times.is_empty() {
            return Err(Error::EmptyDesign);
        }
        for w in times.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::NonConsecutiveTimes {
                    previous: w[0],
                    expected: w[0] + 1,
                    found: w[1],
                });
            }
        }
        if outcome.len() != times.len() {
            return Err(Error::InvalidSpec(format!(
                "outcome length {} does not match {} times",
                outcome.len(),
                times.len()
            )));
        }
        for (i, y) in outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFiniteOutcome {
                    column: outcome_name,
                    time: times[i],
                });
            }
        }
        let (min, max) = (times[0], times[times.len() - 1]);
        let n_pre = times.iter().filter(|&&t| t <= t0).count();
        let n_post = times.len() - n_pre;
        if !times.contains(&t0) || n_pre < 3 || n_post < 1 {
            return Err(Error::T0OutOfRange { t0, min, max });
        }
        for col in &covariates {
            if col.values.len() != times.len() {
                return Err(Error::InvalidSpec(format!(
                    "covariate `{}` has {} values for {} times",
                    col.name,
                    col.values.len(),
                    times.len()
                )));
            }
        }
        if let Some((_, m)) = month_anchor {
            if !(1..=12).contains(&m) {
                return Err(Error::BadMonth {
                    value: m as i64,
                    time: times[0],
                });
            }
        }
        Ok(TimeSeriesData {
            times,
            outcome,
            outcome_name,
            covariates,
            t0,
            month_anchor,
        })
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn t_min(&self) -> i64 {
        self.times[0]
    }

    pub fn t_max(&self) -> i64 {
        self.times[self.times.len() - 1]
    }

    pub fn n_pre(&self) -> usize {
        self.times.iter().filter(|&&t| t <= self.t0).count()
    }

    pub fn n_post(&self) -> usize {
        self.times.len() - self.n_pre()
    }

    pub fn month_anchor(&self) -> Option<(i64, u32)> {
        self.month_anchor
    }

    pub fn columns(&self) -> &[Column] {
        &self.covariates
    }

    /// Position of time `t` in the index, if observed.
    pub fn index_of(&self, t: i64) -> Option<usize> {
        let offset = t - self.times[0];
        if offset >= 0 && (offset as usize) < self.times.len() {
            Some(offset as usize)
        } else {
            None
        }
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    /// Outcome value at time `t`, if observed.
    pub fn outcome_at(&self, t: i64) -> Option<f64> {
        self.index_of(t).map(|i| self.outcome[i])
    }

    /// Calendar month of time `t`, extrapolated from the month anchor when
    /// one is known and otherwise from the default convention that t = 1
    /// is January.
    pub fn month_of(&self, t: i64) -> u32 {
        match self.month_anchor {
            Some((t_ref, m_ref)) => (((m_ref as i64 - 1) + (t - t_ref)).rem_euclid(12) + 1) as u32,
            None => default_month_of(t),
        }
    }

    /// Replaces the outcome column, keeping times, covariates and t0.
    pub fn with_outcome(&self, outcome: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        TimeSeriesData::new(
            self.times.clone(),
            outcome,
            name,
            self.covariates.clone(),
            self.t0,
            self.month_anchor,
        )
    }

    fn push_column(&mut self, name: String, values: Vec<f64>) {
        if let Some(col) = self.covariates.iter_mut().find(|c| c.name == name) {
            col.values = values;
        } else {
            self.covariates.push(Column { name, values });
        }
    }
}

/// Month of year under the default convention (t = 1 is January).
pub fn default_month_of(t: i64) -> u32 {
    ((t - 1).rem_euclid(12) + 1) as u32
}

/// Quarter (1..=4) of a calendar month.
pub fn quarter_of(month: u32) -> u8 {
    ((month - 1) / 3 + 1) as u8
}

/// Loads a series from CSV.
///
/// The file must carry a header row, an integer `t` column and the named
/// outcome column. An optional integer `M` column (month of year, 1-12)
/// anchors the calendar and produces derived quarter indicator columns
/// `Q2`, `Q3`, `Q4` unless columns of those names already exist. Every
/// other column is read as a real-valued covariate.
pub fn load_csv(path: impl AsRef<Path>, outcome_name: &str, t0: i64) -> Result<TimeSeriesData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let t_idx = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| Error::MissingColumn("t".into()))?;
    let y_idx = headers
        .iter()
        .position(|h| h == outcome_name)
        .ok_or_else(|| Error::MissingColumn(outcome_name.into()))?;
    let m_idx = headers.iter().position(|h| h == "M");

    let mut times: Vec<i64> = Vec::new();
    let mut outcome: Vec<f64> = Vec::new();
    let mut months: Vec<i64> = Vec::new();
    let mut columns: Vec<Column> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != t_idx && *i != y_idx && Some(*i) != m_idx)
        .map(|(_, h)| Column {
            name: h.clone(),
            values: Vec::new(),
        })
        .collect();
    let extra_indices: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != t_idx && *i != y_idx && Some(*i) != m_idx)
        .map(|(i, _)| i)
        .collect();

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let parse_int = |idx: usize| -> Result<i64> {
            let cell = record.get(idx).unwrap_or("");
            cell.parse::<i64>().map_err(|_| Error::NonNumericCell {
                column: headers[idx].clone(),
                row: row_no + 1,
                value: cell.to_string(),
            })
        };
        let parse_real = |idx: usize| -> Result<f64> {
            let cell = record.get(idx).unwrap_or("");
            cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                column: headers[idx].clone(),
                row: row_no + 1,
                value: cell.to_string(),
            })
        };

        times.push(parse_int(t_idx)?);
        outcome.push(parse_real(y_idx)?);
        if let Some(mi) = m_idx {
            months.push(parse_int(mi)?);
        }
        for (col, &idx) in columns.iter_mut().zip(&extra_indices) {
            col.values.push(parse_real(idx)?);
        }
    }

    if times.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "input CSV `{}` has no data rows",
            path.as_ref().display()
        )));
    }

    // Calendar validation and derived quarter indicators.
    let mut month_anchor = None;
    if m_idx.is_some() && !months.is_empty() {
        for (i, &m) in months.iter().enumerate() {
            if !(1..=12).contains(&m) {
                return Err(Error::BadMonth {
                    value: m,
                    time: times[i],
                });
            }
            if i > 0 {
                let expected = months[i - 1] % 12 + 1;
                if m != expected {
                    return Err(Error::NonConsecutiveMonths {
                        time: times[i],
                        previous: months[i - 1],
                        found: m,
                    });
                }
            }
        }
        month_anchor = Some((times[0], months[0] as u32));
        for q in 2..=4u8 {
            let name = format!("Q{q}");
            if columns.iter().any(|c| c.name == name) {
                continue;
            }
            let values: Vec<f64> = months
                .iter()
                .map(|&m| {
                    if quarter_of(m as u32) == q {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            columns.push(Column { name, values });
        }
    }

    TimeSeriesData::new(times, outcome, outcome_name, columns, t0, month_anchor)
}

/// Extends the series with lag-1 copies of the outcome and of every named
/// covariate in the model. Lag columns are named `lag_<original>` and are
/// undefined (NaN) at the earliest time, which fitting routines drop.
pub fn add_lagged_covariates(data: &TimeSeriesData, spec: &ModelSpec) -> Result<TimeSeriesData> {
    let mut out = data.clone();
    out.push_column(
        format!("{LAG_PREFIX}{}", data.outcome_name()),
        shift_one(data.outcome()),
    );
    for term in spec.terms() {
        if let Term::Covariate(name) = term {
            let values = data
                .covariate(name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            out.push_column(format!("{LAG_PREFIX}{name}"), shift_one(values));
        }
    }
    Ok(out)
}

/// Lag-1 shift; the first entry has no predecessor and becomes NaN.
pub fn shift_one(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(f64::NAN);
    out.extend_from_slice(&values[..values.len().saturating_sub(1)]);
    out
}

/// Parameters of the assumed data-generating process, run forward to
/// produce synthetic series: a linear trend plus optional quarter offsets
/// and a sinusoid, with AR(1) residuals.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub beta0: f64,
    pub beta1: f64,
    /// Residual autocorrelation; |rho| < 1.
    pub rho: f64,
    /// Innovation standard deviation of the AR(1) noise.
    pub sigma: f64,
    /// Offsets for quarters 2..4 relative to quarter 1.
    pub quarter_offsets: Option<[f64; 3]>,
    /// Coefficients on sin(2 pi t / 12) and cos(2 pi t / 12).
    pub sinusoid: Option<(f64, f64)>,
    pub n_pre: usize,
    pub n_post: usize,
    /// Last pre-policy time; series runs t0 - n_pre + 1 ..= t0 + n_post.
    pub t0: i64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            beta0: 0.0,
            beta1: 0.0,
            rho: 0.0,
            sigma: 1.0,
            quarter_offsets: None,
            sinusoid: None,
            n_pre: 60,
            n_post: 12,
            t0: 0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidSynthetic(format!(
                "|rho| must be < 1, got {}",
                self.rho
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidSynthetic(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.n_pre < 3 {
            return Err(Error::InvalidSynthetic(format!(
                "n_pre must be at least 3, got {}",
                self.n_pre
            )));
        }
        if self.n_post < 1 {
            return Err(Error::InvalidSynthetic("n_post must be at least 1".into()));
        }
        Ok(())
    }

    /// Standard deviation of the stationary AR(1) residual distribution.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (1.0 - self.rho * self.rho).sqrt()
    }

    /// Structural mean at time `t` (trend plus seasonal terms).
    pub fn structural(&self, t: i64) -> f64 {
        let mut v = self.beta0 + self.beta1 * t as f64;
        if let Some(offsets) = self.quarter_offsets {
            let q = quarter_of(default_month_of(t));
            if q >= 2 {
                v += offsets[(q - 2) as usize];
            }
        }
        if let Some((s, c)) = self.sinusoid {
            let angle = 2.0 * std::f64::consts::PI * t as f64 / 12.0;
            v += s * angle.sin() + c * angle.cos();
        }
        v
    }
}

/// Runs the assumed model forward as a generator. The residual at the
/// first time is drawn from the stationary AR(1) distribution so the
/// whole series is stationary around its trend; output is deterministic
/// given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeriesData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t_start = spec.t0 - spec.n_pre as i64 + 1;
    let t_end = spec.t0 + spec.n_post as i64;
    let times: Vec<i64> = (t_start..=t_end).collect();

    let mut eps = 0.0;
    let mut outcome = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        if i == 0 {
            eps = z * spec.stationary_sd();
        } else {
            eps = spec.rho * eps + z * spec.sigma;
        }
        outcome.push(spec.structural(t) + eps);
    }

    let months: Vec<u32> = times.iter().map(|&t| default_month_of(t)).collect();
    let mut columns = Vec::new();
    for q in 2..=4u8 {
        let values: Vec<f64> = months
            .iter()
            .map(|&m| if quarter_of(m) == q { 1.0 } else { 0.0 })
            .collect();
        columns.push(Column {
            name: format!("Q{q}"),
            values,
        });
    }

    TimeSeriesData::new(
        times.clone(),
        outcome,
        "Y",
        columns,
        spec.t0,
        Some((times[0], months[0])),
    )
}
