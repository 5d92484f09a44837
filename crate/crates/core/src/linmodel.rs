//! Structural model specification, design-matrix construction with
//! collinearity handling, the OLS core, and the classic ITS baseline.
//!
//! A design is built from an ordered term list. When lagged covariates are
//! requested the design gains a lag-1 copy of every structural column;
//! copies that are linearly dependent on the contemporaneous columns (the
//! intercept, the time column, sinusoids) are detected during the QR pass
//! and dropped. Structural columns always precede lagged copies, and the
//! lagged outcome comes last, so collinearity always removes the lagged
//! duplicate rather than the trend itself.

use crate::error::{Error, Result};
use crate::linalg::{qr_least_squares, Matrix};
use crate::series::{quarter_of, TimeSeriesData, LAG_PREFIX};

/// Default pivot threshold: a column is dropped when its pivot magnitude
/// falls below this fraction of the largest pivot.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-9;

/// One structural term of the trend model.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Intercept,
    LinearTime,
    /// Indicators for quarters 2..4, computed from the calendar month.
    QuarterDummies,
    /// A named real-valued covariate column from the data.
    Covariate(String),
    /// sin(2 pi t / 12) and cos(2 pi t / 12), a smoothly shiftable yearly cycle.
    SinusoidPair,
}

/// Declarative description of the structural trend plus lag policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    terms: Vec<Term>,
    lag_outcome: bool,
    lag_covariates: bool,
    pivot_tol: f64,
}

impl ModelSpec {
    /// Builds a spec from an explicit term list. At most one intercept and
    /// one linear-time term are allowed; seasonal terms may be combined
    /// freely.
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let intercepts = terms.iter().filter(|t| **t == Term::Intercept).count();
        let times = terms.iter().filter(|t| **t == Term::LinearTime).count();
        if intercepts > 1 || times > 1 {
            return Err(Error::InvalidSpec(
                "at most one intercept and one linear-time term".into(),
            ));
        }
        Ok(ModelSpec {
            terms,
            lag_outcome: false,
            lag_covariates: false,
            pivot_tol: DEFAULT_PIVOT_TOL,
        })
    }

    /// Intercept plus linear time, no lags: the simple trend model.
    pub fn trend() -> Self {
        ModelSpec {
            terms: vec![Term::Intercept, Term::LinearTime],
            lag_outcome: false,
            lag_covariates: false,
            pivot_tol: DEFAULT_PIVOT_TOL,
        }
    }

    pub fn with_quarter_dummies(mut self) -> Self {
        self.terms.push(Term::QuarterDummies);
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>) -> Self {
        self.terms.push(Term::Covariate(name.into()));
        self
    }

    pub fn with_sinusoid(mut self) -> Self {
        self.terms.push(Term::SinusoidPair);
        self
    }

    pub fn with_lag_outcome(mut self, yes: bool) -> Self {
        self.lag_outcome = yes;
        self
    }

    pub fn with_lag_covariates(mut self, yes: bool) -> Self {
        self.lag_covariates = yes;
        self
    }

    /// Overrides the collinearity pivot threshold.
    pub fn with_pivot_tol(mut self, tol: f64) -> Self {
        self.pivot_tol = tol;
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn lag_outcome(&self) -> bool {
        self.lag_outcome
    }

    pub fn lag_covariates(&self) -> bool {
        self.lag_covariates
    }

    pub fn pivot_tol(&self) -> f64 {
        self.pivot_tol
    }

    /// Names of the data-backed covariates referenced by the terms.
    pub fn covariate_names(&self) -> Vec<&str> {
        self.terms
            .iter()
            .filter_map(|t| match t {
                Term::Covariate(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }

    /// True when the term list is exactly the simple trend (intercept and
    /// linear time, in either order).
    pub fn is_pure_trend(&self) -> bool {
        self.terms.len() == 2
            && self.terms.contains(&Term::Intercept)
            && self.terms.contains(&Term::LinearTime)
    }

    /// True when any seasonal term is present.
    pub fn has_seasonality(&self) -> bool {
        self.terms.iter().any(|t| {
            matches!(
                t,
                Term::QuarterDummies | Term::Covariate(_) | Term::SinusoidPair
            )
        })
    }
}

/// How a design column is computed at a given time.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSource {
    Intercept,
    Time,
    /// Indicator that the calendar month of t falls in this quarter (2..=4).
    Quarter(u8),
    /// Value of a named data column at t.
    Covariate(String),
    Sin,
    Cos,
    /// The outcome at t-1. During simulation this column is driven by the
    /// recursion rather than the data.
    LagOutcome,
}

/// Metadata for one design column: its name, how to compute it, and
/// whether it is evaluated at t-1 instead of t.
#[derive(Debug, Clone)]
pub struct DesignColumn {
    pub name: String,
    pub source: ColumnSource,
    pub lagged: bool,
}

impl DesignColumn {
    /// Evaluates the column at time `t` against the data. Returns None
    /// when the value is unavailable (out of range or NaN).
    pub fn value_at(&self, data: &TimeSeriesData, t: i64) -> Option<f64> {
        let tt = if self.lagged { t - 1 } else { t };
        let v = match &self.source {
            ColumnSource::Intercept => 1.0,
            ColumnSource::Time => tt as f64,
            ColumnSource::Quarter(q) => {
                if quarter_of(data.month_of(tt)) == *q {
                    1.0
                } else {
                    0.0
                }
            }
            ColumnSource::Sin => (2.0 * std::f64::consts::PI * tt as f64 / 12.0).sin(),
            ColumnSource::Cos => (2.0 * std::f64::consts::PI * tt as f64 / 12.0).cos(),
            ColumnSource::Covariate(name) => {
                let idx = data.index_of(tt)?;
                data.covariate(name).map(|c| c[idx])?
            }
            ColumnSource::LagOutcome => data.outcome_at(tt)?,
        };
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }
}

/// Which rows of the series enter a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRange {
    PreOnly,
    PostOnly,
    All,
}

impl RowRange {
    pub fn contains(self, t: i64, t0: i64) -> bool {
        match self {
            RowRange::PreOnly => t <= t0,
            RowRange::PostOnly => t > t0,
            RowRange::All => true,
        }
    }
}

/// A realized design matrix: retained columns, their metadata, the rows
/// (times) used, and the aligned outcome.
#[derive(Debug, Clone)]
pub struct Design {
    /// Retained column values, one Vec per column.
    pub x: Vec<Vec<f64>>,
    /// Metadata for retained columns, aligned to `x`.
    pub columns: Vec<DesignColumn>,
    /// Retained column names, aligned to `x`.
    pub names: Vec<String>,
    /// Column names removed as linearly dependent.
    pub dropped: Vec<String>,
    /// Times of the rows that entered the design.
    pub times: Vec<i64>,
    /// Outcome values aligned to `times`.
    pub outcome: Vec<f64>,
}

impl Design {
    /// Index of the lagged-outcome column, when present.
    pub fn lag_outcome_index(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.source == ColumnSource::LagOutcome)
    }

    /// Fitted values for a fit produced from this design.
    pub fn fitted(&self, fit: &OlsFit) -> Vec<f64> {
        let mut out = vec![0.0; self.times.len()];
        for (j, &idx) in fit.retained_indices.iter().enumerate() {
            let coef = fit.coefficients[j];
            for (o, v) in out.iter_mut().zip(&self.x[idx]) {
                *o += coef * v;
            }
        }
        out
    }
}

/// Candidate column list for a spec: structural terms first, then lagged
/// copies, then the lagged outcome.
fn candidate_columns(data: &TimeSeriesData, spec: &ModelSpec) -> Vec<DesignColumn> {
    let mut cols = Vec::new();
    let push_term = |term: &Term, lagged: bool, cols: &mut Vec<DesignColumn>| {
        let prefix = if lagged { LAG_PREFIX } else { "" };
        match term {
            Term::Intercept => cols.push(DesignColumn {
                name: format!("{prefix}intercept"),
                source: ColumnSource::Intercept,
                lagged,
            }),
            Term::LinearTime => cols.push(DesignColumn {
                name: format!("{prefix}t"),
                source: ColumnSource::Time,
                lagged,
            }),
            Term::QuarterDummies => {
                for q in 2..=4u8 {
                    cols.push(DesignColumn {
                        name: format!("{prefix}Q{q}"),
                        source: ColumnSource::Quarter(q),
                        lagged,
                    });
                }
            }
            Term::Covariate(name) => cols.push(DesignColumn {
                name: format!("{prefix}{name}"),
                source: ColumnSource::Covariate(name.clone()),
                lagged,
            }),
            Term::SinusoidPair => {
                cols.push(DesignColumn {
                    name: format!("{prefix}sin12"),
                    source: ColumnSource::Sin,
                    lagged,
                });
                cols.push(DesignColumn {
                    name: format!("{prefix}cos12"),
                    source: ColumnSource::Cos,
                    lagged,
                });
            }
        }
    };

    for term in spec.terms() {
        push_term(term, false, &mut cols);
    }
    if spec.lag_covariates() {
        for term in spec.terms() {
            push_term(term, true, &mut cols);
        }
    }
    if spec.lag_outcome() {
        cols.push(DesignColumn {
            name: format!("{LAG_PREFIX}{}", data.outcome_name()),
            source: ColumnSource::LagOutcome,
            lagged: true,
        });
    }
    cols
}

/// Builds the design matrix for `spec` over the rows selected by `range`.
///
/// Rows where any requested column is unavailable (the first observation
/// when lags are in play, or a missing covariate cell) are skipped.
/// Columns found linearly dependent are removed and recorded.
pub fn build_design(data: &TimeSeriesData, spec: &ModelSpec, range: RowRange) -> Result<Design> {
    for name in spec.covariate_names() {
        if data.covariate(name).is_none() {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let candidates = candidate_columns(data, spec);

    let mut times = Vec::new();
    let mut outcome = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); candidates.len()];
    'rows: for (i, &t) in data.times().iter().enumerate() {
        if !range.contains(t, data.t0()) {
            continue;
        }
        let mut row = Vec::with_capacity(candidates.len());
        for col in &candidates {
            match col.value_at(data, t) {
                Some(v) => row.push(v),
                None => continue 'rows,
            }
        }
        times.push(t);
        outcome.push(data.outcome()[i]);
        for (store, v) in values.iter_mut().zip(row) {
            store.push(v);
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyDesign);
    }

    let ls = qr_least_squares(&values, &outcome, spec.pivot_tol())
        .ok_or(Error::DegenerateDesign)?;
    let dropped = ls
        .dropped
        .iter()
        .map(|&j| candidates[j].name.clone())
        .collect();
    let mut x = Vec::with_capacity(ls.retained.len());
    let mut columns = Vec::with_capacity(ls.retained.len());
    let mut names = Vec::with_capacity(ls.retained.len());
    for &j in &ls.retained {
        x.push(values[j].clone());
        columns.push(candidates[j].clone());
        names.push(candidates[j].name.clone());
    }

    Ok(Design {
        x,
        columns,
        names,
        dropped,
        times,
        outcome,
    })
}

/// Evaluates a spec's candidate columns at prescribed times, for callers
/// that manage row selection themselves (working models in smoothing).
/// Unlike [`build_design`], an unavailable value is an error rather than
/// a dropped row, since the rows must stay aligned with an external
/// series.
pub fn build_design_columns(
    data: &TimeSeriesData,
    spec: &ModelSpec,
    times: &[i64],
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    for name in spec.covariate_names() {
        if data.covariate(name).is_none() {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let candidates = candidate_columns(data, spec);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); candidates.len()];
    for &t in times {
        for (store, col) in values.iter_mut().zip(&candidates) {
            match col.value_at(data, t) {
                Some(v) => store.push(v),
                None => {
                    return Err(Error::MissingPostCovariate {
                        name: col.name.clone(),
                        time: t,
                    })
                }
            }
        }
    }
    let names = candidates.into_iter().map(|c| c.name).collect();
    Ok((values, names))
}

/// An ordinary least-squares fit over retained design columns.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficient estimates, aligned to `column_names`.
    pub coefficients: Vec<f64>,
    /// sigma_hat^2 (X'X)^-1 over retained columns.
    pub vcov: Matrix,
    /// Residual standard deviation with divisor n - k.
    pub sigma_hat: f64,
    /// Columns removed for collinearity during this solve.
    pub dropped_columns: Vec<String>,
    /// Number of rows used.
    pub n_used: usize,
    /// Names of retained columns.
    pub column_names: Vec<String>,
    /// Indices of retained columns in the caller's column list.
    pub retained_indices: Vec<usize>,
    /// Unscaled (X'X)^-1; `vcov` is this times sigma_hat^2.
    pub xtx_inv: Matrix,
    /// Residual sum of squares.
    pub rss: f64,
}

impl OlsFit {
    /// Degrees of freedom n - k.
    pub fn dof(&self) -> usize {
        self.n_used - self.coefficients.len()
    }

    /// Coefficient for a named retained column.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    /// Standard error of a retained coefficient.
    pub fn std_error(&self, index: usize) -> f64 {
        self.vcov.get(index, index).max(0.0).sqrt()
    }
}

/// Least-squares fit of `y` on the given columns, dropping collinear
/// columns (later columns first) before solving the normal equations.
pub fn ols(columns: &[Vec<f64>], names: &[String], y: &[f64], pivot_tol: f64) -> Result<OlsFit> {
    let n = y.len();
    let ls = qr_least_squares(columns, y, pivot_tol).ok_or(Error::DegenerateDesign)?;
    let k = ls.retained.len();
    if n < k + 1 {
        return Err(Error::TooFewRows {
            needed: k + 1,
            got: n,
        });
    }
    let sigma2 = ls.rss / (n - k) as f64;
    let mut vcov = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            vcov.set(i, j, sigma2 * ls.xtx_inv.get(i, j));
        }
    }
    Ok(OlsFit {
        coefficients: ls.coefficients,
        vcov,
        sigma_hat: sigma2.sqrt(),
        dropped_columns: ls.dropped.iter().map(|&j| names[j].clone()).collect(),
        n_used: n,
        column_names: ls.retained.iter().map(|&j| names[j].clone()).collect(),
        retained_indices: ls.retained,
        xtx_inv: ls.xtx_inv,
        rss: ls.rss,
    })
}

/// Convenience: fit a spec's design over a row range in one call. Drops
/// recorded during design construction are surfaced through the fit.
pub fn fit_design(data: &TimeSeriesData, spec: &ModelSpec, range: RowRange) -> Result<(Design, OlsFit)> {
    let design = build_design(data, spec, range)?;
    let mut fit = ols(&design.x, &design.names, &design.outcome, spec.pivot_tol())?;
    let mut dropped = design.dropped.clone();
    dropped.append(&mut fit.dropped_columns);
    fit.dropped_columns = dropped;
    Ok((design, fit))
}

/// Classic ITS estimates: per-month departures from the extrapolated
/// pre-policy line, with closed-form standard errors.
#[derive(Debug, Clone)]
pub struct ClassicItsResult {
    /// Post-policy times, in order.
    pub times: Vec<i64>,
    /// Departure of the observed outcome from the extrapolated trend.
    pub delta_hat: Vec<f64>,
    /// Standard error of each departure.
    pub se_delta: Vec<f64>,
    /// (intercept, slope) of the pre-policy line.
    pub trend: (f64, f64),
    /// Residual SD of the pre-policy fit.
    pub sigma_hat: f64,
}

/// Fits the simple pre-policy line and reports each post-policy departure
/// with its standard error
/// `sigma_hat * sqrt(1 + S00 + 2 T S10 + T^2 S11)`,
/// where S is the unscaled `(X'X)^-1` of the pre-policy intercept-slope
/// regression and T the post-policy time value. These equal the standard
/// errors of the per-month dummy coefficients in the full-design
/// regression, but need only the 2x2 pre-policy solve.
pub fn classic_its(data: &TimeSeriesData) -> Result<ClassicItsResult> {
    let pre: Vec<usize> = data
        .times()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= data.t0())
        .map(|(i, _)| i)
        .collect();
    if pre.len() < 4 {
        return Err(Error::TooFewRows {
            needed: 4,
            got: pre.len(),
        });
    }
    let ones = vec![1.0; pre.len()];
    let tcol: Vec<f64> = pre.iter().map(|&i| data.times()[i] as f64).collect();
    let y: Vec<f64> = pre.iter().map(|&i| data.outcome()[i]).collect();
    let names = vec!["intercept".to_string(), "t".to_string()];
    let fit = ols(&[ones, tcol], &names, &y, DEFAULT_PIVOT_TOL)?;

    let (b0, b1) = (fit.coefficients[0], fit.coefficients[1]);
    let s = &fit.xtx_inv;
    let (s00, s10, s11) = (s.get(0, 0), s.get(1, 0), s.get(1, 1));

    let mut times = Vec::new();
    let mut delta_hat = Vec::new();
    let mut se_delta = Vec::new();
    for (i, &t) in data.times().iter().enumerate() {
        if t <= data.t0() {
            continue;
        }
        let tv = t as f64;
        times.push(t);
        delta_hat.push(data.outcome()[i] - (b0 + b1 * tv));
        se_delta.push(fit.sigma_hat * (1.0 + s00 + 2.0 * tv * s10 + tv * tv * s11).sqrt());
    }
    Ok(ClassicItsResult {
        times,
        delta_hat,
        se_delta,
        trend: (b0, b1),
        sigma_hat: fit.sigma_hat,
    })
}
