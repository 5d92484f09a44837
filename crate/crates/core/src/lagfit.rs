//! Fitting the lagged-outcome model to pre-policy data, plus conversion
//! between the lagged-outcome and residual-AR parameterizations.
//!
//! The estimator regresses the outcome on the structural terms, their
//! lag-1 copies (when requested) and the lagged outcome, pre-policy only,
//! with the constraint between trend and anti-trend left free. The
//! constraint can be inspected after the fact with [`check_constraint`].

use crate::error::{Error, Result};
use crate::linmodel::{build_design, ols, ColumnSource, Design, ModelSpec, OlsFit, RowRange};
use crate::series::TimeSeriesData;

/// A fitted lagged-outcome model.
#[derive(Debug, Clone)]
pub struct LaggedFit {
    /// The underlying least-squares fit over retained columns.
    pub ols: OlsFit,
    /// Coefficient on the lagged outcome. Zero when that column was
    /// removed as collinear, which happens only for exact deterministic
    /// fits where the autoregression is unidentified (and irrelevant).
    pub rho_hat: f64,
    /// Coefficients on retained lagged covariates (the anti-trend).
    pub beta_lag: Vec<(String, f64)>,
    /// Innovation SD estimate; identical to `ols.sigma_hat`.
    pub sigma_tilde: f64,
    /// The model specification that produced the fit.
    pub spec: ModelSpec,
    /// The realized design, kept for prediction and simulation.
    pub design: Design,
    /// Whether the lagged-outcome column survived the collinearity pass.
    pub rho_identified: bool,
}

impl LaggedFit {
    /// Index of the lagged-outcome coefficient among retained columns.
    pub fn rho_index(&self) -> Option<usize> {
        self.design.lag_outcome_index()
    }

    /// In-sample fitted values over the design rows.
    pub fn fitted(&self) -> Vec<f64> {
        self.design.fitted(&self.ols)
    }

    /// Assembles a pure-trend lagged fit directly from known parameters,
    /// with zero coefficient covariance. Useful for simulating with fixed
    /// parameters instead of estimates.
    pub fn from_trend_parts(b0: f64, b1: f64, rho: f64, sigma: f64, dof: usize) -> Self {
        use crate::linalg::Matrix;
        use crate::linmodel::DesignColumn;
        let names = vec![
            "intercept".to_string(),
            "t".to_string(),
            "lag_Y".to_string(),
        ];
        let columns = vec![
            DesignColumn {
                name: names[0].clone(),
                source: ColumnSource::Intercept,
                lagged: false,
            },
            DesignColumn {
                name: names[1].clone(),
                source: ColumnSource::Time,
                lagged: false,
            },
            DesignColumn {
                name: names[2].clone(),
                source: ColumnSource::LagOutcome,
                lagged: true,
            },
        ];
        let ols = OlsFit {
            coefficients: vec![b0, b1, rho],
            vcov: Matrix::zeros(3, 3),
            sigma_hat: sigma,
            dropped_columns: vec![],
            n_used: dof + 3,
            column_names: names.clone(),
            retained_indices: vec![0, 1, 2],
            xtx_inv: Matrix::zeros(3, 3),
            rss: sigma * sigma * dof as f64,
        };
        let design = Design {
            x: vec![Vec::new(), Vec::new(), Vec::new()],
            columns,
            names,
            dropped: vec![],
            times: vec![],
            outcome: vec![],
        };
        LaggedFit {
            ols,
            rho_hat: rho,
            beta_lag: vec![],
            sigma_tilde: sigma,
            spec: ModelSpec::trend().with_lag_outcome(true),
            design,
            rho_identified: true,
        }
    }
}

/// Fits the lagged-outcome model to the pre-policy rows. The earliest
/// time has no lag and is dropped from the fit.
pub fn fit_pre_policy(data: &TimeSeriesData, spec: &ModelSpec) -> Result<LaggedFit> {
    if !spec.lag_outcome() {
        return Err(Error::InvalidSpec(
            "lagged-outcome fitting requires lag_outcome = true".into(),
        ));
    }
    let design = build_design(data, spec, RowRange::PreOnly)?;

    let first = design.outcome.first().copied().unwrap_or(0.0);
    if design.outcome.iter().all(|&y| y == first) {
        return Err(Error::ConstantOutcome);
    }

    let mut fit = ols(&design.x, &design.names, &design.outcome, spec.pivot_tol())?;
    if fit.n_used < fit.coefficients.len() + 2 {
        return Err(Error::TooFewRows {
            needed: fit.coefficients.len() + 2,
            got: fit.n_used,
        });
    }
    // The design already pruned collinear candidates; surface those drops
    // through the fit alongside any the solver added.
    let mut dropped = design.dropped.clone();
    dropped.append(&mut fit.dropped_columns);
    fit.dropped_columns = dropped;

    let rho_index = design.lag_outcome_index();
    let rho_hat = rho_index.map(|i| fit.coefficients[i]).unwrap_or(0.0);
    let beta_lag = design
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.lagged && c.source != ColumnSource::LagOutcome)
        .map(|(i, c)| (c.name.clone(), fit.coefficients[i]))
        .collect();

    Ok(LaggedFit {
        sigma_tilde: fit.sigma_hat,
        rho_hat,
        beta_lag,
        rho_identified: rho_index.is_some(),
        spec: spec.clone(),
        design,
        ols: fit,
    })
}

/// The simple-trend model in its residual-AR parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParams {
    pub beta0: f64,
    pub beta1: f64,
    pub rho: f64,
    /// Innovation SD of the AR(1) noise.
    pub sigma: f64,
    /// sigma / sqrt(1 - rho^2); defined only for |rho| < 1.
    pub stationary_sd: Option<f64>,
}

impl ResidualParams {
    pub fn new(beta0: f64, beta1: f64, rho: f64, sigma: f64) -> Self {
        let stationary_sd = if rho.abs() < 1.0 {
            Some(sigma / (1.0 - rho * rho).sqrt())
        } else {
            None
        };
        ResidualParams {
            beta0,
            beta1,
            rho,
            sigma,
            stationary_sd,
        }
    }

    /// The equivalent lagged-outcome coefficients
    /// (intercept, time slope, lag coefficient).
    pub fn lagged_coefficients(&self) -> (f64, f64, f64) {
        (
            self.beta0 + self.rho * (self.beta1 - self.beta0),
            self.beta1 * (1.0 - self.rho),
            self.rho,
        )
    }
}

/// Converts a fitted pure-trend lagged model into residual-AR form:
/// `rho = b2`, `beta1 = b1 / (1 - b2)`,
/// `beta0 = b0 / (1 - rho) - b1 rho / (1 - rho)^2`.
///
/// Seasonal specifications are refused: the conversion is defined for the
/// simple intercept-plus-time model only.
pub fn to_residual_params(fit: &LaggedFit) -> Result<ResidualParams> {
    if !fit.spec.is_pure_trend() {
        return Err(Error::NotPureTrend);
    }
    let rho = fit.rho_hat;
    if 1.0 - rho == 0.0 {
        return Err(Error::NonstationaryRho(rho));
    }
    let b0 = fit
        .ols
        .coefficient("intercept")
        .ok_or(Error::DegenerateDesign)?;
    let b1 = fit.ols.coefficient("t").ok_or(Error::DegenerateDesign)?;
    let beta1 = b1 / (1.0 - rho);
    let beta0 = b0 / (1.0 - rho) - b1 * rho / ((1.0 - rho) * (1.0 - rho));
    Ok(ResidualParams::new(beta0, beta1, rho, fit.sigma_tilde))
}

/// One row of the anti-trend diagnostic: the freely estimated lagged
/// coefficient compared with the value the constrained model implies.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub name: String,
    /// -beta_hat * rho_hat for the matching contemporaneous column.
    pub implied: f64,
    /// The freely estimated lagged coefficient.
    pub estimated: f64,
    pub discrepancy: f64,
}

/// Model-adequacy diagnostic comparing each retained lagged-covariate
/// coefficient against the constrained value. Reports magnitudes only;
/// there is no pass/fail.
pub fn check_constraint(fit: &LaggedFit) -> Vec<ConstraintRow> {
    let mut rows = Vec::new();
    for (i, col) in fit.design.columns.iter().enumerate() {
        if !col.lagged || col.source == ColumnSource::LagOutcome {
            continue;
        }
        // Find the matching contemporaneous column.
        let contemporaneous = fit
            .design
            .columns
            .iter()
            .position(|c| !c.lagged && c.source == col.source);
        let Some(j) = contemporaneous else { continue };
        let implied = -fit.ols.coefficients[j] * fit.rho_hat;
        let estimated = fit.ols.coefficients[i];
        rows.push(ConstraintRow {
            name: col.name.clone(),
            implied,
            estimated,
            discrepancy: estimated - implied,
        });
    }
    rows
}
