//! Layered configuration: a flat key-value config file with section
//! headers, overridden key-for-key by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use its_core::linmodel::{ModelSpec, RowRange, Term};

use crate::CliError;

/// Keys the config file may carry. Section headers group them for
/// readability but play no role in lookup, so keys are globally unique.
const KNOWN_KEYS: &[&str] = &[
    "input",
    "outcome",
    "t0",
    "model",
    "lag",
    "lag-outcome",
    "lag-covariates",
    "pivot-tol",
    "R",
    "alpha",
    "seed",
    "horizon",
    "smooth",
    "span",
    "degree",
    "smooth-range",
    "season-model",
    "out-dir",
    "stat",
    "stat-first",
    "stat-last",
    "stat-at",
    "grouped-input",
    "kind",
    "window",
    "effect",
    "target-power",
    "r-inner",
    "n-outer",
    "n-pre",
    "n-post",
    "beta0",
    "beta1",
    "rho",
    "sigma",
    "q2",
    "q3",
    "q4",
    "sin-coef",
    "cos-coef",
];

/// Merged settings; later layers win.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_config_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_config_text(&text)
    }

    pub fn from_config_text(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue; // section header, organizational only
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    no + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "config line {}: unknown key `{key}`",
                    no + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Settings { values })
    }

    /// Overrides one key; used to layer command-line flags on top.
    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Config(format!("setting `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    pub fn get_i64(&self, key: &str) -> Result<Option<i64>, CliError> {
        self.parse(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.parse(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.parse(key)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.parse(key)
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => match raw.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(Some(true)),
                "false" | "no" | "0" | "off" => Ok(Some(false)),
                other => Err(CliError::Config(format!(
                    "setting `{key}`: expected a boolean, got `{other}`"
                ))),
            },
        }
    }

    /// The model spec: parsed terms plus lag flags. `lag` sets both flags
    /// at once; the specific keys win over it. Lagged covariates default
    /// to on exactly when the model has seasonal structure.
    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let text = self.get("model").unwrap_or("intercept,time");
        let mut spec = parse_terms(text)?;
        if let Some(tol) = self.get_f64("pivot-tol")? {
            spec = spec.with_pivot_tol(tol);
        }
        let lag_both = self.get_bool("lag")?;
        let lag_outcome = self.get_bool("lag-outcome")?.or(lag_both).unwrap_or(true);
        let lag_covariates = self
            .get_bool("lag-covariates")?
            .or(lag_both)
            .unwrap_or_else(|| spec.has_seasonality());
        Ok(spec
            .with_lag_outcome(lag_outcome)
            .with_lag_covariates(lag_covariates))
    }

    /// Working seasonality model for smoothing, when configured.
    pub fn season_model(&self) -> Result<Option<ModelSpec>, CliError> {
        match self.get("season-model") {
            None => Ok(None),
            Some(text) => Ok(Some(parse_terms(text)?)),
        }
    }

    pub fn smooth_range(&self) -> Result<RowRange, CliError> {
        match self.get("smooth-range").unwrap_or("post") {
            "post" | "post_only" | "post-only" => Ok(RowRange::PostOnly),
            "all" => Ok(RowRange::All),
            "pre" | "pre_only" | "pre-only" => Ok(RowRange::PreOnly),
            other => Err(CliError::Config(format!(
                "setting `smooth-range`: expected post | all | pre, got `{other}`"
            ))),
        }
    }
}

/// Parses a comma- or plus-separated term list:
/// `intercept,time,quarters,sin,cov:<name>`.
pub fn parse_terms(text: &str) -> Result<ModelSpec, CliError> {
    let mut terms = Vec::new();
    for token in text.split([',', '+']) {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let term = match token {
            "intercept" => Term::Intercept,
            "time" | "t" => Term::LinearTime,
            "quarters" => Term::QuarterDummies,
            "sin" | "sinusoid" => Term::SinusoidPair,
            other => match other.strip_prefix("cov:") {
                Some(name) if !name.is_empty() => Term::Covariate(name.to_string()),
                _ => {
                    return Err(CliError::Config(format!(
                        "unknown model term `{token}` (expected intercept, time, quarters, sin or cov:<name>)"
                    )))
                }
            },
        };
        terms.push(term);
    }
    ModelSpec::new(terms).map_err(|e| CliError::Config(e.to_string()))
}
