//! Sweep configuration: a TOML file with a fixed schema, strictly parsed
//! (unknown keys rejected) and validated as a whole so every violation is
//! reported at once.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use grouprisk::moments::Activation;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("{0}")]
    Validation(ValidationReport),
}

/// All violations found in one pass.
#[derive(Debug)]
pub struct ValidationReport(pub Vec<String>);

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config ({} problem(s)):", self.0.len())?;
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    RfRegression,
    LinearRegression,
    RfClassification,
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::RfRegression => "rf_regression",
            Experiment::LinearRegression => "linear_regression",
            Experiment::RfClassification => "rf_classification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Erm,
    Subsample,
    ReweightedRidge,
}

/// A concrete estimator instance for one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Erm,
    Subsample,
    ReweightedRidge { lambda: f64 },
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Erm => "erm".to_string(),
            Estimator::Subsample => "subsample".to_string(),
            Estimator::ReweightedRidge { lambda } => format!("reweighted_ridge({lambda:e})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn to_activation(self) -> Activation {
        match self {
            ActivationKind::Relu => Activation::ReLU,
            ActivationKind::Sigmoid => Activation::Sigmoid,
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Identity => Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub gamma: Vec<f64>,
    #[serde(default = "default_theta")]
    pub theta_deg: Vec<f64>,
    #[serde(default = "default_pi")]
    pub pi: Vec<f64>,
}

fn default_theta() -> Vec<f64> {
    vec![0.0]
}

fn default_pi() -> Vec<f64> {
    vec![0.8]
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_d() -> usize {
    200
}

fn default_n() -> usize {
    400
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d: default_d(),
            n: default_n(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signal {
    #[serde(default = "one")]
    pub norm_b0: f64,
    #[serde(default = "one")]
    pub norm_b1: f64,
    /// Defines the noise level through `tau^2 = norm_b0^2 / snr`.
    #[serde(default = "default_snr")]
    pub snr: f64,
}

fn one() -> f64 {
    1.0
}

fn default_snr() -> f64 {
    10.0
}

impl Default for Signal {
    fn default() -> Self {
        Self {
            norm_b0: 1.0,
            norm_b1: 1.0,
            snr: default_snr(),
        }
    }
}

impl Signal {
    pub fn tau(&self) -> f64 {
        (self.norm_b0 * self.norm_b0 / self.snr).sqrt()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub csv: Option<String>,
    pub svg: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub reweighted_lambdas: Vec<f64>,
    pub grids: Grids,
    #[serde(default)]
    pub dims: Dims,
    #[serde(default)]
    pub signal: Signal,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: Output,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Erm]
}

fn default_activation() -> ActivationKind {
    ActivationKind::Relu
}

fn default_replicates() -> usize {
    10
}

fn default_m_test() -> usize {
    20_000
}

impl SweepConfig {
    /// Expands the estimator list into concrete instances (one per ridge
    /// lambda for the reweighted estimator), preserving file order.
    pub fn estimator_instances(&self) -> Vec<Estimator> {
        let mut out = Vec::new();
        for kind in &self.estimators {
            match kind {
                EstimatorKind::Erm => out.push(Estimator::Erm),
                EstimatorKind::Subsample => out.push(Estimator::Subsample),
                EstimatorKind::ReweightedRidge => {
                    for &lambda in &self.reweighted_lambdas {
                        out.push(Estimator::ReweightedRidge { lambda });
                    }
                }
            }
        }
        out
    }

    pub fn csv_name(&self) -> String {
        self.output
            .csv
            .clone()
            .unwrap_or_else(|| format!("{}.csv", self.experiment.id()))
    }

    pub fn svg_name(&self) -> String {
        self.output
            .svg
            .clone()
            .unwrap_or_else(|| format!("{}.svg", self.experiment.id()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.grids.gamma.is_empty() {
            problems.push("grids.gamma must be non-empty".to_string());
        }
        for &g in &self.grids.gamma {
            if !(g > 0.0 && g.is_finite()) {
                problems.push(format!("grids.gamma value {g} must be positive finite"));
            }
        }
        for &t in &self.grids.theta_deg {
            if !(0.0..360.0).contains(&t) {
                problems.push(format!("grids.theta_deg value {t} must lie in [0, 360)"));
            }
        }
        for &p in &self.grids.pi {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("grids.pi value {p} must lie in [0, 1]"));
            }
        }
        if self.dims.d < 2 {
            problems.push(format!("dims.d = {} must be at least 2", self.dims.d));
        }
        if self.dims.n < 2 {
            problems.push(format!("dims.n = {} must be at least 2", self.dims.n));
        }
        if !(self.signal.snr > 0.0 && self.signal.snr.is_finite()) {
            problems.push(format!(
                "signal.snr = {} must be positive finite",
                self.signal.snr
            ));
        }
        if self.signal.norm_b0 < 0.0 || self.signal.norm_b1 < 0.0 {
            problems.push("signal norms must be nonnegative".to_string());
        }
        if self.estimators.is_empty() {
            problems.push("estimators must be non-empty".to_string());
        }
        if self.estimators.contains(&EstimatorKind::ReweightedRidge) {
            if self.reweighted_lambdas.is_empty() {
                problems.push(
                    "reweighted_lambdas must be non-empty when reweighted_ridge is requested"
                        .to_string(),
                );
            }
            for &l in &self.reweighted_lambdas {
                if !(l >= 0.0 && l.is_finite()) {
                    problems.push(format!("reweighted_lambdas value {l} must be nonnegative"));
                }
            }
        }
        if self.replicates == 0 {
            problems.push("replicates must be at least 1".to_string());
        }
        match self.experiment {
            Experiment::RfClassification => {
                if self.m_test < 1000 {
                    problems.push(format!(
                        "m_test = {} must be at least 1000 for classification",
                        self.m_test
                    ));
                }
                if self.estimators.contains(&EstimatorKind::ReweightedRidge) {
                    problems.push(
                        "reweighted_ridge is not defined for the hard-margin classifier"
                            .to_string(),
                    );
                }
            }
            _ => {
                if self.m_test < 100 {
                    problems.push(format!("m_test = {} must be at least 100", self.m_test));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(ValidationReport(problems)))
        }
    }
}

/// Reads, parses and validates a sweep configuration.
pub fn parse_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: SweepConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source: Box::new(source),
    })?;
    config.validate()?;
    Ok(config)
}
