//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! T = 1.0
//! a = 0.25
//! theta = 0.375
//! lambda = "constant(1)"
//! lambda_star = "constant(2)"
//! b = "affine(0, 1)"
//! sigma = "constant(1)"
//!
//! [run]
//! n_periods = 150
//! steps_per_period = 8192
//! replicates = 2000
//! seed = 3
//!
//! [study]
//! checks = ["finite-n", "contiguous"]
//!
//! [output]
//! directory = "out"
//! formats = ["json", "csv"]
//! ```

use std::path::{Path, PathBuf};

use perphase_core::model::parse_periodic;
use perphase_core::{CoefFn, DiffusionModel, SignalSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(toml::de::Error),
    #[error("invalid model: {0}")]
    Model(perphase_core::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

// the wrapped errors are rendered inline, so they are not exposed as sources
impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError::Parse(e)
    }
}

impl From<perphase_core::Error> for ConfigError {
    fn from(e: perphase_core::Error) -> Self {
        ConfigError::Model(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub run: RunBlock,
    pub study: StudyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(rename = "T")]
    pub period: f64,
    pub a: f64,
    pub theta: f64,
    pub lambda: String,
    pub lambda_star: String,
    pub b: String,
    pub sigma: String,
}

impl ModelBlock {
    pub fn build(&self) -> Result<DiffusionModel, ConfigError> {
        let lambda = parse_periodic(&self.lambda, self.period)?;
        let lambda_star = parse_periodic(&self.lambda_star, self.period)?;
        let signal = SignalSpec::new(lambda, lambda_star, self.period, self.a, self.theta)?;
        let drift: CoefFn = self.b.parse()?;
        let sigma: CoefFn = self.sigma.parse()?;
        Ok(DiffusionModel::new(signal, drift, sigma)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub n_periods: usize,
    pub steps_per_period: usize,
    pub replicates: usize,
    /// Required: there is no clock-based default.
    pub seed: u64,
    #[serde(default)]
    pub burn_in_periods: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    LimitVariance,
    Hellinger,
    Holder,
    Equivariance,
    OuErgodic,
    Bracket,
    Clt,
    FiniteN,
    Contiguous,
    Lam,
    TailDecay,
}

impl CheckName {
    pub const ALL: [CheckName; 11] = [
        CheckName::LimitVariance,
        CheckName::Hellinger,
        CheckName::Holder,
        CheckName::Equivariance,
        CheckName::OuErgodic,
        CheckName::Bracket,
        CheckName::Clt,
        CheckName::FiniteN,
        CheckName::Contiguous,
        CheckName::Lam,
        CheckName::TailDecay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::LimitVariance => "limit-variance",
            CheckName::Hellinger => "hellinger",
            CheckName::Holder => "holder",
            CheckName::Equivariance => "equivariance",
            CheckName::OuErgodic => "ou-ergodic",
            CheckName::Bracket => "bracket",
            CheckName::Clt => "clt",
            CheckName::FiniteN => "finite-n",
            CheckName::Contiguous => "contiguous",
            CheckName::Lam => "lam",
            CheckName::TailDecay => "tail-decay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub limit: LimitBlock,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute band on `Var(û)·J²`.
    pub limit_mle: f64,
    /// Absolute band on `Var(u*)·J²`.
    pub limit_bayes: f64,
    pub hellinger_se: f64,
    /// Relative band on the closed-form Hölder ratio.
    pub holder_rel: f64,
    pub holder_se: f64,
    pub ks_alpha: f64,
    pub ergodic_se: f64,
    pub ergodic_routes: f64,
    /// `|lhs − rhs| / |rhs|`
    pub bracket_rel: f64,
    /// Band of both sides around the limit.
    pub bracket_limit_rel: f64,
    pub clt_se: f64,
    pub finite_n_rel: f64,
    /// Multiple of the combined SE.
    pub contiguous_se: f64,
    pub lam_rel: f64,
    pub tail_r_squared: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            limit_mle: 0.8,
            limit_bayes: 0.6,
            hellinger_se: 3.0,
            holder_rel: 0.01,
            holder_se: 3.0,
            ks_alpha: 0.01,
            ergodic_se: 3.0,
            ergodic_routes: 1e-10,
            bracket_rel: 0.05,
            bracket_limit_rel: 0.10,
            clt_se: 4.0,
            finite_n_rel: 0.15,
            contiguous_se: 2.0,
            lam_rel: 0.20,
            tail_r_squared: 0.9,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), ConfigError> {
        let all = [
            ("limit_mle", self.limit_mle),
            ("limit_bayes", self.limit_bayes),
            ("hellinger_se", self.hellinger_se),
            ("holder_rel", self.holder_rel),
            ("holder_se", self.holder_se),
            ("ks_alpha", self.ks_alpha),
            ("ergodic_se", self.ergodic_se),
            ("ergodic_routes", self.ergodic_routes),
            ("bracket_rel", self.bracket_rel),
            ("bracket_limit_rel", self.bracket_limit_rel),
            ("clt_se", self.clt_se),
            ("finite_n_rel", self.finite_n_rel),
            ("contiguous_se", self.contiguous_se),
            ("lam_rel", self.lam_rel),
            ("tail_r_squared", self.tail_r_squared),
        ];
        for (k, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "tolerance `{k}` must be positive, got {v}"
                )));
            }
        }
        if self.ks_alpha >= 1.0 || self.tail_r_squared >= 1.0 {
            return Err(ConfigError::Invalid(
                "`ks_alpha` and `tail_r_squared` must be below 1".into(),
            ));
        }
        Ok(())
    }
}

/// Limit-experiment engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitBlock {
    pub j: f64,
    pub k: f64,
    pub du: f64,
    pub fields: usize,
    pub hellinger_fields: usize,
    pub equivariance_fields: usize,
    pub tail_fields: usize,
}

impl Default for LimitBlock {
    fn default() -> Self {
        Self {
            j: 1.0,
            k: 150.0,
            du: 0.02,
            fields: 200_000,
            hellinger_fields: 10_000,
            equivariance_fields: 50_000,
            tail_fields: 20_000,
        }
    }
}

/// Evaluation points of the individual checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub hellinger_deltas: Vec<f64>,
    pub holder_delta: f64,
    pub equivariance_u0: Vec<f64>,
    /// Defaults to `{0, θ + a/2}`.
    pub ergodic_phases: Option<Vec<f64>>,
    pub ergodic_batches: usize,
    pub bracket_r: f64,
    pub bracket_h: f64,
    pub clt_r: Vec<f64>,
    pub clt_h: Vec<f64>,
    pub contiguous_u: f64,
    pub lam_u: Vec<f64>,
    pub tail_k: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            hellinger_deltas: vec![0.5, 2.0, 8.0],
            holder_delta: 0.01,
            equivariance_u0: vec![0.0, 3.0, -5.0],
            ergodic_phases: None,
            ergodic_batches: 50,
            bracket_r: 0.5,
            bracket_h: 1.0,
            clt_r: vec![0.375, 0.625],
            clt_h: vec![-1.0, 0.5, 1.0],
            contiguous_u: 3.0,
            lam_u: vec![-5.0, 0.0, 5.0],
            tail_k: vec![5.0, 10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative output directory is taken relative to
    /// the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.directory.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output.directory = dir.join(&cfg.output.directory);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.build()?;
        let r = &self.run;
        if r.n_periods == 0 || r.steps_per_period == 0 {
            return Err(ConfigError::Invalid(
                "n_periods and steps_per_period must be positive".into(),
            ));
        }
        if r.replicates < 2 {
            return Err(ConfigError::Invalid("replicates must be at least 2".into()));
        }
        if self.study.checks.is_empty() {
            return Err(ConfigError::Invalid("study.checks is empty".into()));
        }
        self.study.tolerances.validate()?;
        let l = &self.study.limit;
        if !(l.j > 0.0 && l.k >= 50.0 && l.du > 0.0 && l.du <= 0.05) {
            return Err(ConfigError::Invalid(
                "limit block needs J > 0, K ≥ 50, 0 < du ≤ 0.05".into(),
            ));
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::Invalid("output.formats is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
T = 1.0
a = 0.25
theta = 0.375
lambda = "constant(1)"
lambda_star = "constant(2)"
b = "affine(0, 1)"
sigma = "constant(1)"

[run]
n_periods = 10
steps_per_period = 64
replicates = 20
seed = 1

[study]
checks = ["limit-variance"]
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.study.tolerances, Tolerances::default());
        assert_eq!(c.study.limit.fields, 200_000);
        assert_eq!(c.output.formats, vec![Format::Json, Format::Csv]);
        assert_eq!(c.model.build().unwrap().signal.duration, 0.25);
    }

    #[test]
    fn duration_past_period_names_invariant() {
        let text = BASE.replace("a = 0.25", "a = 1.5");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Model(_)));
        assert!(err.to_string().contains("0 < a < T"), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let text = BASE.replace("seed = 1\n", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_check_is_rejected_with_location() {
        let text = BASE.replace("limit-variance", "limit-varience");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(
            err.contains("limit-varience") && err.contains("line"),
            "{err}"
        );
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let text = format!("{BASE}\n[study.tolerances]\nclt_se = 0.0\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("clt_se"), "{err}");
    }
}
