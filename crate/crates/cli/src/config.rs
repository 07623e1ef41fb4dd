use std::fs;
use std::path::{Path, PathBuf};

use gar_core::date::{Period, YearQuarter};
use gar_core::decomposition::DecompositionConfig;
use gar_core::evaluation::{default_exclusions, default_periods};
use gar_core::model::{SvPriorConfig, TripleGammaConfig, TvpSvModelSpec};
use gar_core::preprocess::SLOW_HP_LAMBDA;
use gar_core::qr::QrConfig;
use gar_core::sampler::{GewekeConfig, SamplerConfig};
use gar_core::synthetic::DgpSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Extended,
}

impl Variant {
    pub fn slug(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Extended => "extended",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Baseline => "",
            Variant::Extended => "+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Quarterly CSV holding GDP, the stress index and optionally the
    /// credit and house-price levels.
    pub quarterly: PathBuf,
    /// Annual CSV for series only available at yearly frequency.
    #[serde(default)]
    pub annual: Option<PathBuf>,
    pub gdp: String,
    /// Whether the GDP column already holds log levels.
    #[serde(default = "yes")]
    pub gdp_is_log: bool,
    pub stress: String,
    #[serde(default)]
    pub credit: Option<String>,
    #[serde(default)]
    pub house: Option<String>,
    #[serde(default = "yes")]
    pub detrend_stress: bool,
    #[serde(default = "slow_lambda")]
    pub stress_lambda: f64,
    #[serde(default)]
    pub standardize_stress: bool,
    #[serde(default = "q4")]
    pub knot_quarter: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variants: Vec<Variant>,
    pub horizons: Vec<usize>,
    pub probs: Vec<f64>,
    pub sv: SvPriorConfig,
    pub shrinkage: TripleGammaConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Baseline],
            horizons: vec![1, 4],
            probs: vec![0.05, 0.95],
            sv: SvPriorConfig::default(),
            shrinkage: TripleGammaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecursiveConfig {
    /// First forecast origin; defaults to the earliest origin with
    /// `min_training` observations.
    pub start: Option<YearQuarter>,
    pub min_training: usize,
}

impl Default for RecursiveConfig {
    fn default() -> Self {
        Self {
            start: None,
            min_training: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub tau: f64,
    pub periods: Vec<Period>,
    pub exclusions: Vec<Period>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            periods: default_periods(),
            exclusions: default_exclusions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    #[serde(flatten)]
    pub summary: DecompositionConfig,
    /// Dates at which coefficients are traced across horizons.
    pub projection_dates: Vec<YearQuarter>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            summary: DecompositionConfig::default(),
            projection_dates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GirtestConfig {
    pub t_len: usize,
    pub k: usize,
    /// Use the model priors from `[model]` instead of the harness priors.
    pub model_priors: bool,
    #[serde(flatten)]
    pub harness: GewekeConfig,
}

impl Default for GirtestConfig {
    fn default() -> Self {
        Self {
            t_len: 24,
            k: 2,
            model_priors: false,
            harness: GewekeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub synthetic: Option<DgpSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub recursive: RecursiveConfig,
    #[serde(default)]
    pub qr: QrConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub decomposition: DecomposeConfig,
    #[serde(default)]
    pub girtest: GirtestConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base: PathBuf,
}

fn yes() -> bool {
    true
}

fn slow_lambda() -> f64 {
    SLOW_HP_LAMBDA
}

fn q4() -> u8 {
    4
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    /// Parses a TOML config. Relative paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        if m.horizons.is_empty() || m.horizons.contains(&0) {
            return Err(CliError::Config("horizons must be a non-empty list of integers >= 1".into()));
        }
        if m.probs.is_empty() || m.probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(CliError::Config("probs must lie strictly between 0 and 1".into()));
        }
        if m.variants.is_empty() {
            return Err(CliError::Config("at least one model variant is required".into()));
        }
        if !(self.evaluation.tau > 0.0 && self.evaluation.tau < 1.0) {
            return Err(CliError::Config("evaluation tau must lie strictly between 0 and 1".into()));
        }
        if !m.probs.iter().any(|p| *p == self.evaluation.tau) {
            return Err(CliError::Config(format!(
                "evaluation tau {} is not among the forecast probs",
                self.evaluation.tau
            )));
        }
        if let Some(d) = &self.data {
            if m.variants.contains(&Variant::Extended) && (d.credit.is_none() || d.house.is_none()) {
                return Err(CliError::Config("the extended variant needs `credit` and `house` columns".into()));
            }
            if !(1..=4).contains(&d.knot_quarter) {
                return Err(CliError::Config("knot_quarter must be 1..=4".into()));
            }
        }
        self.sampler.validate()?;
        for &v in &m.variants {
            self.model_spec(1, 3 + 2 * usize::from(v == Variant::Extended)).validate()?;
        }
        Ok(())
    }

    pub fn model_spec(&self, horizon: usize, k: usize) -> TvpSvModelSpec {
        TvpSvModelSpec {
            horizon,
            k,
            sv: self.model.sv,
            shrinkage: self.model.shrinkage,
        }
    }

    pub fn data(&self) -> CliResult<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [data] section".into()))
    }
}
