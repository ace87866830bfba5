//! Run configurations: JSON files with `--set` overrides, parsed strictly.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use tailforge_core::bounds::{Calibration, Side};
use tailforge_core::generators::{GeneratorSpec, TailGenerator};
use tailforge_core::mgf::MgfSource;
use tailforge_core::simulate::Family;
use tailforge_core::ustat::Kernel;
use tailforge_core::Error;

use crate::CliError;

/// A generator given inline or as a path to a generator JSON file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GeneratorRef {
    Inline(GeneratorSpec),
    File(PathBuf),
}

impl GeneratorRef {
    pub fn load(&self, base: &Path) -> Result<TailGenerator, CliError> {
        let spec = match self {
            GeneratorRef::Inline(spec) => spec.clone(),
            GeneratorRef::File(path) => {
                let text = read(&base.join(path))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
        };
        Ok(TailGenerator::try_from(spec)?)
    }
}

/// Where the constant `C` comes from: an explicit value, an inline
/// calibration, or a calibration JSON written by `calibrate`.
#[derive(Debug, Default)]
pub struct ConstantSource {
    pub constant: Option<f64>,
    pub calibration: Option<Calibration>,
    pub calibration_file: Option<PathBuf>,
}

impl ConstantSource {
    /// The explicit constant wins over a calibration reference.
    pub fn resolve(&self, base: &Path) -> Result<(f64, Option<Calibration>), CliError> {
        let cal = match (&self.calibration, &self.calibration_file) {
            (Some(c), _) => Some(c.clone()),
            (None, Some(path)) => {
                let text = read(&base.join(path))?;
                Some(serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?)
            }
            (None, None) => None,
        };
        match (self.constant, cal) {
            (Some(c), cal) => Ok((c, cal)),
            (None, Some(cal)) => Ok((cal.constant, Some(cal))),
            (None, None) => Err(CliError::config(
                "missing constant: give `constant`, `calibration` or `calibration_file`",
            )),
        }
    }
}

fn default_lambda_nodes() -> usize {
    tailforge_core::conjugate::DEFAULT_NODES
}

fn default_t_nodes() -> usize {
    tailforge_core::conjugate::DEFAULT_NODES
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateConfig {
    pub generator: GeneratorRef,
    /// Explicit `λ` nodes; otherwise a uniform grid on `[0, lambda_max]`.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Defaults to the slope of the last grid cell.
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default = "default_lambda_nodes")]
    pub lambda_nodes: usize,
    #[serde(default = "default_t_nodes")]
    pub t_nodes: usize,
    #[serde(default)]
    pub naive: bool,
    /// Also emit `g**` on these points (JSON output only).
    #[serde(default)]
    pub biconjugate_grid: Option<Vec<f64>>,
}

fn default_degree() -> u32 {
    1
}

fn default_side() -> Side {
    Side::Bilateral
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub generator: GeneratorRef,
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub calibration_file: Option<PathBuf>,
    pub n: u64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_side")]
    pub side: Side,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    pub generator: GeneratorRef,
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub calibration_file: Option<PathBuf>,
    pub n: u64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_side")]
    pub side: Side,
    pub alpha: Vec<f64>,
}

/// Distribution whose log-MGF is calibrated against.
#[derive(Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Gaussian { sigma: f64 },
    Rademacher,
    PointMass,
    UniformCentered { a: f64 },
    Extremal { generator: GeneratorRef },
    Empirical {
        #[serde(default)]
        samples: Option<Vec<f64>>,
        #[serde(default)]
        data_file: Option<PathBuf>,
    },
    Atoms { values: Vec<f64>, probs: Vec<f64> },
}

impl LawConfig {
    pub fn mgf(&self, base: &Path) -> Result<MgfSource, CliError> {
        Ok(match self {
            LawConfig::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(CliError::config("sigma must be positive"));
                }
                MgfSource::Gaussian { sigma: *sigma }
            }
            LawConfig::Rademacher => MgfSource::Rademacher,
            LawConfig::PointMass => MgfSource::PointMass,
            LawConfig::UniformCentered { a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(CliError::config("a must be positive"));
                }
                MgfSource::UniformCentered { a: *a }
            }
            LawConfig::Extremal { generator } => MgfSource::Extremal {
                generator: generator.load(base)?,
            },
            LawConfig::Empirical { samples, data_file } => {
                let xs = match (samples, data_file) {
                    (Some(xs), None) => xs.clone(),
                    (None, Some(path)) => read_numbers(&base.join(path))?,
                    _ => return Err(CliError::config("empirical law needs exactly one of `samples`, `data_file`")),
                };
                MgfSource::empirical(xs)?
            }
            LawConfig::Atoms { values, probs } => MgfSource::atoms(values.clone(), probs.clone())?,
        })
    }
}

fn default_tol() -> f64 {
    1e-3
}

fn one() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub generator: GeneratorRef,
    pub law: LawConfig,
    pub lambda_range: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "one")]
    pub n: u64,
    #[serde(default)]
    pub lower_cap: Option<f64>,
    #[serde(default)]
    pub upper_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StatisticConfig {
    #[default]
    Sum,
    Ustat,
}

fn default_delta() -> f64 {
    tailforge_core::simulate::DEFAULT_DELTA
}

fn default_resolution() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub statistic: StatisticConfig,
    pub sampler: Family,
    #[serde(default)]
    pub seed: u64,
    pub n: u64,
    pub replicates: usize,
    pub generator: GeneratorRef,
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub calibration_file: Option<PathBuf>,
    /// Calibrate the constant against the sampler's law on `[-Λ, Λ]`
    /// (sums only) when no constant is given.
    #[serde(default)]
    pub calibrate_lambda_range: Option<f64>,
    #[serde(default = "default_side")]
    pub side: Side,
    pub t_grid: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub degree: Option<u32>,
}

fn default_cap() -> u64 {
    tailforge_core::ustat::DEFAULT_ENUMERATION_CAP
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UstatConfig {
    pub kernel: Kernel,
    pub degree: u32,
    #[serde(default)]
    pub data: Option<Vec<f64>>,
    /// JSON array, or numbers separated by whitespace or commas.
    #[serde(default)]
    pub data_file: Option<PathBuf>,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

impl UstatConfig {
    pub fn sample(&self, base: &Path) -> Result<Vec<f64>, CliError> {
        match (&self.data, &self.data_file) {
            (Some(xs), None) => Ok(xs.clone()),
            (None, Some(path)) => read_numbers(&base.join(path)),
            _ => Err(CliError::config("give exactly one of `data`, `data_file`")),
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Numbers from a JSON array or a whitespace/comma separated list.
pub fn read_numbers(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read(path)?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())));
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::config(format!("{}: not a number: {s:?}", path.display())))
        })
        .collect()
}

/// Apply `key=value` overrides; dotted keys address nested objects and the
/// value is read as JSON, falling back to a plain string.
pub fn apply_overrides(doc: &mut Value, sets: &[String]) -> Result<(), CliError> {
    for item in sets {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects key=value, got {item:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::config(format!("--set {key}: {part:?} is not inside an object")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Read the config file (or `{}`), apply overrides and deserialize strictly.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, sets: &[String]) -> Result<(T, Value), CliError> {
    let mut doc = match path {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
        None => Value::Object(Default::default()),
    };
    if !doc.is_object() {
        return Err(CliError::config("config must be a JSON object"));
    }
    apply_overrides(&mut doc, sets)?;
    let cfg = serde_json::from_value(doc.clone()).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    Ok((cfg, doc))
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}


macro_rules! constant_source {
    ($($t:ty),*) => {$(
        impl $t {
            pub fn constant_source(&self) -> ConstantSource {
                ConstantSource {
                    constant: self.constant,
                    calibration: self.calibration.clone(),
                    calibration_file: self.calibration_file.clone(),
                }
            }
        }
    )*};
}

constant_source!(BoundConfig, InvertConfig, VerifyConfig);
