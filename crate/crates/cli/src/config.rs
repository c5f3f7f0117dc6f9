use std::fs;
use std::path::{Path, PathBuf};

use mtsvm::data::SamplingSpec;
use mtsvm::kernel::GaussianKernel;
use mtsvm::solver::{RegularizationParams, SolverOptions};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::commands::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub out: Option<PathBuf>,
    pub spec: SamplingSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    pub out: Option<PathBuf>,
}

fn default_sigma() -> f64 {
    GaussianKernel::default().sigma()
}

impl TrainConfig {
    pub fn reg(&self) -> Result<RegularizationParams, CliError> {
        Ok(RegularizationParams::new(self.lambda1, self.lambda2)?)
    }

    pub fn kernel(&self) -> Result<GaussianKernel, CliError> {
        GaussianKernel::new(self.sigma).map_err(|e| CliError::config(format!("`sigma`: {e}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub spec: SamplingSpec,
}

fn default_n_mc() -> usize {
    mtsvm::risk::DEFAULT_MC
}

/// Reads a TOML file. Relative paths inside it are later resolved against
/// the file's directory.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))
}

pub fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}
