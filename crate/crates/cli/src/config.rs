use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rwpnn::data::{CsvSchema, DriftSpec};
use rwpnn::detector::PipelineConfig;
use rwpnn::mrwpn::ReceptiveFieldSet;
use rwpnn::synthetic::SineBurstSpec;
use rwpnn::wavelet::SplineOrder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

pub const CONFIG_VERSION: u32 = 1;

/// One run: dataset, split, optional drift, pipeline hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// CSV file; relative paths resolve against the config file's directory.
    pub dataset: PathBuf,
    pub csv: CsvSchema,
    /// Fraction `P` of each class that is held out of training.
    #[serde(default = "default_split")]
    pub split_p: f64,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_split() -> f64 {
    0.2
}

fn default_repeats() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("rwpnn-out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        if cfg.version != CONFIG_VERSION {
            bail!(ConfigError::Config(format!(
                "{}: config version {} is not supported (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        require_file(&self.dataset)?;
        let invalid = |msg: String| ConfigError::Config(msg);
        if !(self.split_p > 0.0 && self.split_p < 1.0) {
            bail!(invalid(format!("split_p {} outside (0, 1)", self.split_p)));
        }
        if self.repeats == 0 {
            bail!(invalid("repeats must be >= 1".into()));
        }
        if let Some(d) = &self.drift {
            d.validate().map_err(|e| invalid(e.to_string()))?;
        }
        self.pipeline
            .validate(self.csv.dim)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }
}

/// Axes of a hyperparameter sweep; an omitted axis keeps the run config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub j0: Vec<u32>,
    pub order: Vec<SplineOrder>,
    pub gammas: Vec<ReceptiveFieldSet>,
    /// Paired encoder/decoder layer sizes, e.g. `[[32, 4], [4, 32]]`.
    pub layers: Vec<(Vec<usize>, Vec<usize>)>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Synthetic corpus settings for `synth`.
pub fn load_synth(path: Option<&Path>) -> Result<SineBurstSpec> {
    match path {
        Some(p) => read_json(p),
        None => Ok(SineBurstSpec::default()),
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file or directory", path.display())
        ));
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Config(format!("{}: {e}", path.display())).into())
}
