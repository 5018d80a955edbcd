//! Run configuration: one TOML document with a section per subcommand.
//!
//! Relative paths inside a config file are taken relative to the file.

use std::path::{Path, PathBuf};

use rcrte_core::evaluation::CvConfig;
use rcrte_core::synthgen::GenConfig;
use rcrte_core::{EmConfig, RepairMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory. `--out` wins over this, and this over the
    /// environment default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub generate: GenConfig,
    pub fit: FitSection,
    pub predict: PredictSection,
    pub evaluate: EvaluateSection,
    pub cv: CvSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Saved model whose parameters and frailties seed the EM.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_model: Option<PathBuf>,
    pub repair_mode: RepairMode,
    pub em: EmConfig,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: None,
            init_model: None,
            repair_mode: RepairMode::Partial,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,
    /// Unit to predict when the history file holds several.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub paths: usize,
    pub seed: u64,
    pub horizons: Vec<f64>,
    /// Overrides the repair mode stored in the model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair_mode: Option<RepairMode>,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            model: None,
            history: None,
            unit: None,
            paths: 10_000,
            seed: 1,
            horizons: (1..=20).map(|i| i as f64 / 10.0).collect(),
            repair_mode: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Sample for the monitoring-time Kaplan–Meier; defaults to `data`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub km_data: Option<PathBuf>,
    pub v: f64,
    pub horizons: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let cv = CvConfig::default();
        EvaluateSection {
            model: None,
            data: None,
            km_data: None,
            v: cv.v,
            horizons: cv.horizons,
            paths: cv.paths,
            seed: cv.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub k: usize,
    pub v: f64,
    pub horizons: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    pub repair_mode: RepairMode,
    pub em: EmConfig,
}

impl Default for CvSection {
    fn default() -> Self {
        let cv = CvConfig::default();
        CvSection {
            data: None,
            k: cv.k,
            v: cv.v,
            horizons: cv.horizons,
            paths: cv.paths,
            seed: cv.seed,
            repair_mode: cv.repair_mode,
            em: cv.em,
        }
    }
}

impl CvSection {
    pub fn to_core(&self) -> CvConfig {
        CvConfig {
            k: self.k,
            v: self.v,
            horizons: self.horizons.clone(),
            paths: self.paths,
            seed: self.seed,
            repair_mode: self.repair_mode,
            em: self.em.clone(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.paths_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 9] {
        [
            &mut self.out,
            &mut self.fit.data,
            &mut self.fit.init_model,
            &mut self.predict.model,
            &mut self.predict.history,
            &mut self.evaluate.model,
            &mut self.evaluate.data,
            &mut self.evaluate.km_data,
            &mut self.cv.data,
        ]
    }

    /// Replaces every section seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.generate.seed = seed;
        self.predict.seed = seed;
        self.evaluate.seed = seed;
        self.cv.seed = seed;
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Input(format!("cannot serialize config: {e}")))
    }

    /// Short SHA-256 of the effective configuration.
    pub fn hash(&self) -> Result<String, CliError> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}
