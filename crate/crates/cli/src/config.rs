//! Run configuration: preset, then config file, then command-line flags.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use otreg::datagen::{CameraConfig, ScenarioConfig};
use otreg::pipeline::IcpConfig;
use otreg::SinkhornConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 1024 points, 768-point crops, no noise.
    PartialUnseen,
    /// As partial-unseen with clipped Gaussian noise (sigma 0.01).
    PartialNoise,
    /// Full 1024-point source against a rendered 512-point view.
    SelfOccluded,
}

impl Preset {
    pub fn scenario(self) -> ScenarioConfig {
        match self {
            Preset::PartialUnseen | Preset::SelfOccluded => ScenarioConfig::default(),
            Preset::PartialNoise => ScenarioConfig {
                noise_sigma: 0.01,
                ..Default::default()
            },
        }
    }
}

/// Everything a command may read from a TOML file. Every section is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<Preset>,
    pub pairs: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub scenario: Option<toml::Table>,
    pub camera: Option<toml::Table>,
    pub sinkhorn: Option<toml::Table>,
    pub icp: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Resolved settings shared by all commands.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub camera: CameraConfig,
    pub sinkhorn: SinkhornConfig,
    pub icp: IcpConfig,
    pub alpha: f64,
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            preset,
            scenario: preset.scenario(),
            camera: CameraConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            icp: IcpConfig::default(),
            alpha: 0.0,
        }
    }

    /// Preset (from the flag, else the file, else partial-unseen) overlaid with file values.
    pub fn resolve(preset_flag: Option<Preset>, file: &FileConfig) -> Result<Self, String> {
        let preset = preset_flag.or(file.preset).unwrap_or(Preset::PartialUnseen);
        let mut cfg = Self::from_preset(preset);
        cfg.scenario = overlay(&cfg.scenario, file.scenario.as_ref(), "scenario")?;
        cfg.camera = overlay(&cfg.camera, file.camera.as_ref(), "camera")?;
        cfg.sinkhorn = overlay(&cfg.sinkhorn, file.sinkhorn.as_ref(), "sinkhorn")?;
        cfg.icp = overlay(&cfg.icp, file.icp.as_ref(), "icp")?;
        if let Some(seed) = file.seed {
            cfg.scenario.seed = seed;
        }
        if let Some(alpha) = file.alpha {
            cfg.alpha = alpha;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scenario.validate().map_err(|e| e.to_string())?;
        self.camera.validate().map_err(|e| e.to_string())?;
        self.sinkhorn.validate().map_err(|e| e.to_string())?;
        self.icp.validate().map_err(|e| e.to_string())?;
        if !self.alpha.is_finite() {
            return Err("alpha must be finite".into());
        }
        Ok(())
    }
}

/// Replaces the fields of `base` named in `table`; unknown keys are errors.
fn overlay<T: Serialize + DeserializeOwned + Clone>(base: &T, table: Option<&toml::Table>, section: &str) -> Result<T, String> {
    let Some(table) = table else {
        return Ok(base.clone());
    };
    let mut merged = toml::Table::try_from(base).map_err(|e| e.to_string())?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    merged.try_into().map_err(|e| format!("[{section}]: {e}"))
}
