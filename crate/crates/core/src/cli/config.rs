//! Experiment configuration shared by `train` and the ablation runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{TargetMode, TrainConfig};
use crate::geometry::{ElevationBand, Viewpoint};
use crate::renderer::CameraModel;
use crate::volume::{ObjectKind, MIN_OBJECT_RESOLUTION};

/// Largest accepted grid side; keeps a typo from allocating gigabytes.
pub const MAX_RESOLUTION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub resolution: usize,
    /// `null` selects an orthographic camera.
    pub camera_distance: Option<f64>,
    pub object: ObjectKind,
    pub n_images: usize,
    pub elevation_band_deg: [f64; 2],
    pub heads: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub selector_learning_rate: f64,
    pub cycle_weight: f64,
    pub target_mode: TargetMode,
    /// Where `train` writes its artifacts when `--out` is relative.
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            resolution: 32,
            camera_distance: Some(CameraModel::DEFAULT_DISTANCE),
            object: ObjectKind::Car,
            n_images: 500,
            elevation_band_deg: [ElevationBand::DEFAULT.min_deg, ElevationBand::DEFAULT.max_deg],
            heads: t.heads,
            epochs: 200,
            learning_rate: t.learning_rate,
            selector_learning_rate: t.selector_learning_rate,
            cycle_weight: t.cycle_weight,
            target_mode: t.target_mode,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn band(&self) -> Result<ElevationBand> {
        ElevationBand::new(self.elevation_band_deg[0], self.elevation_band_deg[1])
            .map_err(|e| Error::ConfigError(e.to_string()))
    }

    pub fn camera(&self) -> Result<CameraModel> {
        match self.camera_distance {
            None => Ok(CameraModel::orthographic()),
            Some(d) => CameraModel::new(d).map_err(|e| Error::ConfigError(e.to_string())),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            seed: self.seed,
            heads: self.heads,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            selector_learning_rate: self.selector_learning_rate,
            cycle_weight: self.cycle_weight,
            band: self.band()?,
            camera: self.camera()?,
            up: Viewpoint::up(),
            target_mode: self.target_mode,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_OBJECT_RESOLUTION..=MAX_RESOLUTION).contains(&self.resolution) {
            return Err(Error::ConfigError(format!(
                "resolution must be in [{MIN_OBJECT_RESOLUTION}, {MAX_RESOLUTION}], got {}",
                self.resolution
            )));
        }
        if self.n_images == 0 {
            return Err(Error::ConfigError("n_images must be positive".into()));
        }
        self.train_config().map(|_| ())
    }
}
