//! Viewpoint estimation: direct analysis-by-synthesis optimization and a
//! small multi-hypothesis regressor trained through reconstruction.

mod mlp;
mod optimize;
mod train;

pub use mlp::Mlp;
pub use optimize::{
    estimate_by_optimization, fibonacci_sphere, optimize_from, steer_off_pole, Optimization, OptimizerConfig,
    StartTrace, POLE_NUDGE,
};
pub use train::{
    cycle_loss, image_features, train_multihead, EpochStats, Prediction, StepOutcome, TargetMode, TrainConfig,
    TrainSample, TrainedEstimator, FEATURE_SIDE, GRADIENT_CLIP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Viewpoint;
use crate::renderer::{CameraModel, RenderedImage, Scene};
use crate::volume::VoxelVolume;

/// Competing viewpoint hypotheses and their reconstruction errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub hypotheses: Vec<Viewpoint>,
    pub recon_errors: Vec<f64>,
    /// Index of the lowest error; ties go to the lowest index.
    pub selected: usize,
}

impl HypothesisSet {
    pub fn new(hypotheses: Vec<Viewpoint>, recon_errors: Vec<f64>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::EmptyHypotheses);
        }
        if hypotheses.len() != recon_errors.len() {
            return Err(Error::LengthMismatch(hypotheses.len(), recon_errors.len()));
        }
        if recon_errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::ValueOutOfRange("reconstruction errors must be finite and >= 0".into()));
        }
        let mut selected = 0;
        for (i, e) in recon_errors.iter().enumerate() {
            if *e < recon_errors[selected] {
                selected = i;
            }
        }
        Ok(Self {
            hypotheses,
            recon_errors,
            selected,
        })
    }

    pub fn best(&self) -> Viewpoint {
        self.hypotheses[self.selected]
    }

    pub fn best_error(&self) -> f64 {
        self.recon_errors[self.selected]
    }
}

/// Renders every hypothesis, scores it against `target` by mean squared
/// color error and selects the best.
pub fn select_best_head(
    hypotheses: &[Viewpoint],
    volume: &VoxelVolume,
    camera: &CameraModel,
    target: &RenderedImage,
) -> Result<HypothesisSet> {
    if hypotheses.is_empty() {
        return Err(Error::EmptyHypotheses);
    }
    let scene = Scene::new(volume, *camera);
    let errors = hypotheses.iter().map(|v| scene.loss(v, target)).collect::<Result<Vec<_>>>()?;
    HypothesisSet::new(hypotheses.to_vec(), errors)
}
