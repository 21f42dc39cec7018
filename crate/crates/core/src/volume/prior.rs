use super::check_resolution;
use crate::error::{Error, Result};

/// Default standard deviation as a fraction of the volume half-extent.
pub const DEFAULT_PRIOR_SIGMA: f64 = 0.25;
pub const DEFAULT_PRIOR_AMPLITUDE: f64 = 0.5;

/// One scalar per voxel, same layout as [`super::VoxelVolume`].
///
/// Occupancy-like grids hold values in `[0, 1]`; residual grids passed to
/// [`apply_prior`] may be signed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    resolution: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        check_resolution(resolution)?;
        if values.len() != resolution.pow(3) {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                resolution.pow(3),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ValueOutOfRange("non-finite grid value".into()));
        }
        Ok(Self { resolution, values })
    }

    pub fn filled(resolution: usize, value: f64) -> Result<Self> {
        Self::new(resolution, vec![value; resolution.pow(3)])
    }

    pub(crate) fn from_values_unchecked(resolution: usize, values: Vec<f64>) -> Self {
        Self { resolution, values }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        let n = self.resolution;
        self.values[x + n * (y + n * z)]
    }
}

/// Isotropic Gaussian centered on the grid:
/// `amplitude · exp(−‖x‖² / (2σ²))` with `x` in half-extent units.
pub fn shape_prior(resolution: usize, sigma: f64, amplitude: f64) -> Result<ScalarGrid> {
    check_resolution(resolution)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("prior sigma must be positive, got {sigma}")));
    }
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::invalid(format!(
            "prior amplitude must be in (0, 1], got {amplitude}"
        )));
    }
    let n = resolution;
    let coord = |i: usize| (2 * i + 1) as f64 / n as f64 - 1.0;
    let denom = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(n.pow(3));
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let r2 = coord(x).powi(2) + coord(y).powi(2) + coord(z).powi(2);
                values.push(amplitude * (-r2 / denom).exp());
            }
        }
    }
    Ok(ScalarGrid { resolution, values })
}

/// Occupancy from a residual and a prior: `clamp(S + Q′, 0, 1)` per voxel.
pub fn apply_prior(residual: &ScalarGrid, prior: &ScalarGrid) -> Result<ScalarGrid> {
    if residual.resolution != prior.resolution {
        return Err(Error::ResolutionMismatch(
            residual.resolution,
            prior.resolution,
        ));
    }
    let values = residual
        .values
        .iter()
        .zip(&prior.values)
        .map(|(r, s)| (s + r).clamp(0.0, 1.0))
        .collect();
    Ok(ScalarGrid {
        resolution: prior.resolution,
        values,
    })
}
