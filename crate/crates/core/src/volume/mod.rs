//! Textured occupancy volumes.
//!
//! A volume is a cubic grid of `n³` voxels holding RGB color `C` and
//! occupancy `Q`, all in `[0, 1]`. Voxel `(x, y, z)` is stored at
//! `x + n·(y + n·z)`. In canonical pose x points right, y away from the
//! camera (depth) and z up. Voxel centers sit at normalized coordinates
//! `(2i + 1)/n − 1`, so the grid spans `[−1, 1]³`.

mod format;
mod objects;
mod prior;
mod random;

pub use format::{read_volume, read_volume_bytes, write_volume, write_volume_bytes, MAGIC};
pub use objects::{make_test_object, ObjectKind, MIN_OBJECT_RESOLUTION};
pub use random::random_blob_volume;
pub use prior::{
    apply_prior, shape_prior, ScalarGrid, DEFAULT_PRIOR_AMPLITUDE, DEFAULT_PRIOR_SIGMA,
};

use crate::error::{Error, Result};

/// Channel index of occupancy within a voxel.
pub const OCCUPANCY: usize = 3;

/// One voxel: `[r, g, b, q]`.
pub type Voxel = [f64; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    resolution: usize,
    voxels: Vec<Voxel>,
}

impl VoxelVolume {
    /// An empty (all-zero) volume.
    pub fn empty(resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        Ok(Self {
            resolution,
            voxels: vec![[0.0; 4]; resolution.pow(3)],
        })
    }

    /// Builds a volume from interleaved voxels, validating every entry.
    pub fn from_voxels(resolution: usize, voxels: Vec<Voxel>) -> Result<Self> {
        check_resolution(resolution)?;
        if voxels.len() != resolution.pow(3) {
            return Err(Error::invalid(format!(
                "expected {} voxels, got {}",
                resolution.pow(3),
                voxels.len()
            )));
        }
        if let Some((i, v)) = voxels
            .iter()
            .enumerate()
            .find(|(_, v)| v.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::ValueOutOfRange(format!(
                "voxel {i} has channel outside [0, 1]: {v:?}"
            )));
        }
        Ok(Self { resolution, voxels })
    }

    /// Resampling output; values are already known to lie in `[0, 1]` up to
    /// rounding, which is clamped away here.
    pub(crate) fn from_resampled(resolution: usize, mut voxels: Vec<Voxel>) -> Self {
        for v in &mut voxels {
            for c in v.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
        Self { resolution, voxels }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Voxel {
        self.voxels[self.index(x, y, z)]
    }

    /// Sets one voxel; values must lie in `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, z: usize, voxel: Voxel) -> Result<()> {
        if voxel.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::ValueOutOfRange(format!("{voxel:?}")));
        }
        let i = self.index(x, y, z);
        self.voxels[i] = voxel;
        Ok(())
    }

    /// Replaces occupancy with `grid`, keeping colors.
    pub fn with_occupancy(&self, grid: &ScalarGrid) -> Result<Self> {
        if grid.resolution() != self.resolution {
            return Err(Error::ResolutionMismatch(self.resolution, grid.resolution()));
        }
        let mut voxels = self.voxels.clone();
        for (v, &q) in voxels.iter_mut().zip(grid.values()) {
            v[OCCUPANCY] = q;
        }
        Self::from_voxels(self.resolution, voxels)
    }

    pub fn occupancy(&self) -> ScalarGrid {
        ScalarGrid::from_values_unchecked(
            self.resolution,
            self.voxels.iter().map(|v| v[OCCUPANCY]).collect(),
        )
    }

    /// Sum of occupancy over all voxels.
    pub fn occupancy_mass(&self) -> f64 {
        self.voxels.iter().map(|v| v[OCCUPANCY]).sum()
    }

    /// Inclusive index bounds of voxels with any nonzero channel.
    pub fn nonzero_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let n = self.resolution;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    if self.voxels[x + n * (y + n * z)].iter().any(|&c| c != 0.0) {
                        any = true;
                        for (axis, &c) in [x, y, z].iter().enumerate() {
                            lo[axis] = lo[axis].min(c);
                            hi[axis] = hi[axis].max(c);
                        }
                    }
                }
            }
        }
        any.then_some((lo, hi))
    }
}

/// White mask with the same occupancy: every voxel with `Q > 0` gets `C = 1`.
pub fn silhouette_of(volume: &VoxelVolume) -> VoxelVolume {
    let voxels = volume
        .voxels
        .iter()
        .map(|v| {
            if v[OCCUPANCY] > 0.0 {
                [1.0, 1.0, 1.0, v[OCCUPANCY]]
            } else {
                *v
            }
        })
        .collect();
    VoxelVolume {
        resolution: volume.resolution,
        voxels,
    }
}

pub(crate) fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < 2 {
        return Err(Error::invalid(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    if resolution > 1024 {
        return Err(Error::invalid(format!(
            "resolution {resolution} exceeds the supported maximum of 1024"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_is_white_and_idempotent() {
        let car = make_test_object(ObjectKind::Car, 32).unwrap();
        let s = silhouette_of(&car);
        assert_eq!(s.occupancy(), car.occupancy());
        for v in s.voxels() {
            if v[OCCUPANCY] > 0.0 {
                assert_eq!(&v[..3], &[1.0, 1.0, 1.0]);
            }
        }
        assert_eq!(silhouette_of(&s), s);

        let empty = VoxelVolume::empty(8).unwrap();
        assert_eq!(silhouette_of(&empty), empty);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut voxels = vec![[0.0; 4]; 8];
        voxels[3][OCCUPANCY] = 1.5;
        assert!(matches!(
            VoxelVolume::from_voxels(2, voxels),
            Err(Error::ValueOutOfRange(_))
        ));
        assert!(VoxelVolume::empty(1).is_err());
        let mut v = VoxelVolume::empty(2).unwrap();
        assert!(v.set(0, 0, 0, [0.0, -0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn bounds_cover_content() {
        let mut v = VoxelVolume::empty(6).unwrap();
        assert!(v.nonzero_bounds().is_none());
        v.set(1, 2, 3, [0.0, 0.0, 0.0, 0.5]).unwrap();
        v.set(4, 0, 3, [0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.nonzero_bounds(), Some(([1, 0, 3], [4, 2, 3])));
    }
}
