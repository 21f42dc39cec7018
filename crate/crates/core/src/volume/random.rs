//! Random smooth volumes for gradient checks and property tests.

use rand::Rng;

use super::{check_resolution, VoxelVolume};
use crate::error::Result;

/// A few soft Gaussian blobs with their own colors. Occupancy is
/// `1 − Π(1 − a_k g_k)`, tapered to zero by radius 0.95 so rotations never
/// push content against the zero padding, and color is the blob-weighted
/// mean. Every channel varies smoothly across cells.
pub fn random_blob_volume(resolution: usize, blobs: usize, rng: &mut impl Rng) -> Result<VoxelVolume> {
    check_resolution(resolution)?;
    let params: Vec<([f64; 3], f64, f64, [f64; 3])> = (0..blobs.max(1))
        .map(|_| {
            let center = [(); 3].map(|_| rng.gen_range(-0.3..0.3));
            let sigma = rng.gen_range(0.3..0.5);
            let amp = rng.gen_range(0.3..0.9);
            let color = [(); 3].map(|_| rng.gen_range(0.05..0.95));
            (center, sigma, amp, color)
        })
        .collect();
    let n = resolution;
    let coord = |i: usize| (2 * i + 1) as f64 / n as f64 - 1.0;
    let mut volume = VoxelVolume::empty(n)?;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = [coord(x), coord(y), coord(z)];
                let mut empty = 1.0;
                let mut weight = 1e-3;
                let mut color = [0.0; 3];
                for (c, sigma, amp, col) in &params {
                    let d2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
                    let g = amp * (-d2 / (2.0 * sigma * sigma)).exp();
                    empty *= 1.0 - g;
                    weight += g;
                    for k in 0..3 {
                        color[k] += g * col[k];
                    }
                }
                let q = (1.0 - empty) * taper(p.iter().map(|v| v * v).sum::<f64>().sqrt());
                let voxel = [color[0] / weight, color[1] / weight, color[2] / weight, q];
                volume.set(x, y, z, voxel.map(|v| v.clamp(0.0, 1.0)))?;
            }
        }
    }
    Ok(volume)
}

/// 1 inside radius 0.35, 0 beyond 0.95, cosine ramp in between.
fn taper(r: f64) -> f64 {
    const INNER: f64 = 0.35;
    const OUTER: f64 = 0.95;
    if r <= INNER {
        1.0
    } else if r >= OUTER {
        0.0
    } else {
        let t = (r - INNER) / (OUTER - INNER);
        0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}
