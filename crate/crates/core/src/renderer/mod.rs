//! Differentiable rendering: rotate, perspective-warp, composite.
//!
//! Every stage resamples a cubic grid with trilinear interpolation and zero
//! padding, working in voxel-index units centered on `(n − 1)/2`. After the
//! perspective warp all rays run parallel to the depth (y) axis and are
//! composited front (`y = 0`) to back. Output images are `n × n`.

mod composite;
mod image;
mod sample;

pub use composite::stopping_probabilities;
pub use image::RenderedImage;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{camera_rotation, camera_rotation_vjp, RotationMatrix, Viewpoint};
use crate::volume::{Voxel, VoxelVolume};
use sample::Support;

/// Pinhole camera on the −y side of the volume, looking along +y.
///
/// `distance` is measured from the volume center in half-extent units;
/// infinity means orthographic projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Option<f64>", into = "Option<f64>")]
pub struct CameraModel {
    distance: f64,
}

impl CameraModel {
    pub const DEFAULT_DISTANCE: f64 = 2.5;

    /// Perspective camera; `distance` must exceed 1 (outside the volume).
    /// Infinity yields an orthographic camera.
    pub fn new(distance: f64) -> Result<Self> {
        if distance.is_nan() || distance <= 1.0 {
            return Err(Error::invalid(format!(
                "camera distance must be > 1 or infinite, got {distance}"
            )));
        }
        Ok(Self { distance })
    }

    pub fn orthographic() -> Self {
        Self {
            distance: f64::INFINITY,
        }
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn is_orthographic(&self) -> bool {
        self.distance.is_infinite()
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            distance: Self::DEFAULT_DISTANCE,
        }
    }
}

impl TryFrom<Option<f64>> for CameraModel {
    type Error = Error;

    fn try_from(d: Option<f64>) -> Result<Self> {
        match d {
            Some(d) => CameraModel::new(d),
            None => Ok(CameraModel::orthographic()),
        }
    }
}

impl From<CameraModel> for Option<f64> {
    fn from(c: CameraModel) -> Self {
        (!c.is_orthographic()).then_some(c.distance)
    }
}

/// Resamples `volume` so the output voxel at centered position `x` reads the
/// input at `r⁻¹ x`.
pub fn rotate_volume(volume: &VoxelVolume, r: &RotationMatrix) -> VoxelVolume {
    let n = volume.resolution();
    let grid = rotate_grid(volume.voxels(), n, &volume.nonzero_bounds(), r.matrix());
    VoxelVolume::from_resampled(n, grid)
}

/// Output voxel `(x, y, z)` reads the input at `(x·s(y), y, z·s(y))` with
/// `s(y) = (d + y)/d`, coordinates in half-extent units. Near slices are
/// dilated and far slices contracted; orthographic cameras copy the input.
pub fn apply_perspective(volume: &VoxelVolume, camera: &CameraModel) -> VoxelVolume {
    if camera.is_orthographic() {
        return volume.clone();
    }
    let n = volume.resolution();
    VoxelVolume::from_resampled(n, perspective_grid(volume.voxels(), n, camera.distance, true))
}

/// Composites along the depth axis into an `n × n` image.
pub fn composite(volume: &VoxelVolume) -> RenderedImage {
    composite::composite_grid(volume.voxels(), volume.resolution())
}

/// `composite(apply_perspective(rotate_volume(volume, r), camera))`.
pub fn render(volume: &VoxelVolume, r: &RotationMatrix, camera: &CameraModel) -> RenderedImage {
    Scene::new(volume, *camera).render_rotation(r)
}

/// Renders the volume seen from viewpoint `v` with up hint `u`.
pub fn render_view(
    volume: &VoxelVolume,
    v: &Viewpoint,
    u: &Viewpoint,
    camera: &CameraModel,
) -> Result<RenderedImage> {
    Scene::new(volume, *camera).with_up(*u).render_view(v)
}

/// Renders several viewpoints, possibly in parallel; output follows input
/// order.
pub fn render_batch(
    volume: &VoxelVolume,
    views: &[Viewpoint],
    u: &Viewpoint,
    camera: &CameraModel,
) -> Result<Vec<RenderedImage>> {
    let scene = Scene::new(volume, *camera).with_up(*u);
    views.par_iter().map(|v| scene.render_view(v)).collect()
}

/// Mean squared color error between the render at `v` and `target`, and its
/// gradient with respect to `v` projected onto the tangent plane at `v`.
pub fn render_loss_grad(
    volume: &VoxelVolume,
    v: &Viewpoint,
    u: &Viewpoint,
    camera: &CameraModel,
    target: &RenderedImage,
) -> Result<(f64, Vector3<f64>)> {
    Scene::new(volume, *camera).with_up(*u).loss_grad(v, target)
}

/// A volume prepared for repeated rendering under one camera.
#[derive(Debug, Clone)]
pub struct Scene<'a> {
    volume: &'a VoxelVolume,
    camera: CameraModel,
    up: Viewpoint,
    support: Support,
}

impl<'a> Scene<'a> {
    pub fn new(volume: &'a VoxelVolume, camera: CameraModel) -> Self {
        Self {
            volume,
            camera,
            up: Viewpoint::up(),
            support: volume.nonzero_bounds(),
        }
    }

    pub fn with_up(mut self, up: Viewpoint) -> Self {
        self.up = up;
        self
    }

    pub fn volume(&self) -> &VoxelVolume {
        self.volume
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn up(&self) -> &Viewpoint {
        &self.up
    }

    pub fn resolution(&self) -> usize {
        self.volume.resolution()
    }

    fn forward(&self, m: &Matrix3<f64>) -> (Vec<Voxel>, Option<Vec<Voxel>>) {
        let n = self.resolution();
        let rotated = rotate_grid(self.volume.voxels(), n, &self.support, m);
        let warped = (!self.camera.is_orthographic())
            .then(|| perspective_grid(&rotated, n, self.camera.distance, true));
        (rotated, warped)
    }

    pub fn render_rotation(&self, r: &RotationMatrix) -> RenderedImage {
        let n = self.resolution();
        let (rotated, warped) = self.forward(r.matrix());
        composite::composite_grid(warped.as_ref().unwrap_or(&rotated), n)
    }

    pub fn render_view(&self, v: &Viewpoint) -> Result<RenderedImage> {
        Ok(self.render_rotation(&camera_rotation(v, &self.up)?))
    }

    pub fn loss(&self, v: &Viewpoint, target: &RenderedImage) -> Result<f64> {
        self.check_target(target)?;
        self.render_view(v)?.mse(target)
    }

    /// Loss and tangent-plane gradient at `v`.
    pub fn loss_grad(&self, v: &Viewpoint, target: &RenderedImage) -> Result<(f64, Vector3<f64>)> {
        self.check_target(target)?;
        let r = camera_rotation(v, &self.up)?;
        let (loss, grad_m) = self.loss_grad_rotation(r.matrix(), target);
        let vv = v.as_vector();
        let g = camera_rotation_vjp(vv, self.up.as_vector(), &grad_m);
        Ok((loss, g - vv * vv.dot(&g)))
    }

    /// Loss at `v` with each rotation sample evaluated on the cell it
    /// occupies under `reference`.
    fn frozen_loss(&self, v: &Viewpoint, reference: &Matrix3<f64>, target: &RenderedImage) -> Result<f64> {
        self.check_target(target)?;
        let n = self.resolution();
        let m = camera_rotation(v, &self.up)?;
        let m = m.matrix();
        let c = center(n);
        let src = self.volume.voxels();
        let mut rotated = vec![[0.0; 4]; n * n * n];
        for_each_live(n, &self.support, reference, |idx, q, s_ref| {
            let cell = s_ref.map(|x| x.floor() as isize);
            let s = rotated_source(m, c, q);
            rotated[idx] = sample::trilinear_in_cell(src, n, cell, s);
        });
        let last = match self.camera.is_orthographic() {
            true => rotated,
            // No clamp: extrapolated cells may overshoot [0, 1] slightly.
            false => perspective_grid(&rotated, n, self.camera.distance, false),
        };
        composite::composite_grid(&last, n).mse(target)
    }

    fn check_target(&self, target: &RenderedImage) -> Result<()> {
        let n = self.resolution();
        if target.width() != n || target.height() != n {
            return Err(Error::invalid(format!(
                "target is {}×{}, renders are {n}×{n}",
                target.width(),
                target.height()
            )));
        }
        Ok(())
    }

    /// Loss and its gradient with respect to the entries of the
    /// object-to-camera matrix `m`.
    fn loss_grad_rotation(&self, m: &Matrix3<f64>, target: &RenderedImage) -> (f64, Matrix3<f64>) {
        let n = self.resolution();
        let (rotated, warped) = self.forward(m);
        let last = warped.as_ref().unwrap_or(&rotated);
        let image = composite::composite_grid(last, n);

        let scale = 2.0 / (3 * n * n) as f64;
        let mut loss = 0.0;
        let grad_rgb: Vec<[f64; 3]> = image
            .rgb()
            .iter()
            .zip(target.rgb())
            .map(|(p, t)| {
                let d = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
                loss += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                [scale * d[0], scale * d[1], scale * d[2]]
            })
            .collect();
        loss /= (3 * n * n) as f64;

        let grad_last = composite::composite_backward(last, n, &grad_rgb);
        let grad_rotated = match warped {
            Some(_) => perspective_backward(&grad_last, n, self.camera.distance),
            None => grad_last,
        };
        (loss, rotation_backward(self.volume.voxels(), n, &self.support, m, &grad_rotated))
    }
}

/// Analytic gradient compared against central differences.
///
/// Trilinear resampling is only piecewise smooth: a step of `eps` moves
/// thousands of samples, and those that cross a cell face pick up a kink the
/// one-sided analytic derivative does not see. `numeric` therefore
/// differences the loss with every rotation sample held in the cell it
/// occupies at `v`; `plain_numeric` is the ordinary central difference and
/// carries that kink noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vector3<f64>,
    pub numeric: Vector3<f64>,
    /// `‖analytic − numeric‖ / max(‖numeric‖, 1e-12)`.
    pub relative_error: f64,
    pub plain_numeric: Vector3<f64>,
    pub plain_relative_error: f64,
}

/// Central differences of the loss over the three ambient coordinates of `v`
/// (the loss reads `normalize(v)`), projected onto the tangent plane.
pub fn check_gradient(scene: &Scene, v: &Viewpoint, target: &RenderedImage, eps: f64) -> Result<GradientCheck> {
    let (_, analytic) = scene.loss_grad(v, target)?;
    let reference = *camera_rotation(v, &scene.up)?.matrix();
    let base = *v.as_vector();
    let mut numeric = Vector3::zeros();
    let mut plain = Vector3::zeros();
    for axis in 0..3 {
        let mut step = Vector3::zeros();
        step[axis] = eps;
        let plus = Viewpoint::new(base + step)?;
        let minus = Viewpoint::new(base - step)?;
        numeric[axis] = (scene.frozen_loss(&plus, &reference, target)? - scene.frozen_loss(&minus, &reference, target)?)
            / (2.0 * eps);
        plain[axis] = (scene.loss(&plus, target)? - scene.loss(&minus, target)?) / (2.0 * eps);
    }
    numeric -= base * base.dot(&numeric);
    plain -= base * base.dot(&plain);
    let rel = |n: &Vector3<f64>| (analytic - n).norm() / n.norm().max(1e-12);
    Ok(GradientCheck {
        analytic,
        numeric,
        relative_error: rel(&numeric),
        plain_numeric: plain,
        plain_relative_error: rel(&plain),
    })
}

#[inline]
fn center(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Source position of output voxel `(x, y, z)` under `m`: `c + mᵀ(p − c)`.
#[inline]
fn rotated_source(m: &Matrix3<f64>, c: f64, q: [f64; 3]) -> [f64; 3] {
    [
        c + m[(0, 0)] * q[0] + m[(1, 0)] * q[1] + m[(2, 0)] * q[2],
        c + m[(0, 1)] * q[0] + m[(1, 1)] * q[1] + m[(2, 1)] * q[2],
        c + m[(0, 2)] * q[0] + m[(1, 2)] * q[1] + m[(2, 2)] * q[2],
    ]
}

/// Calls `f(index, q, source)` for every output voxel whose trilinear
/// footprint can touch the support.
#[inline]
fn for_each_live(n: usize, support: &Support, m: &Matrix3<f64>, mut f: impl FnMut(usize, [f64; 3], [f64; 3])) {
    let Some((lo, hi)) = *support else { return };
    let c = center(n);
    let step = [m[(0, 0)], m[(0, 1)], m[(0, 2)]];
    for z in 0..n {
        for y in 0..n {
            let q0 = [-c, y as f64 - c, z as f64 - c];
            let start = rotated_source(m, c, q0);
            let Some((x0, x1)) = sample::live_span(start, step, lo, hi, n) else {
                continue;
            };
            let row = n * (y + n * z);
            for x in x0..=x1 {
                let q = [x as f64 - c, q0[1], q0[2]];
                let s = rotated_source(m, c, q);
                if sample::touches(s, lo, hi) {
                    f(row + x, q, s);
                }
            }
        }
    }
}

fn rotate_grid(src: &[Voxel], n: usize, support: &Support, m: &Matrix3<f64>) -> Vec<Voxel> {
    let mut out = vec![[0.0; 4]; n * n * n];
    for_each_live(n, support, m, |idx, _, s| {
        let v = sample::trilinear(src, n, s);
        out[idx] = v.map(|c| c.clamp(0.0, 1.0));
    });
    out
}

fn rotation_backward(src: &[Voxel], n: usize, support: &Support, m: &Matrix3<f64>, grad: &[Voxel]) -> Matrix3<f64> {
    let mut acc = Matrix3::zeros();
    for_each_live(n, support, m, |idx, q, s| {
        let w = &grad[idx];
        if w == &[0.0; 4] {
            return;
        }
        let g = sample::trilinear_grad(src, n, s, w);
        // ∂s_b / ∂m_ab = q_a
        for a in 0..3 {
            for b in 0..3 {
                acc[(a, b)] += q[a] * g[b];
            }
        }
    });
    acc
}

/// Transverse magnification applied at depth slice `y`.
#[inline]
fn slice_scale(n: usize, y: usize, distance: f64) -> f64 {
    let depth = (y as f64 - center(n)) / (n as f64 / 2.0);
    (distance + depth) / distance
}

fn perspective_grid(src: &[Voxel], n: usize, distance: f64, clamp: bool) -> Vec<Voxel> {
    let c = center(n);
    let mut out = vec![[0.0; 4]; n * n * n];
    for y in 0..n {
        let s = slice_scale(n, y, distance);
        for z in 0..n {
            let sz = c + (z as f64 - c) * s;
            for x in 0..n {
                let sx = c + (x as f64 - c) * s;
                let v = sample::bilinear_xz(src, n, y, sx, sz);
                out[x + n * (y + n * z)] = if clamp { v.map(|c| c.clamp(0.0, 1.0)) } else { v };
            }
        }
    }
    out
}

fn perspective_backward(grad: &[Voxel], n: usize, distance: f64) -> Vec<Voxel> {
    let c = center(n);
    let mut out = vec![[0.0; 4]; n * n * n];
    for y in 0..n {
        let s = slice_scale(n, y, distance);
        for z in 0..n {
            let sz = c + (z as f64 - c) * s;
            for x in 0..n {
                let g = &grad[x + n * (y + n * z)];
                if g == &[0.0; 4] {
                    continue;
                }
                let sx = c + (x as f64 - c) * s;
                sample::bilinear_xz_scatter(&mut out, n, y, sx, sz, g);
            }
        }
    }
    out
}
