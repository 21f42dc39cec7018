//! Viewpoints on the unit sphere and the rotations built from them.
//!
//! Conventions: z is up, azimuth is measured about z starting from +x, and
//! elevation tilts toward +z. A viewpoint is the direction from the object
//! to the camera. Rotation matrices act on column vectors.

mod posefile;
mod sampling;

pub use posefile::{parse_pose_csv, parse_pose_json, read_pose_file};
pub use sampling::ElevationBand;

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|v·u|` above this threshold makes the orthogonalization ill-defined.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

/// Poles are where azimuth is undefined; it is reported as zero there.
const POLE_TOLERANCE: f64 = 1e-9;

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct Viewpoint(Vector3<f64>);

impl Viewpoint {
    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::invalid(format!(
                "cannot normalize vector {:?}",
                v.as_slice()
            )));
        }
        Ok(Self(v / norm))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vector3::new(x, y, z))
    }

    /// The global up direction, +z.
    pub fn up() -> Self {
        Self(Vector3::z())
    }

    pub fn from_euler(azimuth: f64, elevation: f64) -> Self {
        euler_to_vector(azimuth, elevation)
    }

    pub fn to_euler(&self) -> (f64, f64) {
        vector_to_euler(self)
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn dot(&self, other: &Viewpoint) -> f64 {
        self.0.dot(&other.0)
    }

    /// Great-circle angle between two viewpoints, in radians.
    pub fn angle_to(&self, other: &Viewpoint) -> f64 {
        let cross = self.0.cross(&other.0).norm();
        cross.atan2(self.0.dot(&other.0))
    }
}

impl From<Viewpoint> for [f64; 3] {
    fn from(v: Viewpoint) -> Self {
        v.to_array()
    }
}

impl TryFrom<[f64; 3]> for Viewpoint {
    type Error = Error;

    fn try_from(a: [f64; 3]) -> Result<Self> {
        Viewpoint::new(Vector3::new(a[0], a[1], a[2]))
    }
}

/// A proper 3×3 rotation acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; 3]; 3]", try_from = "[[f64; 3]; 3]")]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` after checking `mᵀm = I` and `det m = +1` within `1e-6`.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if !(ortho <= 1e-6) || !((det - 1.0).abs() <= 1e-6) {
            return Err(Error::invalid(format!(
                "not a proper rotation (orthogonality residual {ortho:e}, det {det})"
            )));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl From<RotationMatrix> for [[f64; 3]; 3] {
    fn from(r: RotationMatrix) -> Self {
        r.to_rows()
    }
}

impl TryFrom<[[f64; 3]; 3]> for RotationMatrix {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        RotationMatrix::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

/// Builds the rotation with columns `(v, u′, w)` where `w = normalize(v × u)`
/// and `u′ = normalize(w × v)`.
pub fn vector_to_rotation(v: &Viewpoint, u: &Viewpoint) -> Result<RotationMatrix> {
    if v.dot(u).abs() > 1.0 - PARALLEL_TOLERANCE {
        return Err(Error::DegenerateUp);
    }
    let v = v.0;
    let w = v.cross(&u.0).normalize();
    let u_perp = w.cross(&v).normalize();
    Ok(RotationMatrix(Matrix3::from_columns(&[v, u_perp, w])))
}

/// Fixed signed permutation taking the `(v, u′, w)` frame, expressed in object
/// coordinates, to renderer axes: right = −w, depth = −v, up = u′.
const FRAME_TO_CAMERA: Matrix3<f64> = Matrix3::new(
    0.0, 0.0, -1.0, //
    -1.0, 0.0, 0.0, //
    0.0, 1.0, 0.0,
);

/// Object-to-camera rotation for a camera placed along `v` with up hint `u`.
///
/// The renderer looks along +y with +z up, so the camera at `v` sees the
/// object rotated by `P · vector_to_rotation(v, u)ᵀ`, where `P` permutes the
/// frame axes onto (right, depth, up). Rotating the object about `u` by θ is
/// then the same as moving the camera azimuth by −θ, which is what makes the
/// `(a, e) ∼ (a + π, e)` symmetry of a car show up as a viewpoint symmetry.
pub fn camera_rotation(v: &Viewpoint, u: &Viewpoint) -> Result<RotationMatrix> {
    let frame = vector_to_rotation(v, u)?;
    Ok(RotationMatrix(FRAME_TO_CAMERA * frame.0.transpose()))
}

/// Pulls a gradient with respect to the camera rotation back to the raw
/// (not necessarily unit) viewpoint vector that produced it.
///
/// `v_raw` is normalized internally, so the result is orthogonal to `v_raw`.
pub(crate) fn camera_rotation_vjp(
    v_raw: &Vector3<f64>,
    u: &Vector3<f64>,
    grad_camera: &Matrix3<f64>,
) -> Vector3<f64> {
    // camera = P · frameᵀ  =>  dL/dframe = grad_cameraᵀ · P
    let grad_frame = grad_camera.transpose() * FRAME_TO_CAMERA;
    let g_v_hat: Vector3<f64> = grad_frame.column(0).into();
    let g_u_perp: Vector3<f64> = grad_frame.column(1).into();
    let g_w: Vector3<f64> = grad_frame.column(2).into();

    let v_norm = v_raw.norm();
    let v = v_raw / v_norm;
    let b = v.cross(u);
    let b_norm = b.norm();
    let w = b / b_norm;
    let a = w.cross(&v);
    let a_norm = a.norm();
    let u_perp = a / a_norm;

    // u′ = normalize(a), a = w × v
    let g_a = (g_u_perp - u_perp * u_perp.dot(&g_u_perp)) / a_norm;
    let g_w = g_w + v.cross(&g_a);
    let mut g_v = g_v_hat + g_a.cross(&w);
    // w = normalize(b), b = v × u
    let g_b = (g_w - w * w.dot(&g_w)) / b_norm;
    g_v += u.cross(&g_b);
    // v = normalize(v_raw)
    (g_v - v * v.dot(&g_v)) / v_norm
}

/// `(cos e · cos a, cos e · sin a, sin e)`.
pub fn euler_to_vector(azimuth: f64, elevation: f64) -> Viewpoint {
    let a = azimuth.rem_euclid(TAU);
    let (sa, ca) = a.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Viewpoint(Vector3::new(ce * ca, ce * sa, se))
}

/// Inverse of [`euler_to_vector`]: azimuth in `[0, 2π)`, elevation in
/// `[−π/2, π/2]`. Azimuth is 0 at the poles.
pub fn vector_to_euler(v: &Viewpoint) -> (f64, f64) {
    let v = v.0;
    let horizontal = v.x.hypot(v.y);
    let elevation = v.z.atan2(horizontal);
    if v.z.abs() > 1.0 - POLE_TOLERANCE {
        return (0.0, elevation);
    }
    (wrap_angle(v.y.atan2(v.x)), elevation)
}

/// Wraps into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Geodesic distance on SO(3), in `[0, π]`.
///
/// Equal to `arccos((tr(r1ᵀ r2) − 1) / 2)`; evaluated through `atan2` of the
/// skew and trace parts so small angles keep full precision.
pub fn geodesic_error(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    let d = r1.0.transpose() * r2.0;
    let cos = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vector3::new(
        d[(2, 1)] - d[(1, 2)],
        d[(0, 2)] - d[(2, 0)],
        d[(1, 0)] - d[(0, 1)],
    );
    let sin = (skew.norm() / 2.0).min(1.0);
    sin.atan2(cos)
}

/// Rodrigues rotation about `axis` (normalized here) by `angle`.
pub fn rotation_about_axis(axis: &Vector3<f64>, angle: f64) -> RotationMatrix {
    let k = axis.normalize();
    let (s, c) = angle.sin_cos();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    RotationMatrix(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
}

/// Wrapped absolute azimuth difference, in `[0, π]`.
pub fn azimuth_error(a1: f64, a2: f64) -> f64 {
    let d = (a1 - a2).rem_euclid(TAU);
    d.min(TAU - d).clamp(0.0, PI)
}

/// Geodesic error between the zero-tilt rotations of two viewpoints.
///
/// Falls back to the great-circle angle when either viewpoint sits on the
/// pole, where the zero-tilt frame is undefined.
pub fn viewpoint_error(pred: &Viewpoint, gt: &Viewpoint) -> f64 {
    let up = Viewpoint::up();
    match (vector_to_rotation(pred, &up), vector_to_rotation(gt, &up)) {
        (Ok(a), Ok(b)) => geodesic_error(&a, &b),
        _ => pred.angle_to(gt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vp(x: f64, y: f64, z: f64) -> Viewpoint {
        Viewpoint::from_xyz(x, y, z).unwrap()
    }

    fn assert_vec(a: Vector3<f64>, b: [f64; 3], tol: f64) {
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    fn random_unit(rng: &mut impl Rng) -> Viewpoint {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return Viewpoint::new(v).unwrap();
            }
        }
    }

    fn random_rotation(rng: &mut impl Rng) -> RotationMatrix {
        let axis = *random_unit(rng).as_vector();
        rotation_about_axis(&axis, rng.gen_range(0.0..PI))
    }

    #[test]
    fn rotation_from_up_vector_examples() {
        let r = vector_to_rotation(&vp(0.0, 1.0, 0.0), &vp(0.0, 0.0, 1.0)).unwrap();
        let m = r.matrix();
        assert_vec(m.column(0).into(), [0.0, 1.0, 0.0], 0.0);
        assert_vec(m.column(1).into(), [0.0, 0.0, 1.0], 0.0);
        assert_vec(m.column(2).into(), [1.0, 0.0, 0.0], 0.0);
        assert!((m.determinant() - 1.0).abs() < 1e-12);

        let r = vector_to_rotation(&vp(1.0, 0.0, 0.0), &vp(0.0, 0.0, 1.0)).unwrap();
        let m = r.matrix();
        assert_vec(m.column(0).into(), [1.0, 0.0, 0.0], 0.0);
        assert_vec(m.column(1).into(), [0.0, 0.0, 1.0], 0.0);
        assert_vec(m.column(2).into(), [0.0, -1.0, 0.0], 0.0);

        assert!(matches!(
            vector_to_rotation(&vp(0.0, 0.0, 1.0), &vp(0.0, 0.0, 1.0)),
            Err(Error::DegenerateUp)
        ));
        assert!(matches!(
            vector_to_rotation(&vp(0.0, 0.0, -1.0), &vp(0.0, 0.0, 1.0)),
            Err(Error::DegenerateUp)
        ));
    }

    #[test]
    fn random_frames_are_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let v = random_unit(&mut rng);
            let u = random_unit(&mut rng);
            if v.dot(&u).abs() >= 0.99 {
                continue;
            }
            let r = vector_to_rotation(&v, &u).unwrap();
            let m = r.matrix();
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-6);
            assert!((m.determinant() - 1.0).abs() < 1e-6);
            let col0: Vector3<f64> = m.column(0).into();
            assert!((col0 - v.as_vector()).amax() <= 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn euler_examples() {
        assert_vec(*euler_to_vector(0.0, 0.0).as_vector(), [1.0, 0.0, 0.0], 1e-15);
        assert_vec(
            *euler_to_vector(PI / 2.0, 0.0).as_vector(),
            [0.0, 1.0, 0.0],
            1e-15,
        );
        assert_vec(
            *euler_to_vector(0.0, PI / 2.0 - 1e-9).as_vector(),
            [0.0, 0.0, 1.0],
            1e-8,
        );

        let (a, e) = vector_to_euler(&vp(1.0, 0.0, 0.0));
        assert_eq!((a, e), (0.0, 0.0));
        let (a, e) = vector_to_euler(&vp(0.0, -1.0, 0.0));
        assert!((a - 3.0 * PI / 2.0).abs() < 1e-15 && e.abs() < 1e-15);
        let (a, e) = vector_to_euler(&vp(0.0, 0.0, 1.0));
        assert_eq!(a, 0.0);
        assert!((e - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn euler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..TAU);
            let e = rng.gen_range(-(PI / 2.0 - 1e-3)..(PI / 2.0 - 1e-3));
            let v = euler_to_vector(a, e);
            let (a2, e2) = vector_to_euler(&v);
            assert!(azimuth_error(a, a2) < 1e-9, "{a} vs {a2}");
            assert!((e - e2).abs() < 1e-9);
            let back = euler_to_vector(a2, e2);
            assert!((back.as_vector() - v.as_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn geodesic_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_rotation(&mut rng);
        assert_eq!(geodesic_error(&r, &r), 0.0);
        let z = Vector3::z();
        let id = RotationMatrix::identity();
        assert!((geodesic_error(&id, &rotation_about_axis(&z, PI)) - PI).abs() < 1e-12);
        assert!((geodesic_error(&id, &rotation_about_axis(&z, PI / 6.0)) - PI / 6.0).abs() < 1e-9);
    }

    #[test]
    fn geodesic_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let c = random_rotation(&mut rng);
            let ab = geodesic_error(&a, &b);
            assert!((ab - geodesic_error(&b, &a)).abs() < 1e-9);
            assert!(ab <= geodesic_error(&a, &c) + geodesic_error(&c, &b) + 1e-9);
        }
    }

    #[test]
    fn axis_rotation_examples() {
        let z = Vector3::z();
        let x = Vector3::x();
        assert_eq!(*rotation_about_axis(&z, 0.0).matrix(), Matrix3::identity());
        assert_vec(
            rotation_about_axis(&z, PI / 2.0).apply(&Vector3::x()),
            [0.0, 1.0, 0.0],
            1e-15,
        );
        assert_vec(
            rotation_about_axis(&x, PI).apply(&Vector3::y()),
            [0.0, -1.0, 0.0],
            1e-15,
        );
    }

    #[test]
    fn azimuth_error_examples() {
        assert!(azimuth_error(0.0, TAU) < 1e-15);
        assert!((azimuth_error(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert!((azimuth_error(0.0, PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn camera_rotation_moves_azimuth_into_object_spin() {
        let up = Viewpoint::up();
        let z = Vector3::z();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = rng.gen_range(0.0..TAU);
            let e = rng.gen_range(-1.0..1.0);
            let theta = rng.gen_range(0.0..TAU);
            let base = camera_rotation(&euler_to_vector(a, e), &up).unwrap();
            let moved = camera_rotation(&euler_to_vector(a + theta, e), &up).unwrap();
            let spun = base.compose(&rotation_about_axis(&z, -theta));
            assert!((moved.matrix() - spun.matrix()).amax() < 1e-12);
        }
        // Camera on −y looks along +y: canonical pose.
        let canonical = camera_rotation(&vp(0.0, -1.0, 0.0), &up).unwrap();
        assert!((canonical.matrix() - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn camera_rotation_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let up = Vector3::z();
        for _ in 0..20 {
            let v = *random_unit(&mut rng).as_vector();
            if v.z.abs() > 0.9 {
                continue;
            }
            let g = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let f = |x: Vector3<f64>| {
                let r = camera_rotation(
                    &Viewpoint::new(x).unwrap(),
                    &Viewpoint::new(up).unwrap(),
                )
                .unwrap();
                r.matrix().component_mul(&g).sum()
            };
            let analytic = camera_rotation_vjp(&v, &up, &g);
            let eps = 1e-6;
            for i in 0..3 {
                let mut p = v;
                let mut m = v;
                p[i] += eps;
                m[i] -= eps;
                let fd = (f(p) - f(m)) / (2.0 * eps);
                assert!((fd - analytic[i]).abs() < 1e-7, "{fd} vs {}", analytic[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn axis_rotation_angle_is_recovered(
            ax in prop::array::uniform3(-1.0f64..1.0),
            theta in 0.0f64..=PI,
        ) {
            let axis = Vector3::from(ax);
            prop_assume!(axis.norm() > 0.1);
            let r = rotation_about_axis(&axis, theta);
            let err = geodesic_error(&RotationMatrix::identity(), &r);
            prop_assert!((err - theta).abs() < 1e-9);
        }

        #[test]
        fn azimuth_error_is_bounded(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let e = azimuth_error(a, b);
            prop_assert!((0.0..=PI).contains(&e));
            prop_assert!((e - azimuth_error(b, a)).abs() < 1e-12);
        }
    }
}
