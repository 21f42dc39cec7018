//! C ABI over the voxelview library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`VvStatus`]; on failure a description is available from
//! [`vv_last_error`] on the same thread. Panics never unwind into C: they
//! are caught and reported as [`VvStatus::Panic`].
//!
//! Viewpoints are passed as `double[3]` direction vectors (z up; nonzero
//! vectors are normalized). A camera distance of `INFINITY` selects an
//! orthographic camera.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use voxelview::estimator::{estimate_by_optimization, OptimizerConfig, TrainedEstimator};
use voxelview::evalkit::{procrustes_align, AlignmentTransform};
use voxelview::geometry::{viewpoint_error, Viewpoint};
use voxelview::renderer::{render_loss_grad, render_view, CameraModel, RenderedImage};
use voxelview::volume::{make_test_object, read_volume, write_volume, ObjectKind, VoxelVolume};
use voxelview::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParam = 2,
    DegenerateUp = 3,
    ResolutionMismatch = 4,
    BadFile = 5,
    ValueOutOfRange = 6,
    EmptyHypotheses = 7,
    ConfigError = 8,
    LengthMismatch = 9,
    DegenerateCloud = 10,
    DegenerateMean = 11,
    Io = 12,
    Panic = 99,
}

/// Procedural test objects.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VvObjectKind {
    Car = 0,
    Chair = 1,
    Plane = 2,
    Cube = 3,
}

/// Opaque voxel volume.
pub struct VvVolume(VoxelVolume);

/// Opaque rendered image (RGB plus alpha, row-major, row 0 at the top).
pub struct VvImage(RenderedImage);

/// Opaque trained viewpoint estimator.
pub struct VvEstimator(TrainedEstimator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> VvStatus {
    match err {
        Error::DegenerateUp => VvStatus::DegenerateUp,
        Error::InvalidParam(_) => VvStatus::InvalidParam,
        Error::ResolutionMismatch(..) => VvStatus::ResolutionMismatch,
        Error::BadMagic | Error::TruncatedFile { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => {
            VvStatus::BadFile
        }
        Error::ValueOutOfRange(_) => VvStatus::ValueOutOfRange,
        Error::EmptyHypotheses => VvStatus::EmptyHypotheses,
        Error::ConfigError(_) => VvStatus::ConfigError,
        Error::LengthMismatch(..) => VvStatus::LengthMismatch,
        Error::DegenerateCloud => VvStatus::DegenerateCloud,
        Error::DegenerateMean => VvStatus::DegenerateMean,
        Error::Io { .. } => VvStatus::Io,
    }
}

/// Internal failure: a status plus its message.
struct Failure(VvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(VvStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            VvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            VvStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes either null or a live pointer of this type.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the API contract, NUL-terminated.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(VvStatus::InvalidParam, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn viewpoint_arg(p: *const f64, what: &str) -> Result<Viewpoint, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller provides three readable doubles.
    let v = unsafe { std::slice::from_raw_parts(p, 3) };
    Ok(Viewpoint::from_xyz(v[0], v[1], v[2])?)
}

unsafe fn write_viewpoint(out: *mut f64, v: &Viewpoint) {
    // SAFETY: checked non-null by the caller; three writable doubles.
    unsafe { ptr::copy_nonoverlapping(v.to_array().as_ptr(), out, 3) };
}

fn camera_arg(distance: f64) -> Result<CameraModel, Failure> {
    if distance == f64::INFINITY {
        Ok(CameraModel::orthographic())
    } else {
        Ok(CameraModel::new(distance)?)
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    // SAFETY: checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message describing the last failed call on this thread; empty after a
/// successful call. Valid until the next call into this library on the same
/// thread. Never null.
#[no_mangle]
pub extern "C" fn vv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a procedural test object at `resolution` (at least 16). `kind`
/// is a [`VvObjectKind`] value; it is taken as an integer so that
/// out-of-range values are reported instead of being undefined behavior.
///
/// # Safety
/// `out` must be null or point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vv_volume_make_object(kind: u32, resolution: usize, out: *mut *mut VvVolume) -> VvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match kind {
            k if k == VvObjectKind::Car as u32 => ObjectKind::Car,
            k if k == VvObjectKind::Chair as u32 => ObjectKind::Chair,
            k if k == VvObjectKind::Plane as u32 => ObjectKind::Plane,
            k if k == VvObjectKind::Cube as u32 => ObjectKind::Cube,
            k => return Err(Failure(VvStatus::InvalidParam, format!("unknown object kind {k}"))),
        };
        let volume = make_test_object(kind, resolution)?;
        unsafe { store(out, VvVolume(volume)) };
        Ok(())
    })
}

/// Reads a VXV1 volume file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn vv_volume_read(path: *const c_char, out: *mut *mut VvVolume) -> VvStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let volume = read_volume(&path)?;
        unsafe { store(out, VvVolume(volume)) };
        Ok(())
    })
}

/// Writes a volume as a VXV1 file.
///
/// # Safety
/// `volume` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vv_volume_write(volume: *const VvVolume, path: *const c_char) -> VvStatus {
    guard(|| {
        let volume = unsafe { borrow(volume, "volume") }?;
        let path = unsafe { path_arg(path, "path") }?;
        write_volume(&volume.0, &path)?;
        Ok(())
    })
}

/// Grid side of the volume, or 0 for a null handle.
///
/// # Safety
/// `volume` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vv_volume_resolution(volume: *const VvVolume) -> usize {
    unsafe { volume.as_ref() }.map_or(0, |v| v.0.resolution())
}

/// Releases a volume. Null is ignored.
///
/// # Safety
/// `volume` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_volume_free(volume: *mut VvVolume) {
    if !volume.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(volume) });
    }
}

/// Renders `volume` from the unit viewpoint `v` with z up.
///
/// # Safety
/// `volume` null or live; `v` null or three readable doubles; `out` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn vv_render_view(
    volume: *const VvVolume,
    v: *const f64,
    camera_distance: f64,
    out: *mut *mut VvImage,
) -> VvStatus {
    guard(|| {
        let volume = unsafe { borrow(volume, "volume") }?;
        let v = unsafe { viewpoint_arg(v, "v") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let image = render_view(&volume.0, &v, &Viewpoint::up(), &camera_arg(camera_distance)?)?;
        unsafe { store(out, VvImage(image)) };
        Ok(())
    })
}

/// Mean squared color error of the render at `v` against `target` and its
/// gradient with respect to `v` (tangent to the sphere).
///
/// # Safety
/// Handles null or live; `v` null or three readable doubles; `loss` and
/// `grad` null or writable (one and three doubles).
#[no_mangle]
pub unsafe extern "C" fn vv_render_loss_grad(
    volume: *const VvVolume,
    v: *const f64,
    camera_distance: f64,
    target: *const VvImage,
    loss: *mut f64,
    grad: *mut f64,
) -> VvStatus {
    guard(|| {
        let volume = unsafe { borrow(volume, "volume") }?;
        let target = unsafe { borrow(target, "target") }?;
        let v = unsafe { viewpoint_arg(v, "v") }?;
        if loss.is_null() || grad.is_null() {
            return Err(null("output"));
        }
        let (l, g) = render_loss_grad(&volume.0, &v, &Viewpoint::up(), &camera_arg(camera_distance)?, &target.0)?;
        // SAFETY: checked non-null above.
        unsafe {
            *loss = l;
            ptr::copy_nonoverlapping([g.x, g.y, g.z].as_ptr(), grad, 3);
        }
        Ok(())
    })
}

/// Image width in pixels, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vv_image_width(image: *const VvImage) -> usize {
    unsafe { image.as_ref() }.map_or(0, |i| i.0.width())
}

/// Image height in pixels, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vv_image_height(image: *const VvImage) -> usize {
    unsafe { image.as_ref() }.map_or(0, |i| i.0.height())
}

/// Copies interleaved RGB (`3·width·height` doubles) into `buf`.
///
/// # Safety
/// `image` null or live; `buf` null or `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vv_image_copy_rgb(image: *const VvImage, buf: *mut f64, len: usize) -> VvStatus {
    guard(|| {
        let image = unsafe { borrow(image, "image") }?;
        let need = 3 * image.0.rgb().len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != need {
            return Err(Error::LengthMismatch(len, need).into());
        }
        // SAFETY: `buf` holds `len == need` doubles.
        unsafe { ptr::copy_nonoverlapping(image.0.rgb().as_ptr().cast::<f64>(), buf, need) };
        Ok(())
    })
}

/// Copies alpha (`width·height` doubles) into `buf`.
///
/// # Safety
/// `image` null or live; `buf` null or `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vv_image_copy_alpha(image: *const VvImage, buf: *mut f64, len: usize) -> VvStatus {
    guard(|| {
        let image = unsafe { borrow(image, "image") }?;
        let need = image.0.alpha().len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != need {
            return Err(Error::LengthMismatch(len, need).into());
        }
        // SAFETY: `buf` holds `len == need` doubles.
        unsafe { ptr::copy_nonoverlapping(image.0.alpha().as_ptr(), buf, need) };
        Ok(())
    })
}

/// Releases an image. Null is ignored.
///
/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_image_free(image: *mut VvImage) {
    if !image.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(image) });
    }
}

/// Recovers the viewpoint of `target` by multi-start gradient descent.
///
/// # Safety
/// Handles null or live; `out_v` null or three writable doubles; `out_loss`
/// null (ignored) or writable.
#[no_mangle]
pub unsafe extern "C" fn vv_estimate_viewpoint(
    volume: *const VvVolume,
    target: *const VvImage,
    camera_distance: f64,
    starts: usize,
    out_v: *mut f64,
    out_loss: *mut f64,
) -> VvStatus {
    guard(|| {
        let volume = unsafe { borrow(volume, "volume") }?;
        let target = unsafe { borrow(target, "target") }?;
        if out_v.is_null() {
            return Err(null("out_v"));
        }
        let (v, loss) = estimate_by_optimization(
            &target.0,
            &volume.0,
            &camera_arg(camera_distance)?,
            starts,
            &OptimizerConfig::default(),
        )?;
        unsafe { write_viewpoint(out_v, &v) };
        if !out_loss.is_null() {
            // SAFETY: non-null and writable per contract.
            unsafe { *out_loss = loss };
        }
        Ok(())
    })
}

/// Loads a trained estimator from its JSON file.
///
/// # Safety
/// `path` null or NUL-terminated; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn vv_estimator_load(path: *const c_char, out: *mut *mut VvEstimator) -> VvStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let est = TrainedEstimator::load(&path)?;
        unsafe { store(out, VvEstimator(est)) };
        Ok(())
    })
}

/// Predicts the viewpoint of `image`; `out_head` (optional) receives the
/// index of the head the selection head chose.
///
/// # Safety
/// Handles null or live; `out_v` null or three writable doubles; `out_head`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn vv_estimator_predict(
    estimator: *const VvEstimator,
    image: *const VvImage,
    out_v: *mut f64,
    out_head: *mut usize,
) -> VvStatus {
    guard(|| {
        let est = unsafe { borrow(estimator, "estimator") }?;
        let image = unsafe { borrow(image, "image") }?;
        if out_v.is_null() {
            return Err(null("out_v"));
        }
        let p = est.0.predict_detailed(&image.0)?;
        unsafe { write_viewpoint(out_v, &p.viewpoint) };
        if !out_head.is_null() {
            // SAFETY: non-null and writable per contract.
            unsafe { *out_head = p.head };
        }
        Ok(())
    })
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `estimator` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vv_estimator_free(estimator: *mut VvEstimator) {
    if !estimator.is_null() {
        // SAFETY: produced by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(estimator) });
    }
}

/// Geodesic error in radians between the zero-tilt poses of two viewpoints.
///
/// # Safety
/// `a`, `b` null or three readable doubles each; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn vv_viewpoint_error(a: *const f64, b: *const f64, out: *mut f64) -> VvStatus {
    guard(|| {
        let a = unsafe { viewpoint_arg(a, "a") }?;
        let b = unsafe { viewpoint_arg(b, "b") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null.
        unsafe { *out = viewpoint_error(&a, &b) };
        Ok(())
    })
}

/// Best proper rotation taking `preds` onto `gts` (`n` unit vectors each,
/// packed as `3n` doubles). Writes the 3×3 matrix row-major to `out_rotation`.
///
/// # Safety
/// `preds`, `gts` null or `3n` readable doubles; `out_rotation` null or nine
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vv_procrustes_align(
    preds: *const f64,
    gts: *const f64,
    n: usize,
    out_rotation: *mut f64,
) -> VvStatus {
    guard(|| {
        if preds.is_null() || gts.is_null() || out_rotation.is_null() {
            return Err(null("argument"));
        }
        let read = |p: *const f64| -> Result<Vec<Viewpoint>, Failure> {
            // SAFETY: `3n` readable doubles per contract.
            let raw = unsafe { std::slice::from_raw_parts(p, 3 * n) };
            raw.chunks_exact(3)
                .map(|c| Viewpoint::from_xyz(c[0], c[1], c[2]).map_err(Failure::from))
                .collect()
        };
        let AlignmentTransform::Rotation { rotation } = procrustes_align(&read(preds)?, &read(gts)?)? else {
            unreachable!("procrustes_align returns a rotation")
        };
        let rows = rotation.to_rows();
        // SAFETY: nine writable doubles per contract.
        unsafe { ptr::copy_nonoverlapping(rows.as_ptr().cast::<f64>(), out_rotation, 9) };
        Ok(())
    })
}
