//! Trilinear and bilinear resampling kernels with zero padding.
//!
//! Positions are in voxel-index units. Derivatives use the cell that
//! contains the sample (`floor` of each coordinate).

use crate::volume::Voxel;

/// Inclusive index bounds of the nonzero region; `None` for an empty grid.
pub(crate) type Support = Option<([usize; 3], [usize; 3])>;

#[inline]
fn split(x: f64) -> (isize, f64) {
    let f = x.floor();
    (f as isize, x - f)
}

/// Trilinear sample of `grid` at `p`. Voxels outside the grid read as zero.
#[inline]
pub(crate) fn trilinear(grid: &[Voxel], n: usize, p: [f64; 3]) -> Voxel {
    let (ix, tx) = split(p[0]);
    let (iy, ty) = split(p[1]);
    let (iz, tz) = split(p[2]);
    let ni = n as isize;
    let mut out = [0.0; 4];
    if ix >= 0 && iy >= 0 && iz >= 0 && ix + 1 < ni && iy + 1 < ni && iz + 1 < ni {
        let base = ix as usize + n * (iy as usize + n * iz as usize);
        let sy = n;
        let sz = n * n;
        let w = corner_weights(tx, ty, tz);
        let offs = [0, 1, sy, sy + 1, sz, sz + 1, sz + sy, sz + sy + 1];
        for (wk, off) in w.iter().zip(offs) {
            let v = &grid[base + off];
            for c in 0..4 {
                out[c] += wk * v[c];
            }
        }
        return out;
    }
    let w = corner_weights(tx, ty, tz);
    for (k, wk) in w.iter().enumerate() {
        let (x, y, z) = (ix + (k & 1) as isize, iy + ((k >> 1) & 1) as isize, iz + (k >> 2) as isize);
        if x < 0 || y < 0 || z < 0 || x >= ni || y >= ni || z >= ni {
            continue;
        }
        let v = &grid[x as usize + n * (y as usize + n * z as usize)];
        for c in 0..4 {
            out[c] += wk * v[c];
        }
    }
    out
}

/// Trilinear polynomial of the cell with lower corner `base`, evaluated at
/// `p` even when `p` has left that cell. Used to difference the loss without
/// crossing cell boundaries.
#[inline]
pub(crate) fn trilinear_in_cell(grid: &[Voxel], n: usize, base: [isize; 3], p: [f64; 3]) -> Voxel {
    let ni = n as isize;
    let w = corner_weights(p[0] - base[0] as f64, p[1] - base[1] as f64, p[2] - base[2] as f64);
    let mut out = [0.0; 4];
    for (k, wk) in w.iter().enumerate() {
        let (x, y, z) = (base[0] + (k & 1) as isize, base[1] + ((k >> 1) & 1) as isize, base[2] + (k >> 2) as isize);
        if x < 0 || y < 0 || z < 0 || x >= ni || y >= ni || z >= ni {
            continue;
        }
        let v = &grid[x as usize + n * (y as usize + n * z as usize)];
        for c in 0..4 {
            out[c] += wk * v[c];
        }
    }
    out
}

/// Weights of the 8 cell corners, ordered x fastest.
#[inline]
fn corner_weights(tx: f64, ty: f64, tz: f64) -> [f64; 8] {
    let (ux, uy, uz) = (1.0 - tx, 1.0 - ty, 1.0 - tz);
    [
        ux * uy * uz,
        tx * uy * uz,
        ux * ty * uz,
        tx * ty * uz,
        ux * uy * tz,
        tx * uy * tz,
        ux * ty * tz,
        tx * ty * tz,
    ]
}

/// Gradient with respect to `p` of `Σ_c weights[c] · trilinear(grid, p)[c]`.
#[inline]
pub(crate) fn trilinear_grad(grid: &[Voxel], n: usize, p: [f64; 3], weights: &[f64; 4]) -> [f64; 3] {
    let (ix, tx) = split(p[0]);
    let (iy, ty) = split(p[1]);
    let (iz, tz) = split(p[2]);
    let ni = n as isize;
    // Corner values of the weighted channel sum.
    let mut s = [0.0; 8];
    for (k, sk) in s.iter_mut().enumerate() {
        let (x, y, z) = (ix + (k & 1) as isize, iy + ((k >> 1) & 1) as isize, iz + (k >> 2) as isize);
        if x < 0 || y < 0 || z < 0 || x >= ni || y >= ni || z >= ni {
            continue;
        }
        let v = &grid[x as usize + n * (y as usize + n * z as usize)];
        *sk = weights[0] * v[0] + weights[1] * v[1] + weights[2] * v[2] + weights[3] * v[3];
    }
    let (ux, uy, uz) = (1.0 - tx, 1.0 - ty, 1.0 - tz);
    let dx = (s[1] - s[0]) * uy * uz + (s[3] - s[2]) * ty * uz + (s[5] - s[4]) * uy * tz + (s[7] - s[6]) * ty * tz;
    let dy = (s[2] - s[0]) * ux * uz + (s[3] - s[1]) * tx * uz + (s[6] - s[4]) * ux * tz + (s[7] - s[5]) * tx * tz;
    let dz = (s[4] - s[0]) * ux * uy + (s[5] - s[1]) * tx * uy + (s[6] - s[2]) * ux * ty + (s[7] - s[3]) * tx * ty;
    [dx, dy, dz]
}

/// Bilinear sample within the `y = slice` plane at transverse `(x, z)`.
#[inline]
pub(crate) fn bilinear_xz(grid: &[Voxel], n: usize, slice: usize, x: f64, z: f64) -> Voxel {
    let (ix, tx) = split(x);
    let (iz, tz) = split(z);
    let ni = n as isize;
    let mut out = [0.0; 4];
    let w = [(1.0 - tx) * (1.0 - tz), tx * (1.0 - tz), (1.0 - tx) * tz, tx * tz];
    for (k, wk) in w.iter().enumerate() {
        let (cx, cz) = (ix + (k & 1) as isize, iz + (k >> 1) as isize);
        if cx < 0 || cz < 0 || cx >= ni || cz >= ni {
            continue;
        }
        let v = &grid[cx as usize + n * (slice + n * cz as usize)];
        for c in 0..4 {
            out[c] += wk * v[c];
        }
    }
    out
}

/// Adjoint of [`bilinear_xz`]: scatters `g` back onto the four corners.
#[inline]
pub(crate) fn bilinear_xz_scatter(grad: &mut [Voxel], n: usize, slice: usize, x: f64, z: f64, g: &Voxel) {
    let (ix, tx) = split(x);
    let (iz, tz) = split(z);
    let ni = n as isize;
    let w = [(1.0 - tx) * (1.0 - tz), tx * (1.0 - tz), (1.0 - tx) * tz, tx * tz];
    for (k, wk) in w.iter().enumerate() {
        let (cx, cz) = (ix + (k & 1) as isize, iz + (k >> 1) as isize);
        if cx < 0 || cz < 0 || cx >= ni || cz >= ni {
            continue;
        }
        let dst = &mut grad[cx as usize + n * (slice + n * cz as usize)];
        for c in 0..4 {
            dst[c] += wk * g[c];
        }
    }
}

/// Range of `i` in `0..n` for which `a + i·d` may fall strictly inside
/// `(lo − 1, hi + 1)` on every axis. Conservative by one index on each side.
#[inline]
pub(crate) fn live_span(a: [f64; 3], d: [f64; 3], lo: [usize; 3], hi: [usize; 3], n: usize) -> Option<(usize, usize)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let lo_b = lo[axis] as f64 - 1.0;
        let hi_b = hi[axis] as f64 + 1.0;
        if d[axis].abs() < 1e-12 {
            if a[axis] <= lo_b || a[axis] >= hi_b {
                return None;
            }
            continue;
        }
        let (mut e0, mut e1) = ((lo_b - a[axis]) / d[axis], (hi_b - a[axis]) / d[axis]);
        if e0 > e1 {
            std::mem::swap(&mut e0, &mut e1);
        }
        t0 = t0.max(e0);
        t1 = t1.min(e1);
    }
    if t0 > t1 {
        return None;
    }
    let start = (t0.floor() - 1.0).max(0.0);
    let end = (t1.ceil() + 1.0).min(n as f64 - 1.0);
    if start > end {
        return None;
    }
    Some((start as usize, end as usize))
}

/// Whether `p` lies strictly inside `(lo − 1, hi + 1)` on every axis, i.e.
/// whether any trilinear corner can touch the support.
#[inline]
pub(crate) fn touches(p: [f64; 3], lo: [usize; 3], hi: [usize; 3]) -> bool {
    (0..3).all(|a| p[a] > lo[a] as f64 - 1.0 && p[a] < hi[a] as f64 + 1.0)
}
