//! Front-to-back occupancy compositing along the depth (y) axis.
//!
//! For a ray with occupancies `Q_0..Q_{n−1}` (front first), the stopping
//! probability at depth `k` is `Q′_k = Q_k · Π_{l<k} (1 − Q_l)` (empty product
//! is 1), the pixel color is `Σ_k C_k Q′_k` and alpha is `Σ_k Q′_k`. All rays
//! of one z-slab are advanced together, one depth step at a time.

use super::RenderedImage;
use crate::volume::{Voxel, OCCUPANCY};

/// Composites an `n³` grid into an `n × n` image. Image row `r` holds
/// voxel layer `z = n − 1 − r` so +z is up.
pub(crate) fn composite_grid(grid: &[Voxel], n: usize) -> RenderedImage {
    let mut rgb = vec![[0.0; 3]; n * n];
    let mut alpha = vec![0.0; n * n];
    let mut transmittance = vec![1.0; n];
    for z in 0..n {
        transmittance.fill(1.0);
        let row = n - 1 - z;
        let out_rgb = &mut rgb[row * n..(row + 1) * n];
        let out_a = &mut alpha[row * n..(row + 1) * n];
        for y in 0..n {
            let layer = &grid[n * (y + n * z)..n * (y + 1 + n * z)];
            for x in 0..n {
                let v = &layer[x];
                let q = v[OCCUPANCY];
                if q == 0.0 {
                    continue;
                }
                let stop = q * transmittance[x];
                out_rgb[x][0] += v[0] * stop;
                out_rgb[x][1] += v[1] * stop;
                out_rgb[x][2] += v[2] * stop;
                out_a[x] += stop;
                transmittance[x] *= 1.0 - q;
            }
        }
    }
    RenderedImage::from_parts(n, n, rgb, alpha)
}

/// Stopping probabilities `Q′` of a single ray.
pub fn stopping_probabilities(occupancy: &[f64]) -> Vec<f64> {
    let mut t = 1.0;
    occupancy
        .iter()
        .map(|&q| {
            let s = q * t;
            t *= 1.0 - q;
            s
        })
        .collect()
}

/// Backpropagates `grad_rgb` (per image pixel) to a gradient over the grid's
/// color and occupancy channels.
pub(crate) fn composite_backward(grid: &[Voxel], n: usize, grad_rgb: &[[f64; 3]]) -> Vec<Voxel> {
    let mut grad = vec![[0.0; 4]; n * n * n];
    // Transmittance in front of each voxel of the slab, indexed [y][x].
    let mut trans = vec![0.0; n * n];
    // Color arriving from behind the current depth, per ray.
    let mut behind = vec![[0.0; 3]; n];
    for z in 0..n {
        let row = n - 1 - z;
        let g_row = &grad_rgb[row * n..(row + 1) * n];
        if g_row.iter().all(|g| g == &[0.0; 3]) {
            continue;
        }
        let mut t = vec![1.0; n];
        for y in 0..n {
            let base = n * (y + n * z);
            trans[y * n..(y + 1) * n].copy_from_slice(&t);
            for x in 0..n {
                t[x] *= 1.0 - grid[base + x][OCCUPANCY];
            }
        }
        behind.fill([0.0; 3]);
        for y in (0..n).rev() {
            let base = n * (y + n * z);
            for x in 0..n {
                let v = &grid[base + x];
                let q = v[OCCUPANCY];
                let tr = trans[y * n + x];
                let g = &g_row[x];
                let b = &mut behind[x];
                let stop = q * tr;
                let out = &mut grad[base + x];
                out[0] = g[0] * stop;
                out[1] = g[1] * stop;
                out[2] = g[2] * stop;
                out[OCCUPANCY] =
                    tr * (g[0] * (v[0] - b[0]) + g[1] * (v[1] - b[1]) + g[2] * (v[2] - b[2]));
                for c in 0..3 {
                    b[c] = q * v[c] + (1.0 - q) * b[c];
                }
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Single-ray oracle straight from the stopping-probability product.
    fn ray_oracle(q: &[f64], c: &[f64]) -> (f64, f64) {
        let mut pixel = 0.0;
        let mut alpha = 0.0;
        for k in 0..q.len() {
            let mut p = q[k];
            for l in 0..k {
                p *= 1.0 - q[l];
            }
            pixel += c[k] * p;
            alpha += p;
        }
        (pixel, alpha)
    }

    /// Places one ray at pixel (x=0, z=0) of an n³ grid with gray colors.
    fn ray_grid(q: &[f64], c: &[f64]) -> Vec<Voxel> {
        let n = q.len();
        let mut g = vec![[0.0; 4]; n * n * n];
        for y in 0..n {
            g[n * y] = [c[y], c[y], c[y], q[y]];
        }
        g
    }

    #[test]
    fn hand_cases() {
        assert_eq!(stopping_probabilities(&[1.0, 0.7]), vec![1.0, 0.0]);
        assert_eq!(stopping_probabilities(&[0.5, 0.5]), vec![0.5, 0.25]);

        let img = composite_grid(&ray_grid(&[1.0, 0.7], &[0.8, 0.3]), 2);
        assert_eq!(img.pixel(1, 0), [0.8; 3]);
        assert_eq!(img.alpha_at(1, 0), 1.0);

        let img = composite_grid(&ray_grid(&[0.5, 0.5], &[0.8, 0.4]), 2);
        assert_eq!(img.pixel(1, 0), [0.5; 3]);
        assert_eq!(img.alpha_at(1, 0), 0.75);

        let img = composite_grid(&ray_grid(&[0.0, 0.0], &[0.8, 0.4]), 2);
        assert_eq!(img.pixel(1, 0), [0.0; 3]);
        assert_eq!(img.alpha_at(1, 0), 0.0);
    }

    #[test]
    fn random_rays_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.gen_range(2..9);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let (p, a) = ray_oracle(&q, &c);
            let img = composite_grid(&ray_grid(&q, &c), n);
            assert!((img.pixel(n - 1, 0)[0] - p).abs() < 1e-12);
            assert!((img.alpha_at(n - 1, 0) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let grid: Vec<Voxel> = (0..n * n * n)
            .map(|_| {
                [
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.05..0.95),
                ]
            })
            .collect();
        let g_rgb: Vec<[f64; 3]> = (0..n * n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let objective = |grid: &[Voxel]| {
            let img = composite_grid(grid, n);
            img.rgb()
                .iter()
                .zip(&g_rgb)
                .map(|(p, g)| p[0] * g[0] + p[1] * g[1] + p[2] * g[2])
                .sum::<f64>()
        };
        let grad = composite_backward(&grid, n, &g_rgb);
        let h = 1e-6;
        for idx in [0, 5, 17, 42, 63] {
            for c in 0..4 {
                let mut gp = grid.clone();
                let mut gm = grid.clone();
                gp[idx][c] += h;
                gm[idx][c] -= h;
                let fd = (objective(&gp) - objective(&gm)) / (2.0 * h);
                assert!((fd - grad[idx][c]).abs() < 1e-8, "{idx}/{c}: {fd} vs {}", grad[idx][c]);
            }
        }
    }
}
