//! Viewpoint sampling over an elevation band.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{euler_to_vector, Viewpoint};
use crate::error::{Error, Result};

/// Elevation range in degrees, `min ≤ max`, both inside `(−90, 90)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationBand {
    pub min_deg: f64,
    pub max_deg: f64,
}

impl ElevationBand {
    /// The rendering band used for datasets: `[−20°, 40°]`.
    pub const DEFAULT: ElevationBand = ElevationBand {
        min_deg: -20.0,
        max_deg: 40.0,
    };

    pub fn new(min_deg: f64, max_deg: f64) -> Result<Self> {
        let band = Self { min_deg, max_deg };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |d: f64| d.is_finite() && d > -90.0 && d < 90.0;
        if !ok(self.min_deg) || !ok(self.max_deg) || self.min_deg > self.max_deg {
            return Err(Error::invalid(format!(
                "elevation band [{}, {}] must satisfy -90 < min <= max < 90",
                self.min_deg, self.max_deg
            )));
        }
        Ok(())
    }

    fn sin_range(&self) -> (f64, f64) {
        (self.min_deg.to_radians().sin(), self.max_deg.to_radians().sin())
    }

    /// Area-uniform sample: uniform azimuth, uniform `sin(elevation)`.
    pub fn sample(&self, rng: &mut impl Rng) -> Viewpoint {
        let (lo, hi) = self.sin_range();
        let azimuth = rng.gen_range(0.0..TAU);
        let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        euler_to_vector(azimuth, s.asin())
    }

    /// Deterministic, evenly spread points: a Fibonacci lattice restricted to
    /// the band (golden-angle azimuths, `sin(elevation)` at cell midpoints).
    pub fn fibonacci(&self, count: usize) -> Vec<Viewpoint> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let (lo, hi) = self.sin_range();
        (0..count)
            .map(|i| {
                let s = lo + (hi - lo) * (i as f64 + 0.5) / count as f64;
                euler_to_vector(golden * i as f64, s.asin())
            })
            .collect()
    }

    pub fn contains(&self, v: &Viewpoint) -> bool {
        let e = v.as_vector().z.clamp(-1.0, 1.0).asin().to_degrees();
        e >= self.min_deg - 1e-9 && e <= self.max_deg + 1e-9
    }
}

impl Default for ElevationBand {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_band_and_cover_azimuth() {
        let band = ElevationBand::DEFAULT;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bins = [0usize; 12];
        for _ in 0..12000 {
            let v = band.sample(&mut rng);
            assert!(band.contains(&v));
            let (a, _) = super::super::vector_to_euler(&v);
            bins[(a.to_degrees() / 30.0) as usize % 12] += 1;
        }
        for b in bins {
            assert!((b as f64 / 12000.0 - 1.0 / 12.0).abs() < 0.01);
        }
    }

    #[test]
    fn fibonacci_points_are_in_band_and_distinct() {
        let band = ElevationBand::new(-20.0, 40.0).unwrap();
        let pts = band.fibonacci(8);
        assert_eq!(pts.len(), 8);
        for (i, p) in pts.iter().enumerate() {
            assert!(band.contains(p));
            for q in &pts[i + 1..] {
                assert!(p.angle_to(q) > 0.2);
            }
        }
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(ElevationBand::new(40.0, -20.0).is_err());
        assert!(ElevationBand::new(-90.0, 0.0).is_err());
        assert!(ElevationBand::new(f64::NAN, 0.0).is_err());
        assert!(ElevationBand::new(10.0, 10.0).is_ok());
    }
}
