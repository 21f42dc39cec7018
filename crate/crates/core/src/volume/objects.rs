//! Procedural test objects built from axis-aligned boxes.
//!
//! Box bounds are given in normalized coordinates and compared against the
//! integer voxel-center coordinate `2i + 1 − n`, so rasterization is exact
//! and mirror-symmetric bounds give mirror-symmetric occupancy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{VoxelVolume, OCCUPANCY};
use crate::error::{Error, Result};

pub const MIN_OBJECT_RESOLUTION: usize = 16;

/// Occupancy of solid object voxels.
const SOLID: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Car,
    Chair,
    Plane,
    Cube,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::Car,
        ObjectKind::Chair,
        ObjectKind::Plane,
        ObjectKind::Cube,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Car => "car",
            ObjectKind::Chair => "chair",
            ObjectKind::Plane => "plane",
            ObjectKind::Cube => "cube",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown object kind '{s}'")))
    }
}

type Rgb = [f64; 3];

// Colors are multiples of 1/16 so they survive the f32 file format exactly.
const CAR_BODY: Rgb = [0.125, 0.25, 0.5];
const CAR_CABIN: Rgb = [0.625, 0.8125, 0.875];
const TIRE: Rgb = [0.125, 0.125, 0.125];
const HEADLIGHT: Rgb = [1.0, 1.0, 1.0];
const TAILLIGHT: Rgb = [1.0, 0.0, 0.0];

const CHAIR_SEAT: Rgb = [0.625, 0.3125, 0.125];
const CHAIR_LEG: Rgb = [0.25, 0.125, 0.0625];
const CHAIR_BACK: Rgb = [0.8125, 0.5, 0.25];

const FUSELAGE: Rgb = [0.75, 0.75, 0.8125];
const WING: Rgb = [0.5, 0.5, 0.5625];
const TAIL_FIN: Rgb = [0.875, 0.125, 0.125];
const COCKPIT: Rgb = [0.1875, 0.25, 0.375];

const CUBE_FACES: [Rgb; 6] = [
    [1.0, 0.0, 0.0], // +x
    [0.0, 1.0, 1.0], // −x
    [0.0, 1.0, 0.0], // +y
    [1.0, 0.0, 1.0], // −y
    [0.0, 0.0, 1.0], // +z
    [1.0, 1.0, 0.0], // −z
];
const CUBE_INTERIOR: Rgb = [0.5, 0.5, 0.5];

/// Axis-aligned box in normalized coordinates, bounds inclusive.
#[derive(Clone, Copy)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

const fn aabb(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Aabb {
    Aabb {
        lo: [x.0, y.0, z.0],
        hi: [x.1, y.1, z.1],
    }
}

struct Painter {
    volume: VoxelVolume,
}

impl Painter {
    fn new(resolution: usize) -> Result<Self> {
        Ok(Self {
            volume: VoxelVolume::empty(resolution)?,
        })
    }

    /// Integer center coordinate of index `i`: `2i + 1 − n`, i.e. the
    /// normalized coordinate scaled by `n`.
    fn center(&self, i: usize) -> f64 {
        (2 * i + 1) as f64 - self.volume.resolution() as f64
    }

    fn contains(&self, b: &Aabb, idx: [usize; 3]) -> bool {
        let n = self.volume.resolution() as f64;
        (0..3).all(|a| {
            let c = self.center(idx[a]);
            b.lo[a] * n <= c && c <= b.hi[a] * n
        })
    }

    fn fill(&mut self, b: Aabb, color: Rgb) {
        let n = self.volume.resolution();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    if self.contains(&b, [x, y, z]) {
                        let i = self.volume.index(x, y, z);
                        self.volume.voxels[i] = [color[0], color[1], color[2], SOLID];
                    }
                }
            }
        }
    }

    /// Recolors already-occupied voxels inside `b`.
    fn paint(&mut self, b: Aabb, color: Rgb) {
        let n = self.volume.resolution();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let i = self.volume.index(x, y, z);
                    if self.volume.voxels[i][OCCUPANCY] > 0.0 && self.contains(&b, [x, y, z]) {
                        self.volume.voxels[i][..3].copy_from_slice(&color);
                    }
                }
            }
        }
    }
}

/// Deterministic procedural object, centered and within `[−0.56, 0.56]`
/// on every axis (at most 60% of each axis).
///
/// * `car`: body, cabin and wheels whose occupancy is symmetric under a half
///   turn about z; white headlights on the +y face, red taillights on −y.
/// * `chair`: seat, four legs and a backrest on the −y side.
/// * `plane`: fuselage along y, wings, stabilizer and a red tail fin.
/// * `cube`: a cube with six distinctly colored faces.
pub fn make_test_object(kind: ObjectKind, resolution: usize) -> Result<VoxelVolume> {
    if resolution < MIN_OBJECT_RESOLUTION {
        return Err(Error::invalid(format!(
            "test objects need resolution >= {MIN_OBJECT_RESOLUTION}, got {resolution}"
        )));
    }
    let mut p = Painter::new(resolution)?;
    match kind {
        ObjectKind::Car => {
            p.fill(aabb((-0.3, 0.3), (-0.56, 0.56), (-0.2, 0.1)), CAR_BODY);
            p.fill(aabb((-0.25, 0.25), (-0.3, 0.3), (0.1, 0.35)), CAR_CABIN);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    let x = if sx > 0.0 { (0.12, 0.3) } else { (-0.3, -0.12) };
                    let y = if sy > 0.0 { (0.22, 0.45) } else { (-0.45, -0.22) };
                    p.fill(aabb(x, y, (-0.35, -0.2)), TIRE);
                }
            }
            for x in [(-0.28, -0.06), (0.06, 0.28)] {
                p.paint(aabb(x, (0.44, 0.56), (-0.15, 0.05)), HEADLIGHT);
                p.paint(aabb(x, (-0.56, -0.44), (-0.15, 0.05)), TAILLIGHT);
            }
        }
        ObjectKind::Chair => {
            p.fill(aabb((-0.35, 0.35), (-0.35, 0.35), (-0.1, 0.02)), CHAIR_SEAT);
            for x in [(-0.35, -0.22), (0.22, 0.35)] {
                for y in [(-0.35, -0.22), (0.22, 0.35)] {
                    p.fill(aabb(x, y, (-0.52, -0.1)), CHAIR_LEG);
                }
            }
            p.fill(aabb((-0.35, 0.35), (-0.35, -0.22), (0.02, 0.52)), CHAIR_BACK);
        }
        ObjectKind::Plane => {
            p.fill(aabb((-0.1, 0.1), (-0.55, 0.55), (-0.1, 0.1)), FUSELAGE);
            p.fill(aabb((-0.55, 0.55), (-0.08, 0.18), (-0.1, 0.1)), WING);
            p.fill(aabb((-0.25, 0.25), (-0.55, -0.42), (-0.1, 0.1)), WING);
            p.fill(aabb((-0.1, 0.1), (-0.55, -0.4), (0.1, 0.45)), TAIL_FIN);
            p.paint(aabb((-0.1, 0.1), (0.3, 0.48), (0.0, 0.1)), COCKPIT);
        }
        ObjectKind::Cube => {
            let half = 0.5;
            p.fill(aabb((-half, half), (-half, half), (-half, half)), CUBE_INTERIOR);
            let n = resolution;
            let (lo, hi) = face_layers(&p, half);
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        let i = p.volume.index(x, y, z);
                        if p.volume.voxels[i][OCCUPANCY] == 0.0 {
                            continue;
                        }
                        // z faces take precedence on edges, then x, then y.
                        let face = if z == hi {
                            Some(4)
                        } else if z == lo {
                            Some(5)
                        } else if x == hi {
                            Some(0)
                        } else if x == lo {
                            Some(1)
                        } else if y == hi {
                            Some(2)
                        } else if y == lo {
                            Some(3)
                        } else {
                            None
                        };
                        if let Some(f) = face {
                            p.volume.voxels[i][..3].copy_from_slice(&CUBE_FACES[f]);
                        }
                    }
                }
            }
        }
    }
    Ok(p.volume)
}

/// Outermost occupied index range of a centered cube of half-size `half`.
fn face_layers(p: &Painter, half: f64) -> (usize, usize) {
    let n = p.volume.resolution();
    let b = aabb((-half, half), (-half, half), (-half, half));
    let inside: Vec<usize> = (0..n).filter(|&i| p.contains(&b, [i, i, i])).collect();
    (inside[0], *inside.last().unwrap())
}
