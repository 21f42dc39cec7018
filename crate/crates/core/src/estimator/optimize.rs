//! Multi-start projected gradient descent on the viewing sphere.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ElevationBand, Viewpoint, PARALLEL_TOLERANCE};
use crate::renderer::{CameraModel, RenderedImage, Scene};
use crate::volume::VoxelVolume;

/// Distance an iterate is pushed off the pole when it lands there.
pub const POLE_NUDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Accepted-or-rejected gradient evaluations per start.
    pub max_iters: usize,
    /// Length in radians of the first trial step of each start.
    pub initial_step: f64,
    /// Upper bound in radians on any single step.
    pub max_step: f64,
    /// Step growth factor after an accepted step.
    pub growth: f64,
    /// Backtracking halvings before a start is declared converged.
    pub max_halvings: u32,
    /// Stop once the loss falls below this.
    pub loss_tolerance: f64,
    pub up: Viewpoint,
    /// Seeds are spread over this band; `None` spreads them over the sphere.
    pub seed_band: Option<ElevationBand>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            initial_step: 0.2,
            max_step: 0.35,
            growth: 2.0,
            max_halvings: 20,
            loss_tolerance: 1e-12,
            up: Viewpoint::up(),
            seed_band: Some(ElevationBand::DEFAULT),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.initial_step) || !positive(self.max_step) || !(self.growth >= 1.0) {
            return Err(Error::invalid("step sizes must be positive and growth >= 1"));
        }
        if let Some(band) = &self.seed_band {
            band.validate()?;
        }
        Ok(())
    }

    /// Deterministic starting viewpoints.
    pub fn seeds(&self, starts: usize) -> Vec<Viewpoint> {
        match &self.seed_band {
            Some(band) => band.fibonacci(starts),
            None => fibonacci_sphere(starts),
        }
    }
}

/// The classic Fibonacci lattice over the whole sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<Viewpoint> {
    let band = ElevationBand {
        min_deg: -90.0,
        max_deg: 90.0,
    };
    band.fibonacci(count)
}

/// What happened to one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub seed: Viewpoint,
    pub result: Viewpoint,
    /// Loss at the seed followed by the loss after every accepted step.
    pub losses: Vec<f64>,
    pub nudges: usize,
}

impl StartTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds the seed loss")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimization {
    pub viewpoint: Viewpoint,
    pub loss: f64,
    /// Index of the winning start; ties go to the lowest index.
    pub best_start: usize,
    pub traces: Vec<StartTrace>,
}

/// Recovers the viewpoint from which `target` was rendered, returning the
/// best viewpoint over `starts` descents and its loss.
pub fn estimate_by_optimization(
    target: &RenderedImage,
    volume: &VoxelVolume,
    camera: &CameraModel,
    starts: usize,
    cfg: &OptimizerConfig,
) -> Result<(Viewpoint, f64)> {
    let scene = Scene::new(volume, *camera).with_up(cfg.up);
    let run = optimize_from(&scene, target, &cfg.seeds(starts), cfg)?;
    Ok((run.viewpoint, run.loss))
}

/// Runs one descent per seed (in parallel) and keeps the lowest loss.
pub fn optimize_from(scene: &Scene, target: &RenderedImage, seeds: &[Viewpoint], cfg: &OptimizerConfig) -> Result<Optimization> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one start is required"));
    }
    cfg.validate()?;
    let traces: Vec<StartTrace> = seeds
        .par_iter()
        .map(|seed| descend(scene, target, *seed, cfg))
        .collect::<Result<_>>()?;
    let (best_start, best) = traces
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.final_loss().total_cmp(&b.1.final_loss()).then(a.0.cmp(&b.0)))
        .expect("nonempty");
    Ok(Optimization {
        viewpoint: best.result,
        loss: best.final_loss(),
        best_start,
        traces,
    })
}

/// Moves `v` off the up axis when it is (nearly) parallel to it.
pub fn steer_off_pole(v: Viewpoint, up: &Viewpoint) -> Result<(Viewpoint, bool)> {
    if v.dot(up).abs() <= 1.0 - PARALLEL_TOLERANCE {
        return Ok((v, false));
    }
    let u = up.as_vector();
    // Any direction orthogonal to the up vector.
    let axis = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let side = (axis - u * u.dot(&axis)).normalize();
    let nudged = Viewpoint::new(v.as_vector() + side * POLE_NUDGE)?;
    if nudged.dot(up).abs() > 1.0 - PARALLEL_TOLERANCE {
        return Err(Error::DegenerateUp);
    }
    Ok((nudged, true))
}

fn descend(scene: &Scene, target: &RenderedImage, seed: Viewpoint, cfg: &OptimizerConfig) -> Result<StartTrace> {
    let (mut v, nudged) = steer_off_pole(seed, scene.up())?;
    let mut nudges = nudged as usize;
    let (mut loss, mut grad) = scene.loss_grad(&v, target)?;
    let mut losses = vec![loss];
    let mut eta = match grad.norm() {
        g if g > 0.0 => cfg.initial_step / g,
        _ => 0.0,
    };
    for _ in 0..cfg.max_iters {
        let g_norm = grad.norm();
        if loss <= cfg.loss_tolerance || g_norm == 0.0 || !g_norm.is_finite() {
            break;
        }
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let step = (eta * g_norm).min(cfg.max_step);
            eta = step / g_norm;
            let (cand, nudged) = steer_off_pole(Viewpoint::new(v.as_vector() - grad * eta)?, scene.up())?;
            let cand_loss = scene.loss(&cand, target)?;
            if cand_loss < loss {
                accepted = Some((cand, cand_loss, nudged));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, cand_loss, nudged)) = accepted else { break };
        nudges += nudged as usize;
        v = cand;
        // Keep the line-search value so the recorded sequence is exactly
        // the one the acceptance test compared.
        loss = cand_loss;
        grad = scene.loss_grad(&v, target)?.1;
        losses.push(loss);
        eta *= cfg.growth;
    }
    Ok(StartTrace {
        seed,
        result: v,
        losses,
        nudges,
    })
}
