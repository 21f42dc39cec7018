//! Multi-head viewpoint regression trained only through reconstruction.
//!
//! Each head maps a 16×16 grayscale thumbnail to a viewpoint. For every
//! sample all heads are rendered against the known instance volume, the head
//! with the lowest reconstruction error wins, and only the winner receives
//! the rendering gradient. A selection head learns to predict the winner so
//! inference needs no rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::optimize::steer_off_pole;
use super::HypothesisSet;
use crate::error::{Error, Result};
use crate::geometry::{euler_to_vector, ElevationBand, Viewpoint};
use crate::renderer::{CameraModel, RenderedImage, Scene};
use crate::volume::{silhouette_of, VoxelVolume};

/// Side of the grayscale thumbnail fed to every head.
pub const FEATURE_SIDE: usize = 16;
/// Gradients are rescaled to at most this norm before each update.
pub const GRADIENT_CLIP: f64 = 1.0;

/// Box-filtered luma thumbnail (`0.299 R + 0.587 G + 0.114 B`), row-major,
/// standardized to zero mean and unit variance.
pub fn image_features(image: &RenderedImage) -> Result<Vec<f64>> {
    let (w, h) = (image.width(), image.height());
    if w < FEATURE_SIDE || h < FEATURE_SIDE {
        return Err(Error::invalid(format!(
            "image {w}×{h} is smaller than the {FEATURE_SIDE}×{FEATURE_SIDE} feature grid"
        )));
    }
    let mut out = Vec::with_capacity(FEATURE_SIDE * FEATURE_SIDE);
    for i in 0..FEATURE_SIDE {
        let (r0, r1) = (i * h / FEATURE_SIDE, (i + 1) * h / FEATURE_SIDE);
        for j in 0..FEATURE_SIDE {
            let (c0, c1) = (j * w / FEATURE_SIDE, (j + 1) * w / FEATURE_SIDE);
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    let p = image.pixel(r, c);
                    sum += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
                }
            }
            out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    // Per-image standardization keeps the tanh units out of the shared
    // background offset; a blank image maps to zeros.
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / out.len() as f64;
    let scale = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|x| *x = (*x - mean) * scale);
    Ok(out)
}

/// What the reconstruction compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// The input image itself.
    #[default]
    Rgb,
    /// A white mask from the image's alpha, rendered from the volume's
    /// silhouette; color no longer disambiguates symmetric views.
    Silhouette,
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Self::Rgb),
            "silhouette" => Ok(Self::Silhouette),
            _ => Err(Error::invalid(format!("unknown target mode '{s}' (rgb|silhouette)"))),
        }
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rgb => "rgb",
            Self::Silhouette => "silhouette",
        })
    }
}

impl TargetMode {
    /// The reconstruction target for `image`.
    pub fn target(&self, image: &RenderedImage) -> RenderedImage {
        match self {
            Self::Rgb => image.clone(),
            Self::Silhouette => {
                let alpha: Vec<f64> = image.alpha().iter().map(|a| a.clamp(0.0, 1.0)).collect();
                let rgb = alpha.iter().map(|&a| [a; 3]).collect();
                RenderedImage::new(image.width(), image.height(), rgb, alpha)
                    .expect("clamped alpha is a valid image")
            }
        }
    }

    /// The volume rendered against the target.
    pub fn volume(&self, volume: &VoxelVolume) -> VoxelVolume {
        match self {
            Self::Rgb => volume.clone(),
            Self::Silhouette => silhouette_of(volume),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub heads: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Step size of the selection head. It chases a moving target (which
    /// head currently wins) and does best well below the head rate.
    pub selector_learning_rate: f64,
    /// Weight of the cycle term; 0 disables it.
    pub cycle_weight: f64,
    /// Band that cycle viewpoints are drawn from.
    pub band: ElevationBand,
    pub camera: CameraModel,
    pub up: Viewpoint,
    pub target_mode: TargetMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            heads: 3,
            hidden: 64,
            epochs: 60,
            learning_rate: 0.5,
            selector_learning_rate: 0.125,
            cycle_weight: 0.0,
            band: ElevationBand::DEFAULT,
            camera: CameraModel::default(),
            up: Viewpoint::up(),
            target_mode: TargetMode::Rgb,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigError(m));
        if self.heads < 1 {
            return bad(format!("need at least one head, got {}", self.heads));
        }
        if self.hidden < 1 {
            return bad("hidden layer must be nonempty".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.selector_learning_rate.is_finite() && self.selector_learning_rate > 0.0) {
            return bad(format!("selector learning rate must be positive, got {}", self.selector_learning_rate));
        }
        if !(self.cycle_weight.is_finite() && self.cycle_weight >= 0.0) {
            return bad(format!("cycle weight must be >= 0, got {}", self.cycle_weight));
        }
        self.band.validate().map_err(|e| Error::ConfigError(e.to_string()))
    }
}

/// One training image and the id of the volume it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: RenderedImage,
    pub volume: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean reconstruction error of the winning head.
    pub recon_loss: f64,
    /// Mean cycle distance (0 when the cycle term is off).
    pub cycle_loss: f64,
    /// How often each head won.
    pub wins: Vec<usize>,
}

/// Result of one reconstruction step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub hypotheses: HypothesisSet,
    /// Selection cross-entropy before the update.
    pub selection_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub viewpoint: Viewpoint,
    /// Head chosen by the selection head.
    pub head: usize,
    pub hypotheses: Vec<Viewpoint>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEstimator {
    pub feature_side: usize,
    pub heads: Vec<Mlp>,
    pub selector: Mlp,
    pub config: TrainConfig,
    pub history: Vec<EpochStats>,
}

/// Head output direction; degenerate outputs fall back to +x.
fn output_viewpoint(out: &[f64], up: &Viewpoint) -> Result<Viewpoint> {
    let v = Viewpoint::from_xyz(out[0], out[1], out[2]).unwrap_or_else(|_| euler_to_vector(0.0, 0.0));
    Ok(steer_off_pole(v, up)?.0)
}

/// Gradient of `f(o / ‖o‖)` with respect to `o`, given the tangent gradient
/// `g` of `f` at the unit vector.
fn through_normalization(out: &[f64], g: [f64; 3]) -> Vec<f64> {
    let norm = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt().max(1e-12);
    let v = [out[0] / norm, out[1] / norm, out[2] / norm];
    let dot = g[0] * v[0] + g[1] * v[1] + g[2] * v[2];
    (0..3).map(|k| (g[k] - dot * v[k]) / norm).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl TrainedEstimator {
    /// Freshly initialized heads. Head `m` starts out pointing at azimuth
    /// `2πm/M` in the middle of the band so the hypotheses begin spread out.
    pub fn untrained(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let inputs = FEATURE_SIDE * FEATURE_SIDE;
        let mid = ((cfg.band.min_deg + cfg.band.max_deg) / 2.0).to_radians();
        let heads = (0..cfg.heads)
            .map(|m| {
                let dir = euler_to_vector(std::f64::consts::TAU * m as f64 / cfg.heads as f64, mid);
                Mlp::init(inputs, cfg.hidden, &dir.to_array(), 0.1, &mut rng)
            })
            .collect();
        let selector = Mlp::init(inputs, cfg.hidden, &vec![0.0; cfg.heads], 0.1, &mut rng);
        Ok(Self {
            feature_side: FEATURE_SIDE,
            heads,
            selector,
            config: cfg.clone(),
            history: Vec::new(),
        })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// All hypotheses and selection logits for precomputed features.
    pub fn predict_features(&self, features: &[f64]) -> Result<Prediction> {
        let hypotheses = self
            .heads
            .iter()
            .map(|h| output_viewpoint(&h.forward(features).0, &self.config.up))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.selector.forward(features).0;
        let head = argmax(&logits);
        Ok(Prediction {
            viewpoint: hypotheses[head],
            head,
            hypotheses,
            logits,
        })
    }

    pub fn predict_detailed(&self, image: &RenderedImage) -> Result<Prediction> {
        self.predict_features(&image_features(image)?)
    }

    /// The viewpoint of the head picked by the selection head. Uses no
    /// rendering and no volume.
    pub fn predict(&self, image: &RenderedImage) -> Result<Viewpoint> {
        Ok(self.predict_detailed(image)?.viewpoint)
    }

    /// One winner-take-all update: render every head, backpropagate the
    /// winner's reconstruction gradient into that head only, and train the
    /// selection head toward the winner.
    pub fn reconstruction_step(&mut self, features: &[f64], scene: &Scene, target: &RenderedImage) -> Result<StepOutcome> {
        let lr = self.config.learning_rate;
        let forwards: Vec<(Vec<f64>, Vec<f64>)> = self.heads.iter().map(|h| h.forward(features)).collect();
        let views = forwards
            .iter()
            .map(|(out, _)| output_viewpoint(out, scene.up()))
            .collect::<Result<Vec<_>>>()?;
        let errors = views.iter().map(|v| scene.loss(v, target)).collect::<Result<Vec<_>>>()?;
        let set = HypothesisSet::new(views, errors)?;
        let m = set.selected;

        let (_, g) = scene.loss_grad(&set.hypotheses[m], target)?;
        let (out, hidden) = &forwards[m];
        let d_out = through_normalization(out, [g.x, g.y, g.z]);
        let grad = self.heads[m].backward(features, hidden, &d_out);
        self.heads[m].step(&grad, lr, GRADIENT_CLIP);

        let (logits, hidden) = self.selector.forward(features);
        let mut d_logits = softmax(&logits);
        let selection_loss = -d_logits[m].max(1e-300).ln();
        d_logits[m] -= 1.0;
        let grad = self.selector.backward(features, &hidden, &d_logits);
        self.selector.step(&grad, self.config.selector_learning_rate, GRADIENT_CLIP);

        Ok(StepOutcome {
            hypotheses: set,
            selection_loss,
        })
    }

    /// Renders `sampled` and pulls the selection-chosen head's prediction
    /// for that render toward `sampled`. Returns the distance before the
    /// update.
    pub fn cycle_step(&mut self, scene: &Scene, sampled: &Viewpoint) -> Result<f64> {
        let features = image_features(&scene.render_view(sampled)?)?;
        let head = argmax(&self.selector.forward(&features).0);
        let (out, hidden) = self.heads[head].forward(&features);
        let v = output_viewpoint(&out, scene.up())?;
        let diff = v.as_vector() - sampled.as_vector();
        let dist = diff.norm();
        if dist > 1e-12 {
            let w = self.config.cycle_weight / dist;
            let d_out = through_normalization(&out, [w * diff.x, w * diff.y, w * diff.z]);
            let grad = self.heads[head].backward(&features, &hidden, &d_out);
            self.heads[head].step(&grad, self.config.learning_rate, GRADIENT_CLIP);
        }
        Ok(dist)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(text)?;
        est.validate()?;
        Ok(est)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let inputs = self.feature_side * self.feature_side;
        if self.feature_side != FEATURE_SIDE || self.heads.is_empty() || self.heads.len() != self.config.heads {
            return Err(Error::ConfigError("estimator dimensions do not match its config".into()));
        }
        for h in &self.heads {
            h.validate()?;
            if h.inputs != inputs || h.outputs != 3 {
                return Err(Error::ConfigError("viewpoint head must map features to 3 outputs".into()));
            }
        }
        self.selector.validate()?;
        if self.selector.inputs != inputs || self.selector.outputs != self.heads.len() {
            return Err(Error::ConfigError("selection head must emit one logit per head".into()));
        }
        Ok(())
    }
}

/// Trains an estimator on `dataset`; `volumes` maps each sample's volume id
/// to the volume it was rendered from. Deterministic for a given config.
pub fn train_multihead(
    dataset: &[TrainSample],
    volumes: &BTreeMap<String, VoxelVolume>,
    cfg: &TrainConfig,
) -> Result<TrainedEstimator> {
    if dataset.is_empty() {
        return Err(Error::ConfigError("training set is empty".into()));
    }
    let mut est = TrainedEstimator::untrained(cfg)?;
    let prepared: BTreeMap<&str, VoxelVolume> = volumes
        .iter()
        .map(|(id, v)| (id.as_str(), cfg.target_mode.volume(v)))
        .collect();
    let scenes: BTreeMap<&str, Scene> = prepared
        .iter()
        .map(|(id, v)| (*id, Scene::new(v, cfg.camera).with_up(cfg.up)))
        .collect();
    let mut items = Vec::with_capacity(dataset.len());
    for s in dataset {
        let scene = scenes
            .get(s.volume.as_str())
            .ok_or_else(|| Error::ConfigError(format!("unknown volume id '{}'", s.volume)))?;
        if s.image.width() != scene.resolution() || s.image.height() != scene.resolution() {
            return Err(Error::ConfigError(format!(
                "image is {}×{} but volume '{}' renders at {}",
                s.image.width(),
                s.image.height(),
                s.volume,
                scene.resolution()
            )));
        }
        items.push((image_features(&s.image)?, cfg.target_mode.target(&s.image), scene));
    }

    // Separate stream from initialization so changing one never shifts the other.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_0dd5);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut stats = EpochStats {
            epoch,
            recon_loss: 0.0,
            cycle_loss: 0.0,
            wins: vec![0; cfg.heads],
        };
        for &i in &order {
            let (features, target, scene) = &items[i];
            let step = est.reconstruction_step(features, scene, target)?;
            stats.recon_loss += step.hypotheses.best_error();
            stats.wins[step.hypotheses.selected] += 1;
            if cfg.cycle_weight > 0.0 {
                let sampled = cfg.band.sample(&mut rng);
                stats.cycle_loss += est.cycle_step(scene, &sampled)?;
            }
        }
        stats.recon_loss /= items.len() as f64;
        stats.cycle_loss /= items.len() as f64;
        est.history.push(stats);
    }
    Ok(est)
}

/// `‖f(Ĩ) − ṽ‖` where `Ĩ` renders `volume` at `sampled` and `f` is the
/// selection-chosen head.
pub fn cycle_loss(estimator: &TrainedEstimator, volume: &VoxelVolume, camera: &CameraModel, sampled: &Viewpoint) -> Result<f64> {
    let scene = Scene::new(volume, *camera).with_up(estimator.config.up);
    let v = estimator.predict(&scene.render_view(sampled)?)?;
    Ok((v.as_vector() - sampled.as_vector()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renderer::render_view;
    use crate::volume::{make_test_object, ObjectKind};

    fn car_data(n: usize) -> (Vec<TrainSample>, BTreeMap<String, VoxelVolume>) {
        let car = make_test_object(ObjectKind::Car, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = (0..n)
            .map(|_| TrainSample {
                image: render_view(&car, &ElevationBand::DEFAULT.sample(&mut rng), &Viewpoint::up(), &CameraModel::default())
                    .unwrap(),
                volume: "car".into(),
            })
            .collect();
        (samples, BTreeMap::from([("car".to_string(), car)]))
    }

    #[test]
    fn features_are_standardized() {
        let (data, _) = car_data(1);
        let f = image_features(&data[0].image).unwrap();
        assert_eq!(f.len(), FEATURE_SIDE * FEATURE_SIDE);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        let blank = RenderedImage::new(16, 16, vec![[0.0; 3]; 256], vec![0.0; 256]).unwrap();
        assert!(image_features(&blank).unwrap().iter().all(|&x| x == 0.0));
        let tiny = RenderedImage::new(8, 8, vec![[0.0; 3]; 64], vec![0.0; 64]).unwrap();
        assert!(image_features(&tiny).is_err());
    }

    #[test]
    fn only_the_winner_moves() {
        let (data, volumes) = car_data(1);
        let cfg = TrainConfig { heads: 4, ..TrainConfig::default() };
        let mut est = TrainedEstimator::untrained(&cfg).unwrap();
        let before = est.clone();
        let scene = Scene::new(&volumes["car"], cfg.camera);
        let step = est
            .reconstruction_step(&image_features(&data[0].image).unwrap(), &scene, &data[0].image)
            .unwrap();
        let m = step.hypotheses.selected;
        for k in 0..cfg.heads {
            assert_eq!(est.heads[k] == before.heads[k], k != m, "head {k}, winner {m}");
        }
        assert_ne!(est.selector, before.selector);
        assert!(step.selection_loss > 0.0);
    }

    #[test]
    fn training_is_deterministic_and_outputs_unit_vectors() {
        let (data, volumes) = car_data(6);
        let cfg = TrainConfig { epochs: 2, cycle_weight: 0.1, ..TrainConfig::default() };
        let a = train_multihead(&data, &volumes, &cfg).unwrap();
        let b = train_multihead(&data, &volumes, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.history.len(), 2);
        assert_eq!(a.history[0].wins.iter().sum::<usize>(), 6);
        let p = a.predict_detailed(&data[0].image).unwrap();
        assert_eq!(p.hypotheses.len(), 3);
        for h in &p.hypotheses {
            assert!((h.as_vector().norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.viewpoint, p.hypotheses[p.head]);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let est = TrainedEstimator::untrained(&TrainConfig::default()).unwrap();
        let back = TrainedEstimator::from_json(&est.to_json().unwrap()).unwrap();
        assert_eq!(back, est);
        let mut broken = est.clone();
        broken.heads[0].w2.pop();
        assert!(TrainedEstimator::from_json(&broken.to_json().unwrap()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, volumes) = car_data(2);
        let zero = TrainConfig { heads: 0, ..TrainConfig::default() };
        assert!(matches!(train_multihead(&data, &volumes, &zero), Err(Error::ConfigError(_))));
        assert!(matches!(train_multihead(&[], &volumes, &TrainConfig::default()), Err(Error::ConfigError(_))));
        let stray = vec![TrainSample { volume: "chair".into(), ..data[0].clone() }];
        assert!(matches!(train_multihead(&stray, &volumes, &TrainConfig::default()), Err(Error::ConfigError(_))));
        assert_eq!("silhouette".parse::<TargetMode>().unwrap(), TargetMode::Silhouette);
        assert!("mask".parse::<TargetMode>().is_err());
    }

    #[test]
    fn cycle_loss_is_a_chord_length() {
        let car = make_test_object(ObjectKind::Car, 16).unwrap();
        let est = TrainedEstimator::untrained(&TrainConfig::default()).unwrap();
        let d = cycle_loss(&est, &car, &CameraModel::default(), &euler_to_vector(1.0, 0.1)).unwrap();
        assert!((0.0..=2.0).contains(&d));
    }
}
