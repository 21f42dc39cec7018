//! Experiment runner behind the `voxelview` binary.
//!
//! Every command validates its inputs and does all of its work before it
//! writes anything, so a failed run leaves no partial artifacts. Outputs are
//! a pure function of the flags: no timestamps, and parallel work is
//! collected in input order.

mod config;
mod manifest;

pub use config::{ExperimentConfig, MAX_RESOLUTION};
pub use manifest::{manifest_path, LoadedManifest, Manifest, ManifestItem};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    optimize_from, train_multihead, OptimizerConfig, TrainSample, TrainedEstimator,
};
use crate::evalkit::{
    compute_metrics, constant_predictor, linear_align, procrustes_align, scatter_data, write_scatter_csv,
    AlignmentTransform, MetricsReport,
};
use crate::geometry::{euler_to_vector, read_pose_file, ElevationBand, Viewpoint};
use crate::renderer::{check_gradient, render_batch, CameraModel, RenderedImage, Scene};
use crate::volume::{
    make_test_object, random_blob_volume, read_volume, shape_prior, write_volume_bytes, ObjectKind, VoxelVolume,
    DEFAULT_PRIOR_AMPLITUDE, DEFAULT_PRIOR_SIGMA,
};

/// Relative-error bound a gradient trial must stay under.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "voxelview", version, about = "Differentiable voxel rendering and viewpoint estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural test object as a VXV1 volume.
    GenObject {
        #[arg(long)]
        kind: ObjectKind,
        #[arg(long, default_value_t = 32)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the Gaussian shape prior as a white VXV1 volume.
    GenPrior {
        #[arg(long, default_value_t = 32)]
        res: usize,
        #[arg(long, default_value_t = DEFAULT_PRIOR_SIGMA)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_PRIOR_AMPLITUDE)]
        amplitude: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a volume from random viewpoints in an elevation band.
    RenderDataset {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
        elev_min: f64,
        #[arg(long, default_value_t = 40.0, allow_negative_numbers = true)]
        elev_max: f64,
        /// Camera distance; `inf` renders orthographically.
        #[arg(long, default_value_t = CameraModel::DEFAULT_DISTANCE)]
        camera_distance: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Recover each image's viewpoint by multi-start optimization.
    Recover {
        /// Defaults to the manifest's volume.
        #[arg(long)]
        volume: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report path with a `.csv` extension.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Train the multi-head estimator.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train on this manifest instead of rendering `n_images` views of
        /// the configured object.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Defaults to `<out stem>_loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Score a trained estimator on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Align::Procrustes)]
        align: Align,
        /// Leading images used only to fit the alignment.
        #[arg(long, default_value_t = 8)]
        calibration: usize,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Score the constant mean-viewpoint predictor.
    BiasReport {
        /// Dataset manifest, or a pose CSV/JSON file.
        #[arg(long)]
        gts: PathBuf,
        #[arg(long, default_value_t = 8)]
        calibration: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare analytic and finite-difference viewpoint gradients.
    Gradcheck {
        #[arg(long, default_value_t = 32)]
        res: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Align {
    Procrustes,
    Linear,
    None,
}

/// How a command finished when it did not error.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    /// The command ran but its check did not pass (exit code 1).
    CheckFailed(String),
}

/// Process exit code for an error: 3 for I/O, 2 for everything the caller
/// could fix by changing flags or inputs.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::GenObject { kind, res, out: path } => {
            let bytes = write_volume_bytes(&make_test_object(kind, res)?);
            write_file(&path, &bytes)?;
            say(out, format!("wrote {kind} ({res}³) to {}", path.display()))
        }
        Command::GenPrior {
            res,
            sigma,
            amplitude,
            out: path,
        } => {
            let prior = shape_prior(res, sigma, amplitude)?;
            let voxels = prior.values().iter().map(|&q| [1.0, 1.0, 1.0, q]).collect();
            write_file(&path, &write_volume_bytes(&VoxelVolume::from_voxels(res, voxels)?))?;
            say(out, format!("wrote prior ({res}³, σ={sigma}) to {}", path.display()))
        }
        Command::RenderDataset {
            volume,
            n,
            seed,
            elev_min,
            elev_max,
            camera_distance,
            out_dir,
        } => render_dataset(&volume, n, seed, elev_min, elev_max, camera_distance, &out_dir, out),
        Command::Recover {
            volume,
            dataset,
            starts,
            report,
            scatter,
        } => recover(volume.as_deref(), &dataset, starts, &report, scatter, out),
        Command::Train {
            config,
            out: model,
            dataset,
            loss_csv,
        } => train(&config, &model, dataset.as_deref(), loss_csv, out),
        Command::Evaluate {
            model,
            dataset,
            align,
            calibration,
            report,
            scatter,
        } => evaluate(&model, &dataset, align, calibration, &report, scatter, out),
        Command::BiasReport {
            gts,
            calibration,
            report,
        } => bias_report(&gts, calibration, &report, out),
        Command::Gradcheck { res, trials, seed, eps } => {
            let summary = run_gradcheck(res, trials, seed, eps)?;
            say(out, summary.to_string())?;
            if summary.failures == 0 {
                Ok(Outcome::Success)
            } else {
                Ok(Outcome::CheckFailed(format!("{} of {} trials failed", summary.failures, summary.trials)))
            }
        }
    }
}

fn say(out: &mut dyn Write, line: String) -> Result<Outcome> {
    writeln!(out, "{line}").map_err(|e| Error::io("stdout", e))?;
    Ok(Outcome::Success)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_scatter(path: &Path, preds: &[Viewpoint], gts: &[Viewpoint], heads: &[usize]) -> Result<()> {
    let mut buf = Vec::new();
    write_scatter_csv(&scatter_data(preds, gts, heads)?, &mut buf)?;
    write_file(path, &buf)
}

/// `path` with its extension replaced.
fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn camera_from_distance(d: f64) -> Result<CameraModel> {
    if d == f64::INFINITY {
        Ok(CameraModel::orthographic())
    } else {
        CameraModel::new(d)
    }
}

/// Draws `n` viewpoints from `band` and renders them in order.
pub fn sample_and_render(
    volume: &VoxelVolume,
    camera: &CameraModel,
    band: &ElevationBand,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Viewpoint>, Vec<RenderedImage>)> {
    let views: Vec<Viewpoint> = (0..n).map(|_| band.sample(rng)).collect();
    let images = render_batch(volume, &views, &Viewpoint::up(), camera)?;
    Ok((views, images))
}

#[allow(clippy::too_many_arguments)]
fn render_dataset(
    volume_path: &Path,
    n: usize,
    seed: u64,
    elev_min: f64,
    elev_max: f64,
    camera_distance: f64,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<Outcome> {
    if n == 0 {
        return Err(Error::invalid("--n must be positive"));
    }
    let band = ElevationBand::new(elev_min, elev_max)?;
    let camera = camera_from_distance(camera_distance)?;
    let volume = read_volume(volume_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (views, images) = sample_and_render(&volume, &camera, &band, n, &mut rng)?;

    let items = views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (az, el) = v.to_euler();
            ManifestItem {
                image: format!("images/{i:06}.ppm"),
                alpha: Some(format!("images/{i:06}_alpha.pgm")),
                azimuth_deg: az.to_degrees().rem_euclid(360.0),
                elevation_deg: el.to_degrees(),
            }
        })
        .collect::<Vec<_>>();
    // The volume is copied next to the manifest so the dataset is
    // self-contained and independent of the working directory.
    let manifest = Manifest {
        volume: "volume.vxv".into(),
        camera_distance: (!camera.is_orthographic()).then(|| camera.distance()),
        items,
    };
    write_file(&out_dir.join("volume.vxv"), &write_volume_bytes(&volume))?;
    for (item, image) in manifest.items.iter().zip(&images) {
        write_file(&out_dir.join(&item.image), &image.to_ppm())?;
        write_file(&out_dir.join(item.alpha.as_ref().expect("set above")), &image.alpha_to_pgm())?;
    }
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    say(out, format!("rendered {n} views to {}", out_dir.display()))
}

#[derive(Debug, Serialize)]
struct RecoveredView {
    azimuth_deg: f64,
    elevation_deg: f64,
    loss: f64,
    best_start: usize,
}

#[derive(Debug, Serialize)]
struct RecoverReport {
    starts: usize,
    metrics: MetricsReport,
    predictions: Vec<RecoveredView>,
}

fn recover(
    volume: Option<&Path>,
    dataset: &Path,
    starts: usize,
    report: &Path,
    scatter: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    if starts == 0 {
        return Err(Error::invalid("--starts must be positive"));
    }
    let data = LoadedManifest::read(dataset)?;
    if data.manifest.items.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    let volume = read_volume(&volume.map(Path::to_path_buf).unwrap_or_else(|| data.volume_path()))?;
    let camera = data.camera()?;
    let images = data.load_images()?;
    let cfg = OptimizerConfig::default();
    let seeds = cfg.seeds(starts);
    let scene = Scene::new(&volume, camera);
    let results = images
        .iter()
        .map(|img| optimize_from(&scene, img, &seeds, &cfg))
        .collect::<Result<Vec<_>>>()?;

    let gts = data.viewpoints();
    let preds: Vec<Viewpoint> = results.iter().map(|r| r.viewpoint).collect();
    let heads: Vec<usize> = results.iter().map(|r| r.best_start).collect();
    let metrics = compute_metrics(&preds, &gts, &AlignmentTransform::identity())?;
    let predictions = results
        .iter()
        .map(|r| {
            let (az, el) = r.viewpoint.to_euler();
            RecoveredView {
                azimuth_deg: az.to_degrees().rem_euclid(360.0),
                elevation_deg: el.to_degrees(),
                loss: r.loss,
                best_start: r.best_start,
            }
        })
        .collect();
    let summary = format!(
        "recovered {} views: accuracy@30 {:.3}, median error {:.3}°",
        metrics.n_samples, metrics.accuracy_at_30, metrics.median_error_deg
    );
    write_json(report, &RecoverReport { starts, metrics, predictions })?;
    write_scatter(&scatter.unwrap_or_else(|| sibling(report, "csv")), &preds, &gts, &heads)?;
    say(out, summary)
}

fn train(
    config: &Path,
    model: &Path,
    dataset: Option<&Path>,
    loss_csv: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let cfg = ExperimentConfig::read(config)?;
    let train_cfg = cfg.train_config()?;
    let (samples, volumes): (Vec<TrainSample>, _) = match dataset {
        Some(path) => {
            let data = LoadedManifest::read(path)?;
            if data.camera()? != train_cfg.camera {
                return Err(Error::ConfigError("dataset camera differs from the configured camera".into()));
            }
            let volume = read_volume(&data.volume_path())?;
            let samples = data
                .load_images()?
                .into_iter()
                .map(|image| TrainSample { image, volume: "dataset".into() })
                .collect();
            (samples, BTreeMap::from([("dataset".to_string(), volume)]))
        }
        None => {
            let volume = make_test_object(cfg.object, cfg.resolution)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (_, images) = sample_and_render(&volume, &train_cfg.camera, &train_cfg.band, cfg.n_images, &mut rng)?;
            let id = cfg.object.name().to_string();
            let samples = images
                .into_iter()
                .map(|image| TrainSample { image, volume: id.clone() })
                .collect();
            (samples, BTreeMap::from([(id, volume)]))
        }
    };
    let estimator = train_multihead(&samples, &volumes, &train_cfg)?;

    let base = cfg.output_dir.as_deref().map(PathBuf::from).unwrap_or_default();
    let model_path = base.join(model);
    let loss_path = loss_csv.map(|p| base.join(p)).unwrap_or_else(|| {
        let stem = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        model_path.with_file_name(format!("{stem}_loss.csv"))
    });
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    csv_out.write_record(["epoch", "recon_loss", "cycle_loss"])?;
    for e in &estimator.history {
        csv_out.serialize((e.epoch, e.recon_loss, e.cycle_loss))?;
    }
    let csv_bytes = csv_out.into_inner().map_err(|e| Error::io(&loss_path, e.into_error()))?;
    write_file(&model_path, format!("{}\n", estimator.to_json()?).as_bytes())?;
    write_file(&loss_path, &csv_bytes)?;
    let last = estimator.history.last().map_or(f64::NAN, |e| e.recon_loss);
    say(
        out,
        format!(
            "trained {} head(s) for {} epochs on {} images; final reconstruction loss {last:.6}",
            train_cfg.heads,
            train_cfg.epochs,
            samples.len()
        ),
    )
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    calibration: usize,
    metrics: MetricsReport,
}

/// Fits the requested alignment on the calibration split.
pub fn fit_alignment(align: Align, preds: &[Viewpoint], gts: &[Viewpoint]) -> Result<AlignmentTransform> {
    match align {
        Align::None => Ok(AlignmentTransform::identity()),
        Align::Procrustes => procrustes_align(preds, gts),
        Align::Linear => linear_align(preds, gts),
    }
}

fn evaluate(
    model: &Path,
    dataset: &Path,
    align: Align,
    calibration: usize,
    report: &Path,
    scatter: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let estimator = TrainedEstimator::load(model)?;
    let data = LoadedManifest::read(dataset)?;
    // Without an alignment there is nothing to calibrate, so every image
    // is scored.
    let held_out = if align == Align::None { 0 } else { calibration };
    if data.manifest.items.len() <= held_out {
        return Err(Error::invalid(format!(
            "dataset has {} images; need more than the {held_out} calibration images",
            data.manifest.items.len()
        )));
    }
    let images = data.load_images()?;
    let predictions = images
        .par_iter()
        .map(|img| estimator.predict_detailed(img))
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Viewpoint> = predictions.iter().map(|p| p.viewpoint).collect();
    let heads: Vec<usize> = predictions.iter().map(|p| p.head).collect();
    let gts = data.viewpoints();
    let alignment = fit_alignment(align, &preds[..held_out], &gts[..held_out])?;
    let metrics = compute_metrics(&preds[held_out..], &gts[held_out..], &alignment)?;
    let aligned: Vec<Viewpoint> = preds[held_out..].iter().map(|p| alignment.apply(p)).collect();
    let summary = format!(
        "evaluated {} views: accuracy@30 {:.3}, median error {:.3}°, DVA {:.3}",
        metrics.n_samples, metrics.accuracy_at_30, metrics.median_error_deg, metrics.dva
    );
    write_json(report, &EvaluateReport { calibration: held_out, metrics })?;
    write_scatter(
        &scatter.unwrap_or_else(|| sibling(report, "csv")),
        &aligned,
        &gts[held_out..],
        &heads[held_out..],
    )?;
    say(out, summary)
}

#[derive(Debug, Serialize)]
struct BiasReport {
    calibration: usize,
    /// `[azimuth_deg, elevation_deg]` of the constant prediction.
    constant_prediction: Option<[f64; 2]>,
    /// Set when the calibration mean vanishes and no prediction exists.
    error: Option<String>,
    metrics: Option<MetricsReport>,
}

fn read_ground_truth(path: &Path) -> Result<Vec<Viewpoint>> {
    match LoadedManifest::read(path) {
        Ok(data) => Ok(data.viewpoints()),
        // Not a manifest; a plain pose file is the other accepted form.
        Err(e) => read_pose_file(path).map_err(|_| e),
    }
}

/// The constant predictor is fit on the first `calibration` viewpoints and
/// scored on the rest (on all of them when nothing is left over).
pub fn bias_metrics(gts: &[Viewpoint], calibration: usize) -> Result<(usize, Result<(Viewpoint, MetricsReport)>)> {
    if gts.is_empty() {
        return Err(Error::invalid("no ground-truth viewpoints"));
    }
    if calibration == 0 {
        return Err(Error::invalid("--calibration must be positive"));
    }
    let k = calibration.min(gts.len());
    let eval = if k < gts.len() { &gts[k..] } else { gts };
    let result = constant_predictor(&gts[..k]).and_then(|c| {
        let preds = vec![c; eval.len()];
        Ok((c, compute_metrics(&preds, eval, &AlignmentTransform::identity())?))
    });
    Ok((k, result))
}

fn bias_report(gts_path: &Path, calibration: usize, report: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let gts = read_ground_truth(gts_path)?;
    let (k, result) = bias_metrics(&gts, calibration)?;
    let (doc, summary) = match result {
        Ok((c, metrics)) => {
            let (az, el) = c.to_euler();
            let summary = format!(
                "constant predictor: accuracy@30 {:.3}, median {:.3}°, DVA {:.3}, CI {:.3}",
                metrics.accuracy_at_30, metrics.median_error_deg, metrics.dva, metrics.confidence_index
            );
            let doc = BiasReport {
                calibration: k,
                constant_prediction: Some([az.to_degrees().rem_euclid(360.0), el.to_degrees()]),
                error: None,
                metrics: Some(metrics),
            };
            (doc, summary)
        }
        Err(e @ Error::DegenerateMean) => (
            BiasReport {
                calibration: k,
                constant_prediction: None,
                error: Some(e.to_string()),
                metrics: None,
            },
            format!("constant predictor undefined: {e}"),
        ),
        Err(e) => return Err(e),
    };
    write_json(report, &doc)?;
    say(out, summary)
}

/// Outcome of a batch of gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub trials: usize,
    pub failures: usize,
    /// Worst relative error of the cell-frozen central difference.
    pub worst_relative_error: f64,
    /// Worst relative error of the ordinary central difference, for
    /// reference; it includes trilinear cell-crossing noise.
    pub worst_plain_relative_error: f64,
}

impl std::fmt::Display for GradcheckSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "gradcheck: {}/{} trials passed; worst relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e}); \
             worst plain central-difference error {:.3e}",
            self.trials - self.failures,
            self.trials,
            self.worst_relative_error,
            self.worst_plain_relative_error
        )
    }
}

/// Random configurations cycle through the four test objects and a smooth
/// random volume; each trial draws a viewpoint and an unrelated target view.
pub fn run_gradcheck(res: usize, trials: usize, seed: u64, eps: f64) -> Result<GradcheckSummary> {
    if trials == 0 {
        return Err(Error::invalid("--trials must be positive"));
    }
    if !(eps.is_finite() && eps > 0.0 && eps < 0.1) {
        return Err(Error::invalid(format!("--eps must be in (0, 0.1), got {eps}")));
    }
    let objects = ObjectKind::ALL
        .iter()
        .map(|&k| make_test_object(k, res))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = CameraModel::default();
    let view = |rng: &mut ChaCha8Rng| euler_to_vector(rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-0.6..0.8));
    let mut summary = GradcheckSummary {
        trials,
        failures: 0,
        worst_relative_error: 0.0,
        worst_plain_relative_error: 0.0,
    };
    for trial in 0..trials {
        let slot = trial % (objects.len() + 1);
        let blob;
        let volume = if slot == objects.len() {
            blob = random_blob_volume(res, 4, &mut rng)?;
            &blob
        } else {
            &objects[slot]
        };
        let scene = Scene::new(volume, camera);
        let v = view(&mut rng);
        let target = scene.render_view(&view(&mut rng))?;
        let check = check_gradient(&scene, &v, &target, eps)?;
        if !(check.relative_error < GRADCHECK_TOLERANCE) {
            summary.failures += 1;
        }
        summary.worst_relative_error = summary.worst_relative_error.max(check.relative_error);
        summary.worst_plain_relative_error = summary.worst_plain_relative_error.max(check.plain_relative_error);
    }
    Ok(summary)
}
