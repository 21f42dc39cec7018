use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use voxelview::cli::{ExperimentConfig, LoadedManifest, Manifest, ManifestItem};
use voxelview::geometry::ElevationBand;
use voxelview::volume::read_volume;

fn voxelview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxelview"))
        .args(args)
        .env("VOXELVIEW_THREADS", "1")
        .output()
        .expect("spawn voxelview")
}

fn ok(args: &[&str]) -> String {
    let out = voxelview(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dataset(dir: &Path, kind: &str, res: &str, n: &str, seed: &str) -> PathBuf {
    let vol = dir.join(format!("{kind}.vxv"));
    ok(&["gen-object", "--kind", kind, "--res", res, "--out", s(&vol)]);
    let out = dir.join(format!("{kind}-{n}-{seed}"));
    ok(&["render-dataset", "--volume", s(&vol), "--n", n, "--seed", seed, "--out-dir", s(&out)]);
    out
}

#[test]
fn gen_object_writes_readable_deterministic_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.vxv"), dir.path().join("b.vxv"));
    ok(&["gen-object", "--kind", "cube", "--res", "16", "--out", s(&a)]);
    ok(&["gen-object", "--kind", "cube", "--res", "16", "--out", s(&b)]);
    assert_eq!(read_volume(&a).unwrap().resolution(), 16);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let bad = dir.path().join("bad.vxv");
    let out = voxelview(&["gen-object", "--kind", "cube", "--res", "4", "--out", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!bad.exists());
    assert_eq!(voxelview(&["gen-object", "--kind", "boat", "--out", s(&bad)]).status.code(), Some(2));
    assert_eq!(voxelview(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn gen_prior_writes_a_volume() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prior.vxv");
    ok(&["gen-prior", "--res", "16", "--out", s(&p)]);
    let v = read_volume(&p).unwrap();
    assert!(v.occupancy_mass() > 0.0);
    assert_eq!(voxelview(&["gen-prior", "--sigma", "-1", "--out", s(&p)]).status.code(), Some(2));
}

#[test]
fn render_dataset_emits_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path(), "car", "16", "100", "1");
    let data = LoadedManifest::read(&a).unwrap();
    assert_eq!(data.manifest.items.len(), 100);
    assert_eq!(data.manifest.camera_distance, Some(2.5));
    let images = data.load_images().unwrap();
    assert!(images.iter().all(|i| i.width() == 16 && i.alpha().iter().any(|&x| x > 0.0)));
    for item in &data.manifest.items {
        assert!((-20.0..=40.0).contains(&item.elevation_deg));
        assert!((0.0..360.0).contains(&item.azimuth_deg));
    }
    // Same seed, fresh directory: identical manifest and pixels.
    let vol = dir.path().join("car.vxv");
    let b = dir.path().join("again");
    ok(&["render-dataset", "--volume", s(&vol), "--n", "100", "--seed", "1", "--out-dir", s(&b)]);
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
    assert_eq!(std::fs::read(a.join("images/000042.ppm")).unwrap(), std::fs::read(b.join("images/000042.ppm")).unwrap());

    let ortho = dir.path().join("ortho");
    ok(&["render-dataset", "--volume", s(&vol), "--n", "2", "--camera-distance", "inf", "--out-dir", s(&ortho)]);
    assert!(json(&ortho.join("manifest.json"))["camera_distance"].is_null());

    let none = dir.path().join("none");
    let out = voxelview(&["render-dataset", "--volume", s(&vol), "--n", "3", "--elev-min", "50", "--elev-max", "10", "--out-dir", s(&none)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!none.exists());
    let missing = voxelview(&["render-dataset", "--volume", "/nonexistent.vxv", "--n", "3", "--out-dir", s(&none)]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn band_sampling_has_uniform_azimuth() {
    // Chi-square oracle over twelve 30° bins: each expects 1/12 of draws.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let mut bins = [0usize; 12];
    for _ in 0..n {
        let (az, _) = ElevationBand::DEFAULT.sample(&mut rng).to_euler();
        bins[(az.to_degrees().rem_euclid(360.0) / 30.0) as usize % 12] += 1;
    }
    let expected = n as f64 / 12.0;
    for b in bins {
        assert!((b as f64 / n as f64 - 1.0 / 12.0).abs() < 0.01, "{bins:?}");
    }
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 11 degrees of freedom.
    assert!(chi2 < 31.26, "chi-square {chi2}");
}

#[test]
fn recover_reports_metrics_and_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "car", "32", "4", "5");
    let report = dir.path().join("recover.json");
    ok(&["recover", "--dataset", s(&data), "--starts", "8", "--report", s(&report)]);
    let r = json(&report);
    assert_eq!(r["metrics"]["n_samples"], 4);
    assert!(r["metrics"]["median_error_deg"].as_f64().unwrap() < 5.0);
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    assert!(csv.starts_with("gt_azimuth_deg,pred_azimuth_deg,head\n"));
    assert_eq!(csv.lines().count(), 5);

    let missing = voxelview(&["recover", "--dataset", s(&dir.path().join("nope")), "--report", s(&dir.path().join("x.json"))]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(!dir.path().join("x.json").exists());
}

fn write_config(path: &Path, cfg: &ExperimentConfig) {
    std::fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

#[test]
fn train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let cfg = ExperimentConfig { resolution: 16, n_images: 12, epochs: 2, seed: 3, ..ExperimentConfig::default() };
    write_config(&cfg_path, &cfg);
    let (m1, m2) = (dir.path().join("m1.json"), dir.path().join("m2.json"));
    ok(&["train", "--config", s(&cfg_path), "--out", s(&m1)]);
    ok(&["train", "--config", s(&cfg_path), "--out", s(&m2)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let loss = std::fs::read_to_string(dir.path().join("m1_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let data = dataset(dir.path(), "car", "16", "20", "9");
    for align in ["procrustes", "linear", "none"] {
        let report = dir.path().join(format!("eval-{align}.json"));
        ok(&["evaluate", "--model", s(&m1), "--dataset", s(&data), "--align", align, "--report", s(&report)]);
        let first = std::fs::read(&report).unwrap();
        ok(&["evaluate", "--model", s(&m1), "--dataset", s(&data), "--align", align, "--report", s(&report)]);
        assert_eq!(std::fs::read(&report).unwrap(), first, "evaluate is idempotent");
        let r = json(&report);
        let expected_n = if align == "none" { 20 } else { 12 };
        assert_eq!(r["metrics"]["n_samples"], expected_n);
        assert_eq!(r["metrics"]["alignment"]["kind"], if align == "linear" { "linear" } else { "rotation" });
    }

    // Bad configs fail before anything is written.
    let bad = ExperimentConfig { heads: 0, ..cfg };
    write_config(&cfg_path, &bad);
    let m3 = dir.path().join("m3.json");
    assert_eq!(voxelview(&["train", "--config", s(&cfg_path), "--out", s(&m3)]).status.code(), Some(2));
    assert!(!m3.exists());
    std::fs::write(&cfg_path, "{\"heads\": \"three\"}").unwrap();
    assert_eq!(voxelview(&["train", "--config", s(&cfg_path), "--out", s(&m3)]).status.code(), Some(2));
}

#[test]
fn evaluate_without_alignment_reports_raw_errors() {
    use voxelview::estimator::{TrainConfig, TrainedEstimator};
    use voxelview::evalkit::{aligned_errors, lower_median, AlignmentTransform, ErrorMode};
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "chair", "16", "9", "2");
    let model = dir.path().join("m.json");
    let est = TrainedEstimator::untrained(&TrainConfig::default()).unwrap();
    est.save(&model).unwrap();
    let report = dir.path().join("r.json");
    ok(&["evaluate", "--model", s(&model), "--dataset", s(&data), "--align", "none", "--report", s(&report)]);
    let loaded = LoadedManifest::read(&data).unwrap();
    let preds: Vec<_> = loaded.load_images().unwrap().iter().map(|i| est.predict(i).unwrap()).collect();
    let raw = aligned_errors(&preds, &loaded.viewpoints(), &AlignmentTransform::identity(), ErrorMode::Geodesic).unwrap();
    let r = json(&report);
    assert_eq!(r["metrics"]["median_error_deg"].as_f64().unwrap(), lower_median(&raw).unwrap());
    let too_few = voxelview(&["evaluate", "--model", s(&model), "--dataset", s(&data), "--calibration", "9", "--report", s(&report)]);
    assert_eq!(too_few.status.code(), Some(2));
}

fn write_manifest(dir: &Path, name: &str, angles: &[(f64, f64)]) -> PathBuf {
    let m = Manifest {
        volume: "unused.vxv".into(),
        camera_distance: Some(2.5),
        items: angles
            .iter()
            .map(|&(azimuth_deg, elevation_deg)| ManifestItem { image: "unused.ppm".into(), alpha: None, azimuth_deg, elevation_deg })
            .collect(),
    };
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    path
}

#[test]
fn bias_report_cases() {
    let dir = tempfile::tempdir().unwrap();
    let concentrated: Vec<(f64, f64)> =
        (0..200).map(|i| if i % 10 == 9 { (i as f64 * 7.0 % 360.0, 0.0) } else { (95.0 + (i % 20) as f64, 10.0) }).collect();
    let report = dir.path().join("bias.json");
    ok(&["bias-report", "--gts", s(&write_manifest(dir.path(), "c.json", &concentrated)), "--report", s(&report)]);
    let m = &json(&report)["metrics"];
    assert!(m["accuracy_at_30"].as_f64().unwrap() >= 0.85);
    assert!(m["dva"].as_f64().unwrap() <= 0.6);

    ok(&["bias-report", "--gts", s(&write_manifest(dir.path(), "one.json", &[(30.0, 5.0)])), "--report", s(&report)]);
    assert_eq!(json(&report)["metrics"]["n_samples"], 1);

    ok(&["bias-report", "--gts", s(&write_manifest(dir.path(), "anti.json", &[(0.0, 0.0), (180.0, 0.0)])), "--report", s(&report)]);
    let r = json(&report);
    assert!(r["metrics"].is_null());
    assert!(r["error"].as_str().unwrap().contains("mean viewpoint vanishes"));

    // Plain pose files work too.
    let csv = dir.path().join("poses.csv");
    std::fs::write(&csv, "azimuth_deg,elevation_deg\n10,0\n20,5\n30,0\n").unwrap();
    ok(&["bias-report", "--gts", s(&csv), "--calibration", "2", "--report", s(&report)]);
    assert_eq!(json(&report)["metrics"]["n_samples"], 1);
}

#[test]
fn gradcheck_command() {
    let a = ok(&["gradcheck", "--res", "16", "--trials", "5", "--seed", "4"]);
    let b = ok(&["gradcheck", "--res", "16", "--trials", "5", "--seed", "4"]);
    assert_eq!(a, b);
    assert!(a.contains("5/5 trials passed"), "{a}");
    assert_eq!(voxelview(&["gradcheck", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(voxelview(&["gradcheck", "--res", "8", "--trials", "1"]).status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_voxelview"))
        .args(["gradcheck", "--res", "16", "--trials", "1"])
        .env("VOXELVIEW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
