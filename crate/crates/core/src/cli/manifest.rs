//! Dataset manifests: a volume, a camera and one record per image.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euler_to_vector, Viewpoint};
use crate::renderer::{CameraModel, RenderedImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    /// Color image, relative to the manifest's directory.
    pub image: String,
    /// Alpha PGM next to the image; without it alpha is derived from color.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl ManifestItem {
    pub fn viewpoint(&self) -> Viewpoint {
        euler_to_vector(self.azimuth_deg.to_radians(), self.elevation_deg.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub volume: String,
    /// `null` for an orthographic camera.
    pub camera_distance: Option<f64>,
    pub items: Vec<ManifestItem>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub root: PathBuf,
}

/// Accepts either the manifest file or the directory holding `manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

impl LoadedManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let file = manifest_path(path);
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(file.display().to_string(), e.to_string()))?;
        for (i, item) in manifest.items.iter().enumerate() {
            if !item.azimuth_deg.is_finite() || !(-90.0..=90.0).contains(&item.elevation_deg) {
                return Err(Error::parse(
                    file.display().to_string(),
                    format!("item {i} has angles out of range: {}, {}", item.azimuth_deg, item.elevation_deg),
                ));
            }
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, root })
    }

    pub fn camera(&self) -> Result<CameraModel> {
        match self.manifest.camera_distance {
            None => Ok(CameraModel::orthographic()),
            Some(d) => CameraModel::new(d),
        }
    }

    pub fn viewpoints(&self) -> Vec<Viewpoint> {
        self.manifest.items.iter().map(ManifestItem::viewpoint).collect()
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn volume_path(&self) -> PathBuf {
        self.resolve(&self.manifest.volume)
    }

    pub fn load_image(&self, item: &ManifestItem) -> Result<RenderedImage> {
        let ppm = self.resolve(&item.image);
        match &item.alpha {
            Some(a) => RenderedImage::read_with_alpha(&ppm, &self.resolve(a)),
            None => RenderedImage::read_ppm(&ppm),
        }
    }

    pub fn load_images(&self) -> Result<Vec<RenderedImage>> {
        self.manifest.items.iter().map(|i| self.load_image(i)).collect()
    }
}
