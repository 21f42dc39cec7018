//! Accuracy, median error, discretized viewpoint accuracy and bias
//! baselines.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::AlignmentTransform;
use crate::error::{Error, Result};
use crate::geometry::{azimuth_error, viewpoint_error, Viewpoint};

/// A prediction counts as correct at or below this error.
pub const ACCURACY_THRESHOLD_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    /// Geodesic distance between the zero-tilt rotations.
    #[default]
    Geodesic,
    /// Wrapped azimuth difference only.
    Azimuth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub start_deg: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub error_mode: ErrorMode,
    pub accuracy_at_30: f64,
    pub median_error_deg: f64,
    /// Mean accuracy over nonempty ground-truth azimuth bins.
    pub dva: f64,
    /// Fraction of bins holding more than `min_bin` samples.
    pub confidence_index: f64,
    pub bin_width_deg: f64,
    pub min_bin: usize,
    pub per_bin: Vec<BinStats>,
    pub alignment: AlignmentTransform,
}

/// Per-sample errors in degrees after alignment.
pub fn aligned_errors(
    preds: &[Viewpoint],
    gts: &[Viewpoint],
    alignment: &AlignmentTransform,
    mode: ErrorMode,
) -> Result<Vec<f64>> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch(preds.len(), gts.len()));
    }
    Ok(preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            let p = alignment.apply(p);
            match mode {
                ErrorMode::Geodesic => viewpoint_error(&p, g),
                ErrorMode::Azimuth => azimuth_error(p.to_euler().0, g.to_euler().0),
            }
            .to_degrees()
        })
        .collect())
}

/// Lower median (the `⌊(n−1)/2⌋`-th order statistic).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

fn azimuth_deg(v: &Viewpoint) -> f64 {
    v.to_euler().0.to_degrees().rem_euclid(360.0)
}

/// Geodesic-mode metrics with the default 30° bins and `> 10` threshold.
pub fn compute_metrics(preds: &[Viewpoint], gts: &[Viewpoint], alignment: &AlignmentTransform) -> Result<MetricsReport> {
    compute_metrics_with(preds, gts, alignment, 30.0, 10, ErrorMode::Geodesic)
}

pub fn compute_metrics_with(
    preds: &[Viewpoint],
    gts: &[Viewpoint],
    alignment: &AlignmentTransform,
    bin_width_deg: f64,
    min_bin: usize,
    mode: ErrorMode,
) -> Result<MetricsReport> {
    if !(bin_width_deg.is_finite() && bin_width_deg > 0.0 && bin_width_deg <= 360.0) {
        return Err(Error::invalid(format!("bin width must be in (0, 360], got {bin_width_deg}")));
    }
    let errors = aligned_errors(preds, gts, alignment, mode)?;
    if errors.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let bins = (360.0 / bin_width_deg).ceil() as usize;
    let mut counts = vec![0usize; bins];
    let mut hits = vec![0usize; bins];
    for (g, e) in gts.iter().zip(&errors) {
        let b = ((azimuth_deg(g) / bin_width_deg) as usize).min(bins - 1);
        counts[b] += 1;
        hits[b] += usize::from(*e <= ACCURACY_THRESHOLD_DEG);
    }
    let per_bin: Vec<BinStats> = (0..bins)
        .map(|b| BinStats {
            start_deg: b as f64 * bin_width_deg,
            count: counts[b],
            accuracy: (counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64),
        })
        .collect();
    let filled: Vec<f64> = per_bin.iter().filter_map(|b| b.accuracy).collect();
    let n = errors.len();
    Ok(MetricsReport {
        n_samples: n,
        error_mode: mode,
        accuracy_at_30: hits.iter().sum::<usize>() as f64 / n as f64,
        median_error_deg: lower_median(&errors).expect("nonempty"),
        dva: filled.iter().sum::<f64>() / filled.len() as f64,
        confidence_index: counts.iter().filter(|&&c| c > min_bin).count() as f64 / bins as f64,
        bin_width_deg,
        min_bin,
        per_bin,
        alignment: alignment.clone(),
    })
}

/// Normalized mean of the validation viewpoints: the best single guess
/// when the evaluation set is biased.
pub fn constant_predictor(validation_gts: &[Viewpoint]) -> Result<Viewpoint> {
    if validation_gts.is_empty() {
        return Err(Error::invalid("constant predictor needs at least one viewpoint"));
    }
    let sum: Vector3<f64> = validation_gts.iter().map(|v| v.as_vector()).sum();
    let mean = sum / validation_gts.len() as f64;
    if mean.norm() <= 1e-6 {
        return Err(Error::DegenerateMean);
    }
    Viewpoint::new(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub gt_azimuth_deg: f64,
    pub pred_azimuth_deg: f64,
    pub head: usize,
}

/// Ground-truth vs predicted azimuth in `[0, 360)`, in input order.
pub fn scatter_data(preds: &[Viewpoint], gts: &[Viewpoint], heads: &[usize]) -> Result<Vec<ScatterRow>> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch(preds.len(), gts.len()));
    }
    if heads.len() != preds.len() {
        return Err(Error::LengthMismatch(preds.len(), heads.len()));
    }
    Ok(preds
        .iter()
        .zip(gts)
        .zip(heads)
        .map(|((p, g), &head)| ScatterRow {
            gt_azimuth_deg: azimuth_deg(g),
            pred_azimuth_deg: azimuth_deg(p),
            head,
        })
        .collect())
}

/// Writes rows as CSV with header `gt_azimuth_deg,pred_azimuth_deg,head`.
pub fn write_scatter_csv(rows: &[ScatterRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gt_azimuth_deg", "pred_azimuth_deg", "head"])?;
    for r in rows {
        w.serialize((r.gt_azimuth_deg, r.pred_azimuth_deg, r.head))?;
    }
    w.flush().map_err(|e| Error::io("scatter csv", e))?;
    Ok(())
}

/// Fraction of rows whose prediction lies within `tol_deg` of the
/// ground truth shifted by `shift_deg` (0 for the diagonal, 180 for the
/// symmetry line).
pub fn fraction_near_line(rows: &[ScatterRow], shift_deg: f64, tol_deg: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let near = rows
        .iter()
        .filter(|r| {
            azimuth_error(r.pred_azimuth_deg.to_radians(), (r.gt_azimuth_deg + shift_deg).to_radians()).to_degrees()
                <= tol_deg
        })
        .count();
    near as f64 / rows.len() as f64
}
