//! Pose files: CSV `azimuth_deg,elevation_deg` records, or a JSON array of
//! unit 3-vectors.

use std::path::Path;

use nalgebra::Vector3;

use super::{euler_to_vector, Viewpoint};
use crate::error::{Error, Result};

/// Parses one `azimuth_deg,elevation_deg` record per line. A non-numeric
/// first line is treated as a header; blank lines are skipped.
pub fn parse_pose_csv(text: &str) -> Result<Vec<Viewpoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::parse(
                format!("pose csv line {}", index + 1),
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                let (az, el) = (vals[0], vals[1]);
                if !az.is_finite() || !(-90.0..=90.0).contains(&el) {
                    return Err(Error::parse(
                        format!("pose csv line {}", index + 1),
                        format!("angles out of range: {az}, {el}"),
                    ));
                }
                out.push(euler_to_vector(az.to_radians(), el.to_radians()));
            }
            Err(_) if index == 0 && out.is_empty() => continue,
            Err(e) => {
                return Err(Error::parse(
                    format!("pose csv line {}", index + 1),
                    e.to_string(),
                ))
            }
        }
    }
    Ok(out)
}

/// Parses a JSON array of 3-vectors. Vectors must be unit length within
/// `1e-6`; they are renormalized exactly.
pub fn parse_pose_json(text: &str) -> Result<Vec<Viewpoint>> {
    let raw: Vec<[f64; 3]> = serde_json::from_str(text)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let v = Vector3::from(a);
            if !((v.norm() - 1.0).abs() <= 1e-6) {
                return Err(Error::parse(
                    format!("pose json entry {i}"),
                    format!("not a unit vector (norm {})", v.norm()),
                ));
            }
            Viewpoint::new(v)
        })
        .collect()
}

/// Dispatches on extension: `.json` is the vector form, anything else CSV.
pub fn read_pose_file(path: &Path) -> Result<Vec<Viewpoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => parse_pose_json(&text),
        _ => parse_pose_csv(&text),
    }
}
