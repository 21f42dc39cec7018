//! Global alignment of predicted viewpoints onto ground truth.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RotationMatrix, Viewpoint};

/// Map applied to predictions before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlignmentTransform {
    Rotation { rotation: RotationMatrix },
    /// `normalize(W·p + b)`.
    Linear { weights: [[f64; 3]; 3], bias: [f64; 3] },
}

impl AlignmentTransform {
    pub fn identity() -> Self {
        Self::Rotation {
            rotation: RotationMatrix::identity(),
        }
    }

    pub fn apply(&self, v: &Viewpoint) -> Viewpoint {
        match self {
            Self::Rotation { rotation } => Viewpoint::new(rotation.apply(v.as_vector())).unwrap_or(*v),
            Self::Linear { weights, bias } => {
                let w = Matrix3::from_fn(|r, c| weights[r][c]);
                // A map that sends p to the origin leaves nothing to
                // renormalize; the prediction passes through unchanged.
                Viewpoint::new(w * v.as_vector() + Vector3::from(*bias)).unwrap_or(*v)
            }
        }
    }

    /// Operator (spectral) norm of the linear part.
    pub fn operator_norm(&self) -> f64 {
        match self {
            Self::Rotation { .. } => 1.0,
            Self::Linear { weights, .. } => Matrix3::from_fn(|r, c| weights[r][c])
                .singular_values()
                .max(),
        }
    }
}

fn check_lengths(preds: &[Viewpoint], gts: &[Viewpoint], min: usize) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch(preds.len(), gts.len()));
    }
    if preds.len() < min {
        return Err(Error::invalid(format!("alignment needs at least {min} pairs, got {}", preds.len())));
    }
    Ok(())
}

/// The proper rotation minimizing `Σ ‖R·pᵢ − gᵢ‖²` (Kabsch, with the
/// determinant correction that excludes reflections).
pub fn procrustes_align(preds: &[Viewpoint], gts: &[Viewpoint]) -> Result<AlignmentTransform> {
    check_lengths(preds, gts, 3)?;
    let h: Matrix3<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| p.as_vector() * g.as_vector().transpose())
        .sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested u"), svd.v_t.expect("requested v_t"));
    let s = svd.singular_values;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if !(s[order[0]] > 0.0) || s[order[1]] <= 1e-9 * s[order[0]] {
        return Err(Error::DegenerateCloud);
    }
    // H = U S Vᵀ and R = V D Uᵀ, with D flipping the weakest direction when
    // V Uᵀ would be a reflection.
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let mut d = Matrix3::identity();
    if det < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = RotationMatrix::new(v * d * u.transpose())?;
    Ok(AlignmentTransform::Rotation { rotation })
}

/// Ridge parameter on `W`; the bias is not penalized.
pub const LINEAR_RIDGE: f64 = 1e-6;

/// Least-squares `W·p + b ≈ g` with a small ridge on `W`.
pub fn linear_align(preds: &[Viewpoint], gts: &[Viewpoint]) -> Result<AlignmentTransform> {
    check_lengths(preds, gts, 4)?;
    let mut a = Matrix4::zeros();
    let mut rhs = [Vector4::zeros(); 3];
    for (p, g) in preds.iter().zip(gts) {
        let x = Vector4::new(p.as_vector().x, p.as_vector().y, p.as_vector().z, 1.0);
        a += x * x.transpose();
        for (k, r) in rhs.iter_mut().enumerate() {
            *r += x * g.as_vector()[k];
        }
    }
    for i in 0..3 {
        a[(i, i)] += LINEAR_RIDGE;
    }
    // Positive definite for any input: the Schur complement of the bias
    // block is at least the ridge.
    let chol = a.cholesky().ok_or_else(|| Error::invalid("linear alignment normal equations are not solvable"))?;
    let mut weights = [[0.0; 3]; 3];
    let mut bias = [0.0; 3];
    for k in 0..3 {
        let theta = chol.solve(&rhs[k]);
        weights[k] = [theta[0], theta[1], theta[2]];
        bias[k] = theta[3];
    }
    if weights.iter().flatten().chain(&bias).any(|x| !x.is_finite()) {
        return Err(Error::invalid("linear alignment produced non-finite weights"));
    }
    Ok(AlignmentTransform::Linear { weights, bias })
}
