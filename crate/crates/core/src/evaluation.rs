//! 3D and 2D pose error metrics and protocol runners.

use crate::model::{dist2, dist3, Pose2D, Pose3D, Skeleton};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("joint counts differ: {0} vs {1}")]
    JointCountMismatch(usize, usize),
    #[error("joints are collinear; alignment is underdetermined")]
    Degenerate,
    #[error("missing predictions for ids: {0:?}")]
    MissingPrediction(Vec<String>),
}

/// Alignment removed before measuring the 3D error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    /// Rotation + translation.
    Rigid,
    /// Rotation + translation + isotropic scale.
    Similarity,
}

/// Joint groups reported for the 2D metric, in column order.
pub const JOINT_GROUPS: [&str; 7] = [
    "feet", "knees", "hips", "hands", "elbows", "shoulders", "head",
];

/// Per-sample errors of one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    pub abs_mm: f64,
    pub rigid_mm: f64,
    pub similarity_mm: f64,
    pub px: Option<f64>,
    pub per_group_px: Option<[f64; 7]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub samples: Vec<SampleError>,
    pub joint_count: usize,
    pub mean_abs_mm: f64,
    pub mean_rigid_mm: f64,
    pub mean_similarity_mm: f64,
    pub mean_px: Option<f64>,
}

/// Mean per-joint error after translating both poses so their torso centers
/// sit at the origin. No rotation or scale correction.
pub fn mpjpe_abs(pred: &Pose3D, gt: &Pose3D, s: &Skeleton) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::JointCountMismatch(pred.len(), gt.len()));
    }
    let cp = pred.torso_center(&s.torso_joints);
    let cg = gt.torso_center(&s.torso_joints);
    let sum: f64 = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(&p, &g)| {
            dist3(
                (p.0 - cp.0, p.1 - cp.1, p.2 - cp.2),
                (g.0 - cg.0, g.1 - cg.1, g.2 - cg.2),
            )
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

fn centroid(p: &Pose3D) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for &(x, y, z) in &p.joints {
        c += Vector3::new(x, y, z);
    }
    c / p.len() as f64
}

/// Mean per-joint error after closed-form least-squares alignment of `pred`
/// onto `gt`. Reflections are excluded.
pub fn mpjpe_aligned(pred: &Pose3D, gt: &Pose3D, mode: AlignMode) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::JointCountMismatch(pred.len(), gt.len()));
    }
    let n = pred.len();
    let cp = centroid(pred);
    let cg = centroid(gt);
    let mut h = Matrix3::zeros();
    let mut var_pred = 0.0;
    for (&p, &g) in pred.joints.iter().zip(&gt.joints) {
        let x = Vector3::new(p.0, p.1, p.2) - cp;
        let y = Vector3::new(g.0, g.1, g.2) - cg;
        h += x * y.transpose();
        var_pred += x.norm_squared();
    }
    if var_pred < 1e-12 {
        return Err(EvalError::Degenerate);
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // rank < 2 means the joints are collinear and rotation is underdetermined
    if svd.singular_values[1] < 1e-9 * svd.singular_values[0].max(1e-300) {
        return Err(EvalError::Degenerate);
    }
    let d = (v_t.transpose() * u.transpose()).determinant();
    let sign = if d < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rot = v_t.transpose() * correction * u.transpose();
    let scale = match mode {
        AlignMode::Rigid => 1.0,
        AlignMode::Similarity => {
            let trace = svd.singular_values[0] + svd.singular_values[1]
                + sign * svd.singular_values[2];
            trace / var_pred
        }
    };
    let sum: f64 = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(&p, &g)| {
            let x = Vector3::new(p.0, p.1, p.2) - cp;
            let y = Vector3::new(g.0, g.1, g.2) - cg;
            (scale * (rot * x) - y).norm()
        })
        .sum();
    Ok(sum / n as f64)
}

/// Mean 2D error in pixels over all joints.
pub fn pixel_error(pred: &Pose2D, gt: &Pose2D) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::JointCountMismatch(pred.len(), gt.len()));
    }
    let sum: f64 = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(&p, &g)| dist2(p, g))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Per-group 2D error for the default 13-joint layout: feet, knees, hips,
/// hands, elbows, shoulders, head (see [`JOINT_GROUPS`]).
pub fn pixel_error_grouped(pred: &Pose2D, gt: &Pose2D) -> Result<[f64; 7], EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::JointCountMismatch(pred.len(), gt.len()));
    }
    let groups: [&[usize]; 7] = [&[11, 12], &[9, 10], &[7, 8], &[5, 6], &[3, 4], &[1, 2], &[0]];
    let mut out = [0.0; 7];
    for (gi, members) in groups.iter().enumerate() {
        let sum: f64 = members
            .iter()
            .map(|&k| dist2(pred.joints[k], gt.joints[k]))
            .sum();
        out[gi] = sum / members.len() as f64;
    }
    Ok(out)
}

/// One prediction/ground-truth pairing handed to [`run_protocol`].
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: String,
    pub pose3d: Pose3D,
    pub pose2d: Option<Pose2D>,
}

/// Evaluate every `stride`-th ground-truth sample against its prediction and
/// aggregate the 3D (absolute, rigid, similarity) and 2D errors.
pub fn run_protocol(
    predictions: &[EvalSample],
    ground_truth: &[EvalSample],
    stride: usize,
    label: &str,
    s: &Skeleton,
) -> Result<EvalReport, EvalError> {
    let stride = stride.max(1);
    let selected: Vec<&EvalSample> = ground_truth.iter().step_by(stride).collect();
    let missing: Vec<String> = selected
        .iter()
        .filter(|gt| !predictions.iter().any(|p| p.id == gt.id))
        .map(|gt| gt.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    let mut samples = Vec::with_capacity(selected.len());
    for gt in selected {
        let pred = predictions.iter().find(|p| p.id == gt.id).unwrap();
        let abs_mm = mpjpe_abs(&pred.pose3d, &gt.pose3d, s)?;
        let rigid_mm = mpjpe_aligned(&pred.pose3d, &gt.pose3d, AlignMode::Rigid)?;
        let similarity_mm = mpjpe_aligned(&pred.pose3d, &gt.pose3d, AlignMode::Similarity)?;
        let (px, per_group_px) = match (&pred.pose2d, &gt.pose2d) {
            (Some(p2), Some(g2)) => {
                let grouped = if p2.len() == 13 {
                    Some(pixel_error_grouped(p2, g2)?)
                } else {
                    None
                };
                (Some(pixel_error(p2, g2)?), grouped)
            }
            _ => (None, None),
        };
        samples.push(SampleError {
            id: gt.id.clone(),
            abs_mm,
            rigid_mm,
            similarity_mm,
            px,
            per_group_px,
        });
    }
    let count = samples.len().max(1) as f64;
    let mean = |f: &dyn Fn(&SampleError) -> f64| samples.iter().map(|x| f(x)).sum::<f64>() / count;
    let px_vals: Vec<f64> = samples.iter().filter_map(|x| x.px).collect();
    Ok(EvalReport {
        protocol: label.to_string(),
        joint_count: s.len(),
        mean_abs_mm: mean(&|x| x.abs_mm),
        mean_rigid_mm: mean(&|x| x.rigid_mm),
        mean_similarity_mm: mean(&|x| x.similarity_mm),
        mean_px: if px_vals.is_empty() {
            None
        } else {
            Some(px_vals.iter().sum::<f64>() / px_vals.len() as f64)
        },
        samples,
    })
}
