//! Pose-space quantization: seeded k-means over oriented 3D poses, centroid
//! decoding from class scores, and baseline scorers standing in for a
//! learned classifier.

use crate::model::{dist2, dist3, Pose2D, Pose3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("requested {k} clusters but only {n} poses")]
    TooFewPoses { k: usize, n: usize },
}

/// One pose class: the arithmetic mean of its members in 3D (mm) and on the
/// 2D canvas (px).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseClass {
    pub id: usize,
    pub centroid3d: Pose3D,
    pub centroid2d: Pose2D,
    pub member_count: usize,
}

/// Non-negative class scores, one per pose class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores(pub Vec<f64>);

/// Result of clustering a pose set.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub classes: Vec<PoseClass>,
    pub assignment: Vec<usize>,
    /// Final k-means objective (sum of squared distances, mm^2).
    pub objective: f64,
    /// Objective after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &Pose3D, b: &Pose3D) -> f64 {
    a.joints
        .iter()
        .zip(&b.joints)
        .map(|(&x, &y)| {
            let d = (x.0 - y.0, x.1 - y.1, x.2 - y.2);
            d.0 * d.0 + d.1 * d.1 + d.2 * d.2
        })
        .sum()
}

fn kmeanspp_init(poses: &[Pose3D], k: usize, rng: &mut ChaCha8Rng) -> Vec<Pose3D> {
    let n = poses.len();
    let first = rng.gen_range(0..n);
    let mut centers = vec![poses[first].clone()];
    let mut d2: Vec<f64> = poses.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a center; pick uniformly
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        };
        let c = poses[next].clone();
        for (i, p) in poses.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest_center(p: &Pose3D, centers: &[Pose3D]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Seeded k-means over flattened 3D joint coordinates with k-means++ init.
/// Runs at most 100 Lloyd iterations or until the relative objective change
/// drops below 1e-4. Deterministic for a given seed regardless of thread
/// count: assignments are independent per pose and sums accumulate in pose
/// order.
pub fn cluster_poses(
    poses3d: &[Pose3D],
    poses2d: &[Pose2D],
    k: usize,
    seed: u64,
) -> Result<ClusterResult, ClusterError> {
    let n = poses3d.len();
    if k == 0 || k > n {
        return Err(ClusterError::TooFewPoses { k, n });
    }
    let n_joints = poses3d[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp_init(poses3d, k, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut objective = f64::INFINITY;
    let mut history = Vec::new();

    for _iter in 0..100 {
        let assigned: Vec<(usize, f64)> = poses3d
            .par_iter()
            .map(|p| nearest_center(p, &centers))
            .collect();
        let new_objective: f64 = assigned.iter().map(|&(_, d)| d).sum();
        for (i, &(c, _)) in assigned.iter().enumerate() {
            assignment[i] = c;
        }
        history.push(new_objective);

        // centroid update, fixed order
        let mut sums = vec![vec![(0.0, 0.0, 0.0); n_joints]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in poses3d.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (jt, &(x, y, z)) in p.joints.iter().enumerate() {
                let s = &mut sums[c][jt];
                s.0 += x;
                s.1 += y;
                s.2 += z;
            }
        }
        // empty-cluster repair: re-seed from the point farthest from its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = assigned
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c] = poses3d[far].clone();
            } else {
                let inv = 1.0 / counts[c] as f64;
                centers[c] = Pose3D {
                    joints: sums[c]
                        .iter()
                        .map(|&(x, y, z)| (x * inv, y * inv, z * inv))
                        .collect(),
                };
            }
        }

        let done = objective.is_finite()
            && (objective - new_objective).abs() <= 1e-4 * objective.max(f64::MIN_POSITIVE);
        objective = new_objective;
        if done {
            break;
        }
    }

    // final classes from the last assignment
    let mut counts = vec![0usize; k];
    let mut sums3 = vec![vec![(0.0, 0.0, 0.0); n_joints]; k];
    let mut sums2 = vec![vec![(0.0, 0.0); n_joints]; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (jt, &(x, y, z)) in poses3d[i].joints.iter().enumerate() {
            sums3[c][jt].0 += x;
            sums3[c][jt].1 += y;
            sums3[c][jt].2 += z;
        }
        for (jt, &(x, y)) in poses2d[i].joints.iter().enumerate() {
            sums2[c][jt].0 += x;
            sums2[c][jt].1 += y;
        }
    }
    let classes = (0..k)
        .map(|c| {
            let inv = 1.0 / counts[c].max(1) as f64;
            PoseClass {
                id: c,
                centroid3d: Pose3D {
                    joints: sums3[c]
                        .iter()
                        .map(|&(x, y, z)| (x * inv, y * inv, z * inv))
                        .collect(),
                },
                centroid2d: Pose2D::all_visible(
                    sums2[c].iter().map(|&(x, y)| (x * inv, y * inv)).collect(),
                ),
                member_count: counts[c],
            }
        })
        .collect();
    Ok(ClusterResult {
        classes,
        assignment,
        objective,
        objective_history: history,
    })
}

/// Centroids of the top-scoring class; ties break toward the smallest id.
pub fn decode_top_class(scores: &ClassScores, classes: &[PoseClass]) -> (Pose3D, Pose2D) {
    let mut best = 0usize;
    for (c, &s) in scores.0.iter().enumerate().skip(1) {
        if s > scores.0[best] {
            best = c;
        }
    }
    (
        classes[best].centroid3d.clone(),
        classes[best].centroid2d.clone(),
    )
}

/// The `k` best classes in non-increasing score order, stable on ties.
pub fn top_k_hypotheses<'a>(
    scores: &ClassScores,
    classes: &'a [PoseClass],
    k: usize,
) -> Vec<(usize, f64, &'a PoseClass)> {
    let mut order: Vec<usize> = (0..scores.0.len()).collect();
    order.sort_by(|&a, &b| scores.0[b].partial_cmp(&scores.0[a]).unwrap().then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|c| (c, scores.0[c], &classes[c]))
        .collect()
}

/// Gaussian scores from the mean per-joint 3D distance to each class
/// centroid; a stand-in for a learned classifier.
pub fn baseline_scorer_3d(pose: &Pose3D, classes: &[PoseClass], tau: f64) -> ClassScores {
    ClassScores(
        classes
            .iter()
            .map(|c| {
                let d: f64 = pose
                    .joints
                    .iter()
                    .zip(&c.centroid3d.joints)
                    .map(|(&a, &b)| dist3(a, b))
                    .sum::<f64>()
                    / pose.len() as f64;
                (-d * d / (tau * tau)).exp()
            })
            .collect(),
    )
}

/// 2D variant of [`baseline_scorer_3d`], over canvas-pixel centroids.
pub fn baseline_scorer_2d(pose: &Pose2D, classes: &[PoseClass], tau: f64) -> ClassScores {
    ClassScores(
        classes
            .iter()
            .map(|c| {
                let d: f64 = pose
                    .joints
                    .iter()
                    .zip(&c.centroid2d.joints)
                    .map(|(&a, &b)| dist2(a, b))
                    .sum::<f64>()
                    / pose.len() as f64;
                (-d * d / (tau * tau)).exp()
            })
            .collect(),
    )
}
