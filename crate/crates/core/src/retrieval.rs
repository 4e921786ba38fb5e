//! Per-joint retrieval of locally matching annotated poses: two-point
//! similarity alignment, proximity-weighted pose distance and the argmin
//! search over the corpus.

use crate::model::{dist2, farthest_connected_joint, AnnotatedImage, Pose2D, Skeleton, Transform2D};
use rayon::prelude::*;
use thiserror::Error;

/// Coincident-joint floor for the inverse-distance weights, in pixels.
const WEIGHT_DIST_FLOOR: f64 = 1.0;

/// Segments shorter than this cannot anchor an alignment.
const SEGMENT_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("alignment segment shorter than {SEGMENT_EPS} px")]
    DegenerateSegment,
    #[error("no visible joint besides {0}")]
    AllOccluded(usize),
    #[error("joint {0} not visible in both poses")]
    JointNotVisible(usize),
    #[error("no corpus candidate satisfies the preconditions for joint {0}")]
    NoCandidate(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Normalized inverse-distance weights of a pose's joints relative to a query
/// joint. Zero at the query joint itself and at occluded joints; sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointWeights {
    pub weights: Vec<f64>,
}

/// One retrieval result: the corpus entry that best matches the query around
/// `joint`, with the transform that aligned it.
#[derive(Debug, Clone)]
pub struct Match {
    pub source_id: String,
    /// Index of the winning entry in the corpus it was retrieved from.
    pub source_index: usize,
    pub aligned_pose: Pose2D,
    pub transform: Transform2D,
    pub distance: f64,
    pub joint: usize,
}

/// The unique similarity transform with `t(q_j) = p_j` and `t(q_i) = p_i`.
pub fn alignment_transform(
    p: &Pose2D,
    q: &Pose2D,
    j: usize,
    i: usize,
) -> Result<Transform2D, RetrievalError> {
    let (pj, pi) = (p.joints[j], p.joints[i]);
    let (qj, qi) = (q.joints[j], q.joints[i]);
    let dq = (qi.0 - qj.0, qi.1 - qj.1);
    let dp = (pi.0 - pj.0, pi.1 - pj.1);
    let qlen = (dq.0 * dq.0 + dq.1 * dq.1).sqrt();
    let plen = (dp.0 * dp.0 + dp.1 * dp.1).sqrt();
    if qlen < SEGMENT_EPS || plen < SEGMENT_EPS {
        return Err(RetrievalError::DegenerateSegment);
    }
    // Complex ratio a = dp / dq gives rotation+scale; b = p_j - a*q_j.
    let denom = qlen * qlen;
    let a_re = (dp.0 * dq.0 + dp.1 * dq.1) / denom;
    let a_im = (dp.1 * dq.0 - dp.0 * dq.1) / denom;
    let scale = (a_re * a_re + a_im * a_im).sqrt();
    let rotation = a_im.atan2(a_re);
    let tx = pj.0 - (a_re * qj.0 - a_im * qj.1);
    let ty = pj.1 - (a_im * qj.0 + a_re * qj.1);
    Ok(Transform2D {
        rotation,
        scale,
        translation: (tx, ty),
    })
}

fn weights_masked(p: &Pose2D, j: usize, included: &[bool]) -> Result<JointWeights, RetrievalError> {
    let n = p.len();
    let mut weights = vec![0.0; n];
    let mut sum = 0.0;
    for k in 0..n {
        if k == j || !included[k] || !p.visible(k) {
            continue;
        }
        let w = 1.0 / dist2(p.joints[k], p.joints[j]).max(WEIGHT_DIST_FLOOR);
        weights[k] = w;
        sum += w;
    }
    if sum == 0.0 {
        return Err(RetrievalError::AllOccluded(j));
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(JointWeights { weights })
}

/// Inverse-distance joint weights relative to query joint `j`.
pub fn joint_weights(p: &Pose2D, j: usize) -> Result<JointWeights, RetrievalError> {
    let all = vec![true; p.len()];
    weights_masked(p, j, &all)
}

/// Proximity-weighted distance between `p` and `q` conditioned on joint `j`:
/// aligns `q` so its joint `j` and the farthest connected neighbor of `j`
/// land on the query's, then sums weighted per-joint residuals over joints
/// visible in both poses. Returns the distance and the alignment transform.
pub fn conditioned_distance(
    p: &Pose2D,
    q: &Pose2D,
    j: usize,
    s: &Skeleton,
) -> Result<(f64, Transform2D), RetrievalError> {
    if !p.visible(j) || !q.visible(j) {
        return Err(RetrievalError::JointNotVisible(j));
    }
    let i = farthest_connected_joint(s, p, j)
        .map_err(|_| RetrievalError::JointNotVisible(j))?;
    if !q.visible(i) {
        return Err(RetrievalError::JointNotVisible(i));
    }
    let t = alignment_transform(p, q, j, i)?;
    let mutual: Vec<bool> = (0..p.len())
        .map(|k| p.visible(k) && q.visible(k))
        .collect();
    let wp = weights_masked(p, j, &mutual)?;
    let wq = weights_masked(q, j, &mutual)?;
    let mut dist = 0.0;
    for (k, &inc) in mutual.iter().enumerate() {
        if !inc || k == j {
            continue;
        }
        let qk = t.apply(q.joints[k]);
        dist += (wp.weights[k] + wq.weights[k]) * dist2(p.joints[k], qk);
    }
    Ok((dist, t))
}

fn best_for_joint(
    pose: &Pose2D,
    corpus: &[AnnotatedImage],
    s: &Skeleton,
    j: usize,
) -> Result<Match, RetrievalError> {
    let scored: Vec<Option<(f64, Transform2D)>> = corpus
        .par_iter()
        .map(|entry| conditioned_distance(pose, &entry.pose, j, s).ok())
        .collect();
    // Sequential argmin keeps the smallest-index tie-break deterministic.
    let mut best: Option<(usize, f64, Transform2D)> = None;
    for (idx, res) in scored.iter().enumerate() {
        if let Some((d, t)) = res {
            match best {
                Some((_, bd, _)) if *d >= bd => {}
                _ => best = Some((idx, *d, *t)),
            }
        }
    }
    let (idx, distance, transform) = best.ok_or(RetrievalError::NoCandidate(j))?;
    let entry = &corpus[idx];
    Ok(Match {
        source_id: entry.id.clone(),
        source_index: idx,
        aligned_pose: transform.apply_pose(&entry.pose),
        transform,
        distance,
        joint: j,
    })
}

/// Brute-force retrieval: for every visible query joint, the corpus entry
/// minimizing the conditioned distance. This is the reference implementation.
pub fn retrieve_matches(
    pose: &Pose2D,
    corpus: &[AnnotatedImage],
    s: &Skeleton,
) -> Result<Vec<Match>, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    (0..pose.len())
        .filter(|&j| pose.visible(j))
        .map(|j| best_for_joint(pose, corpus, s, j))
        .collect()
}

/// Immutable retrieval accelerator over a corpus. Queries return exactly the
/// matches of [`retrieve_matches`]; the scan stays exact and is parallelized
/// over corpus entries.
pub struct RetrievalIndex<'a> {
    corpus: &'a [AnnotatedImage],
}

impl<'a> RetrievalIndex<'a> {
    pub fn build(corpus: &'a [AnnotatedImage]) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        Ok(RetrievalIndex { corpus })
    }

    pub fn query(&self, pose: &Pose2D, s: &Skeleton) -> Result<Vec<Match>, RetrievalError> {
        retrieve_matches(pose, self.corpus, s)
    }

    pub fn corpus(&self) -> &'a [AnnotatedImage] {
        self.corpus
    }
}
