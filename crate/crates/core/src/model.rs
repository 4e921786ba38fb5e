//! Shared domain types: skeleton, 2D/3D poses, cameras, similarity transforms
//! and pipeline configuration.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("every tree neighbor of joint {0} is occluded")]
    NoVisibleNeighbor(usize),
}

/// Named joint set with kinematic tree edges, left/right pairing and the
/// torso subset used for centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<String>,
    /// (parent, child) joint-index pairs; must form a single tree.
    pub edges: Vec<(usize, usize)>,
    pub left_right_pairs: Vec<(usize, usize)>,
    pub torso_joints: Vec<usize>,
    pub root: usize,
}

impl Skeleton {
    /// The default 13-joint skeleton: head, shoulders, elbows, wrists, hips,
    /// knees, ankles.
    pub fn default_13() -> Self {
        let joints = [
            "head",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_hip",
            "right_hip",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Skeleton {
            joints,
            edges: vec![
                (0, 1),
                (0, 2),
                (1, 3),
                (3, 5),
                (2, 4),
                (4, 6),
                (1, 7),
                (2, 8),
                (7, 9),
                (9, 11),
                (8, 10),
                (10, 12),
            ],
            left_right_pairs: vec![(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12)],
            torso_joints: vec![1, 2, 7, 8],
            root: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Tree neighbors of joint `j`, in ascending index order.
    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == j {
                    Some(b)
                } else if b == j {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Structural checks on a skeleton. Returns one message per violated
/// invariant; an empty list means the skeleton is well formed.
pub fn validate_skeleton(s: &Skeleton) -> Vec<String> {
    let n = s.len();
    let mut violations = Vec::new();
    if n == 0 {
        violations.push("skeleton has no joints".to_string());
        return violations;
    }
    for &(a, b) in &s.edges {
        if a >= n || b >= n {
            violations.push("edge index out of range".to_string());
            break;
        }
    }
    // Tree check: n-1 edges, all indices valid, connected.
    if s.edges.len() != n - 1 {
        violations.push("edges do not form a tree".to_string());
    } else if s.edges.iter().all(|&(a, b)| a < n && b < n) {
        let mut seen = vec![false; n];
        let mut stack = vec![s.root.min(n - 1)];
        seen[s.root.min(n - 1)] = true;
        while let Some(j) = stack.pop() {
            for k in s.neighbors(j) {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        if seen.iter().any(|&v| !v) {
            violations.push("edges do not form a tree".to_string());
        }
    }
    if s.root >= n {
        violations.push("index out of range".to_string());
    }
    let mut oob = false;
    let mut left_seen = std::collections::HashSet::new();
    let mut right_seen = std::collections::HashSet::new();
    for &(l, r) in &s.left_right_pairs {
        if l >= n || r >= n {
            oob = true;
        } else {
            if l == r || !left_seen.insert(l) || !right_seen.insert(r) {
                violations.push("left/right pairs are not disjoint".to_string());
            }
            if left_seen.contains(&r) || right_seen.contains(&l) {
                violations.push("left/right pairs are not symmetric".to_string());
            }
        }
    }
    if s.torso_joints.iter().any(|&t| t >= n) {
        oob = true;
    }
    if oob {
        violations.push("index out of range".to_string());
    }
    violations
}

/// 2D pose in pixels with per-joint visibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub joints: Vec<(f64, f64)>,
    pub visibility: Vec<bool>,
}

impl Pose2D {
    pub fn all_visible(joints: Vec<(f64, f64)>) -> Self {
        let visibility = vec![true; joints.len()];
        Pose2D { joints, visibility }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn visible(&self, k: usize) -> bool {
        self.visibility[k]
    }

    /// Indices of joints visible in both poses.
    pub fn mutually_visible(&self, other: &Pose2D) -> Vec<usize> {
        (0..self.len().min(other.len()))
            .filter(|&k| self.visible(k) && other.visible(k))
            .collect()
    }
}

pub fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

pub fn dist3(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt()
}

/// 3D pose in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub joints: Vec<(f64, f64, f64)>,
}

impl Pose3D {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Mean of the torso joint coordinates.
    pub fn torso_center(&self, torso: &[usize]) -> (f64, f64, f64) {
        let mut c = (0.0, 0.0, 0.0);
        for &t in torso {
            let j = self.joints[t];
            c.0 += j.0;
            c.1 += j.1;
            c.2 += j.2;
        }
        let n = torso.len() as f64;
        (c.0 / n, c.1 / n, c.2 / n)
    }
}

/// Virtual camera placement: look-at-torso with azimuth/elevation in degrees,
/// a distance along the optical axis in mm and a focal length in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub focal: f64,
}

/// A corpus entry: image plus its annotated 2D pose.
#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    pub id: String,
    pub pixels: RgbImage,
    pub pose: Pose2D,
}

/// Similarity transform: rotation, isotropic scale and translation.
/// Applies as `scale * R(rotation) * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    pub rotation: f64,
    pub scale: f64,
    pub translation: (f64, f64),
}

impl Transform2D {
    pub fn identity() -> Self {
        Transform2D {
            rotation: 0.0,
            scale: 1.0,
            translation: (0.0, 0.0),
        }
    }

    pub fn scale_translate(scale: f64, translation: (f64, f64)) -> Self {
        Transform2D {
            rotation: 0.0,
            scale,
            translation,
        }
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (
            self.scale * (c * p.0 - s * p.1) + self.translation.0,
            self.scale * (s * p.0 + c * p.1) + self.translation.1,
        )
    }

    pub fn apply_pose(&self, p: &Pose2D) -> Pose2D {
        Pose2D {
            joints: p.joints.iter().map(|&j| self.apply(j)).collect(),
            visibility: p.visibility.clone(),
        }
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform2D) -> Transform2D {
        Transform2D {
            rotation: self.rotation + other.rotation,
            scale: self.scale * other.scale,
            translation: {
                let t = self.apply(other.translation);
                (t.0, t.1)
            },
        }
    }

    pub fn inverse(&self) -> Transform2D {
        let inv_scale = 1.0 / self.scale;
        let rot = -self.rotation;
        let (s, c) = rot.sin_cos();
        let tx = -inv_scale * (c * self.translation.0 - s * self.translation.1);
        let ty = -inv_scale * (s * self.translation.0 + c * self.translation.1);
        Transform2D {
            rotation: rot,
            scale: inv_scale,
            translation: (tx, ty),
        }
    }
}

/// Pose-aware blending parameters: the square averaging region grows linearly
/// from `s_min` to `s_max` with slope `alpha` in the distance to the pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    pub s_min: u32,
    pub s_max: u32,
    pub alpha: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            s_min: 3,
            s_max: 21,
            alpha: 0.2,
        }
    }
}

/// Synthesis parameters shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Canvas side length in pixels.
    pub canvas: u32,
    /// Probability-map bandwidth in pixels.
    pub sigma: f64,
    pub blend: BlendConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            canvas: 220,
            sigma: 15.0,
            blend: BlendConfig::default(),
            seed: 0,
        }
    }
}

/// Stable per-item seed derivation (FNV-1a over the global seed and a
/// label), so work items get independent streams regardless of worker count.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in seed.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Among the visible tree neighbors of `j`, the one farthest from `j` in `p`.
/// Ties break toward the smallest joint index.
pub fn farthest_connected_joint(s: &Skeleton, p: &Pose2D, j: usize) -> Result<usize, ModelError> {
    let mut best: Option<(usize, f64)> = None;
    for k in s.neighbors(j) {
        if !p.visible(k) {
            continue;
        }
        let d = dist2(p.joints[k], p.joints[j]);
        match best {
            Some((_, bd)) if d <= bd => {}
            _ => best = Some((k, d)),
        }
    }
    best.map(|(k, _)| k).ok_or(ModelError::NoVisibleNeighbor(j))
}
