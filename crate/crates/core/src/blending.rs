//! Pose-aware blending: per-pixel convex combinations of the warped
//! candidates, weighted by a local histogram of the index map whose window
//! grows with the distance to the pose.

use crate::mocap::QueryPose;
use crate::model::{BlendConfig, Skeleton};
use crate::mosaic::{IndexMap, WarpedCandidate};
use image::RgbImage;

/// Per-pixel candidate weights; each pixel's row sums to 1.
pub struct BlendWeights {
    pub canvas: u32,
    pub n: usize,
    /// Flat layout `[pixel * n + candidate]`.
    pub weights: Vec<f64>,
}

fn point_segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 < 1e-18 {
        0.0
    } else {
        (((p.0 - a.0) * ab.0 + (p.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0)
    };
    let q = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

/// Distance from a pixel to the nearest skeleton segment whose endpoints are
/// both visible in the query pose.
pub fn dist_to_pose(pixel: (f64, f64), qp: &QueryPose, s: &Skeleton) -> f64 {
    let p2d = &qp.pose2d;
    let mut best = f64::INFINITY;
    for &(a, b) in &s.edges {
        if !p2d.visible(a) || !p2d.visible(b) {
            continue;
        }
        best = best.min(point_segment_dist(pixel, p2d.joints[a], p2d.joints[b]));
    }
    if best.is_infinite() {
        // no visible segment at all: fall back to visible joints
        for (k, &j) in p2d.joints.iter().enumerate() {
            if p2d.visible(k) {
                best = best.min(((pixel.0 - j.0).powi(2) + (pixel.1 - j.1).powi(2)).sqrt());
            }
        }
    }
    best
}

/// Side length of the averaging window at a pixel: a clamped linear ramp in
/// the distance to the pose, snapped to the nearest odd integer.
pub fn region_size(pixel: (f64, f64), qp: &QueryPose, s: &Skeleton, cfg: &BlendConfig) -> u32 {
    let d = dist_to_pose(pixel, qp, s);
    let side = (cfg.s_min as f64 + cfg.alpha * d).clamp(cfg.s_min as f64, cfg.s_max as f64);
    let odd = 2 * ((side - 1.0) / 2.0).round() as u32 + 1;
    odd.clamp(cfg.s_min | 1, cfg.s_max | 1)
}

struct IndexSat {
    canvas: usize,
    // one summed-area table per candidate, (canvas+1)^2 each
    tables: Vec<Vec<u32>>,
}

impl IndexSat {
    fn build(im: &IndexMap, n: usize) -> Self {
        let c = im.canvas as usize;
        let w = c + 1;
        let mut tables = vec![vec![0u32; w * w]; n];
        for v in 0..c {
            for u in 0..c {
                let j = im.indices[v * c + u];
                for (t, table) in tables.iter_mut().enumerate() {
                    let here = u32::from(t == j);
                    table[(v + 1) * w + (u + 1)] =
                        here + table[v * w + (u + 1)] + table[(v + 1) * w + u] - table[v * w + u];
                }
            }
        }
        IndexSat { canvas: c, tables }
    }

    /// Count of candidate `j` inside the inclusive pixel rectangle.
    fn count(&self, j: usize, u0: usize, v0: usize, u1: usize, v1: usize) -> u32 {
        let w = self.canvas + 1;
        let t = &self.tables[j];
        t[(v1 + 1) * w + (u1 + 1)] + t[v0 * w + u0] - t[v0 * w + (u1 + 1)] - t[(v1 + 1) * w + u0]
    }
}

/// Blend weights: per pixel, the normalized histogram of index-map entries in
/// the square window centered there, clipped to the canvas.
pub fn blend_weights(
    im: &IndexMap,
    qp: &QueryPose,
    s: &Skeleton,
    cfg: &BlendConfig,
    n: usize,
) -> BlendWeights {
    let canvas = im.canvas;
    let c = canvas as usize;
    let sat = IndexSat::build(im, n);
    let mut weights = vec![0.0f64; c * c * n];
    for v in 0..c {
        for u in 0..c {
            let side = region_size((u as f64, v as f64), qp, s, cfg);
            let r = (side / 2) as i64;
            let u0 = (u as i64 - r).max(0) as usize;
            let v0 = (v as i64 - r).max(0) as usize;
            let u1 = (u as i64 + r).min(c as i64 - 1) as usize;
            let v1 = (v as i64 + r).min(c as i64 - 1) as usize;
            let area = ((u1 - u0 + 1) * (v1 - v0 + 1)) as f64;
            let base = (v * c + u) * n;
            for j in 0..n {
                weights[base + j] = sat.count(j, u0, v0, u1, v1) as f64 / area;
            }
        }
    }
    BlendWeights {
        canvas,
        n,
        weights,
    }
}

/// Naive per-pixel histogram; the correctness oracle for [`blend_weights`].
pub fn blend_weights_naive(
    im: &IndexMap,
    qp: &QueryPose,
    s: &Skeleton,
    cfg: &BlendConfig,
    n: usize,
) -> BlendWeights {
    let c = im.canvas as usize;
    let mut weights = vec![0.0f64; c * c * n];
    for v in 0..c {
        for u in 0..c {
            let side = region_size((u as f64, v as f64), qp, s, cfg);
            let r = (side / 2) as i64;
            let mut counts = vec![0u32; n];
            let mut total = 0u32;
            for vv in (v as i64 - r).max(0)..=(v as i64 + r).min(c as i64 - 1) {
                for uu in (u as i64 - r).max(0)..=(u as i64 + r).min(c as i64 - 1) {
                    counts[im.indices[vv as usize * c + uu as usize]] += 1;
                    total += 1;
                }
            }
            let base = (v * c + u) * n;
            for j in 0..n {
                weights[base + j] = counts[j] as f64 / total as f64;
            }
        }
    }
    BlendWeights {
        canvas: im.canvas,
        n,
        weights,
    }
}

/// Per-channel weighted sum of the candidates, rounded to 8 bit at
/// the end. Candidates carry edge-clamped values at invalid pixels.
pub fn blend(candidates: &[WarpedCandidate], weights: &BlendWeights) -> RgbImage {
    let canvas = weights.canvas;
    let n = weights.n;
    let mut out = RgbImage::new(canvas, canvas);
    for v in 0..canvas {
        for u in 0..canvas {
            let base = ((v * canvas + u) as usize) * n;
            let mut acc = [0.0f64; 3];
            for (j, cand) in candidates.iter().enumerate() {
                let w = weights.weights[base + j];
                if w == 0.0 {
                    continue;
                }
                let p = cand.image.get_pixel(u, v).0;
                for ch in 0..3 {
                    acc[ch] += w * p[ch] as f64;
                }
            }
            let px = out.get_pixel_mut(u, v);
            for ch in 0..3 {
                px.0[ch] = acc[ch].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Pose2D, Transform2D};
    use crate::retrieval::Match;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_skeleton() -> Skeleton {
        Skeleton {
            joints: vec!["a".into(), "b".into()],
            edges: vec![(0, 1)],
            left_right_pairs: vec![],
            torso_joints: vec![0],
            root: 0,
        }
    }

    fn qp(joints: Vec<(f64, f64)>) -> QueryPose {
        QueryPose {
            pose2d: Pose2D::all_visible(joints),
            crop: Transform2D::identity(),
        }
    }

    fn cfg() -> BlendConfig {
        BlendConfig {
            s_min: 3,
            s_max: 21,
            alpha: 0.2,
        }
    }

    fn constant_candidate(canvas: u32, gray: u8) -> WarpedCandidate {
        let pose = Pose2D::all_visible(vec![(1.0, 1.0), (3.0, 3.0)]);
        WarpedCandidate {
            image: RgbImage::from_pixel(canvas, canvas, image::Rgb([gray, gray, gray])),
            valid: vec![true; (canvas * canvas) as usize],
            aligned_pose: pose.clone(),
            info: Match {
                source_id: "x".into(),
                source_index: 0,
                aligned_pose: pose,
                transform: Transform2D::identity(),
                distance: 0.0,
                joint: 0,
            },
        }
    }

    #[test]
    fn on_limb_pixel_gets_minimum_region() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 10.0), (40.0, 10.0)]);
        assert_eq!(region_size((20.0, 10.0), &q, &s, &cfg()), 3);
    }

    #[test]
    fn far_pixel_saturates_at_maximum() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 10.0), (40.0, 10.0)]);
        // d = 200 >= (21-3)/0.2 = 90
        assert_eq!(region_size((20.0, 210.0), &q, &s, &cfg()), 21);
    }

    #[test]
    fn linear_ramp_midpoint() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 10.0), (40.0, 10.0)]);
        // d = 40 -> 3 + 0.2*40 = 11, already odd
        assert_eq!(region_size((20.0, 50.0), &q, &s, &cfg()), 11);
    }

    #[test]
    fn distance_is_to_segment_not_joints() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 0.0), (100.0, 0.0)]);
        // above the middle of the limb: 5 px from the segment, ~50 from joints
        let d = dist_to_pose((50.0, 5.0), &q, &s);
        assert!((d - 5.0).abs() < 1e-9);
    }

    #[test]
    fn constant_index_map_gives_one_hot_weights() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 0.0), (10.0, 10.0)]);
        let im = IndexMap {
            canvas: 16,
            indices: vec![1; 256],
        };
        let w = blend_weights(&im, &q, &s, &cfg(), 3);
        for px in 0..256usize {
            assert_eq!(w.weights[px * 3], 0.0);
            assert_eq!(w.weights[px * 3 + 1], 1.0);
            assert_eq!(w.weights[px * 3 + 2], 0.0);
        }
    }

    #[test]
    fn seam_straddling_region_splits_half_half() {
        // Vertical seam at u=8 on a 16x16 canvas; far from the pose the
        // window is wide, but we pin s_min=s_max=3 to keep it exact.
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 0.0), (1.0, 1.0)]);
        let c = BlendConfig {
            s_min: 3,
            s_max: 3,
            alpha: 0.0,
        };
        let indices: Vec<usize> = (0..256).map(|i| usize::from(i % 16 >= 8)).collect();
        let im = IndexMap {
            canvas: 16,
            indices,
        };
        let w = blend_weights(&im, &q, &s, &c, 2);
        // pixel (8, 8): window columns 7..=9, one column of 0s, two of 1s
        let base = (8 * 16 + 8) * 2;
        assert!((w.weights[base] - 1.0 / 3.0).abs() < 1e-12);
        // pixel centered between: column 7 -> window 6..=8 -> 2/3 zeros
        let base7 = (8 * 16 + 7) * 2;
        assert!((w.weights[base7] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sat_weights_match_naive_oracle() {
        let s = chain_skeleton();
        let q = qp(vec![(5.0, 5.0), (25.0, 25.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let canvas = 32u32;
        let n = 4;
        let im = IndexMap {
            canvas,
            indices: (0..canvas * canvas).map(|_| rng.gen_range(0..n)).collect(),
        };
        let fast = blend_weights(&im, &q, &s, &cfg(), n);
        let slow = blend_weights_naive(&im, &q, &s, &cfg(), n);
        for (a, b) in fast.weights.iter().zip(&slow.weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_always_sum_to_one() {
        let s = chain_skeleton();
        let q = qp(vec![(5.0, 5.0), (25.0, 25.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let canvas = 24u32;
        let n = 5;
        let im = IndexMap {
            canvas,
            indices: (0..canvas * canvas).map(|_| rng.gen_range(0..n)).collect(),
        };
        let w = blend_weights(&im, &q, &s, &cfg(), n);
        for px in 0..(canvas * canvas) as usize {
            let sum: f64 = w.weights[px * n..(px + 1) * n].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn one_hot_weights_reduce_to_mosaic() {
        let canvas = 8u32;
        let a = constant_candidate(canvas, 10);
        let b = constant_candidate(canvas, 240);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let im = IndexMap {
            canvas,
            indices: (0..64).map(|_| rng.gen_range(0..2)).collect(),
        };
        // one-hot weights straight from the index map
        let mut weights = vec![0.0; 64 * 2];
        for (px, &j) in im.indices.iter().enumerate() {
            weights[px * 2 + j] = 1.0;
        }
        let bw = BlendWeights {
            canvas,
            n: 2,
            weights,
        };
        let blended = blend(&[a, b], &bw);
        let mosaic = crate::mosaic::compose_mosaic(
            &[constant_candidate(canvas, 10), constant_candidate(canvas, 240)],
            &im,
        );
        assert_eq!(blended, mosaic);
    }

    #[test]
    fn half_half_blend_of_constants_averages() {
        let canvas = 4u32;
        let a = constant_candidate(canvas, 0);
        let b = constant_candidate(canvas, 200);
        let bw = BlendWeights {
            canvas,
            n: 2,
            weights: vec![0.5; 32],
        };
        let out = blend(&[a, b], &bw);
        assert!(out.pixels().all(|p| p.0 == [100, 100, 100]));
    }

    #[test]
    fn identical_candidates_blend_to_themselves() {
        let canvas = 4u32;
        let cands: Vec<WarpedCandidate> =
            (0..3).map(|_| constant_candidate(canvas, 77)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut weights = vec![0.0f64; 16 * 3];
        for px in 0..16 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..(1.0 - a));
            weights[px * 3] = a;
            weights[px * 3 + 1] = b;
            weights[px * 3 + 2] = 1.0 - a - b;
        }
        let bw = BlendWeights {
            canvas,
            n: 3,
            weights,
        };
        let out = blend(&cands, &bw);
        assert!(out.pixels().all(|p| p.0 == [77, 77, 77]));
    }

    #[test]
    fn seam_blend_is_monotone_between_colors() {
        let s = chain_skeleton();
        let q = qp(vec![(0.0, 0.0), (1.0, 1.0)]);
        let canvas = 32u32;
        let dark = constant_candidate(canvas, 0);
        let light = constant_candidate(canvas, 200);
        let indices: Vec<usize> = (0..canvas * canvas)
            .map(|i| usize::from(i % canvas >= 16))
            .collect();
        let im = IndexMap { canvas, indices };
        let w = blend_weights(&im, &q, &s, &cfg(), 2);
        let out = blend(&[dark, light], &w);
        let row = 16u32;
        let mut prev = 0u8;
        for u in 0..canvas {
            let v = out.get_pixel(u, row).0[0];
            assert!(v >= prev, "non-monotone at column {u}");
            prev = v;
        }
        assert_eq!(out.get_pixel(0, row).0[0], 0);
        assert_eq!(out.get_pixel(canvas - 1, row).0[0], 200);
    }
}
