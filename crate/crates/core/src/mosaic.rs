//! Mosaic construction: warp retrieved images onto the canvas, rasterize
//! per-candidate probability maps over a Delaunay triangulation of the
//! aligned pose, take the per-pixel argmax and copy-paste the winners.

use crate::mocap::QueryPose;
use crate::model::{dist2, AnnotatedImage, Pose2D};
use crate::retrieval::Match;
use image::RgbImage;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MosaicError {
    #[error("fewer than 3 points or all points collinear")]
    Degenerate,
}

/// A corpus image resampled onto the canvas by a match's alignment transform.
/// `image` holds edge-clamped values everywhere; `valid` marks pixels whose
/// bilinear taps were all in bounds.
pub struct WarpedCandidate {
    pub image: RgbImage,
    pub valid: Vec<bool>,
    pub aligned_pose: Pose2D,
    pub info: Match,
}

/// Per-pixel candidate affinity in [0, 1].
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    pub canvas: u32,
    pub values: Vec<f64>,
}

/// Per-pixel winning candidate index (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    pub canvas: u32,
    pub indices: Vec<usize>,
}

fn bilinear_clamped(src: &RgbImage, x: f64, y: f64) -> ([f64; 3], bool) {
    let (w, h) = (src.width() as i64, src.height() as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let exact_x = fx < 1e-9;
    let exact_y = fy < 1e-9;
    let xs = if exact_x { [x0, x0] } else { [x0, x0 + 1] };
    let ys = if exact_y { [y0, y0] } else { [y0, y0 + 1] };
    let valid = xs[0] >= 0 && xs[1] < w && ys[0] >= 0 && ys[1] < h;
    let tap = |xi: i64, yi: i64| {
        let xi = xi.clamp(0, w - 1) as u32;
        let yi = yi.clamp(0, h - 1) as u32;
        let p = src.get_pixel(xi, yi).0;
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let p00 = tap(xs[0], ys[0]);
    let p10 = tap(xs[1], ys[0]);
    let p01 = tap(xs[0], ys[1]);
    let p11 = tap(xs[1], ys[1]);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    (out, valid)
}

/// Inverse-mapping bilinear resample of a source image onto the canvas.
pub fn warp_image(src: &AnnotatedImage, info: Match, canvas: u32) -> WarpedCandidate {
    let inv = info.transform.inverse();
    let mut image = RgbImage::new(canvas, canvas);
    let mut valid = vec![false; (canvas * canvas) as usize];
    for v in 0..canvas {
        for u in 0..canvas {
            let (sx, sy) = inv.apply((u as f64, v as f64));
            let (rgb, ok) = bilinear_clamped(&src.pixels, sx, sy);
            let px = image.get_pixel_mut(u, v);
            for c in 0..3 {
                px.0[c] = rgb[c].round().clamp(0.0, 255.0) as u8;
            }
            valid[(v * canvas + u) as usize] = ok;
        }
    }
    WarpedCandidate {
        image,
        valid,
        aligned_pose: info.aligned_pose.clone(),
        info,
    }
}

fn orient2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Does the circumcircle of CCW triangle (a, b, c) strictly contain p?
fn in_circumcircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), p: (f64, f64), tol: f64) -> bool {
    let (ax, ay) = (a.0 - p.0, a.1 - p.1);
    let (bx, by) = (b.0 - p.0, b.1 - p.1);
    let (cx, cy) = (c.0 - p.0, c.1 - p.1);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    det > tol
}

/// Bowyer-Watson Delaunay triangulation. Every returned triangle's
/// circumcircle contains no other input point in its interior.
pub fn delaunay(points: &[(f64, f64)]) -> Result<Vec<[usize; 3]>, MosaicError> {
    if points.len() < 3 {
        return Err(MosaicError::Degenerate);
    }
    let collinear = {
        let a = points[0];
        points
            .iter()
            .skip(1)
            .find(|&&b| dist2(a, b) > 1e-9)
            .map(|&b| {
                points
                    .iter()
                    .all(|&c| orient2d(a, b, c).abs() < 1e-9 * (1.0 + dist2(a, b) * dist2(a, c)))
            })
            .unwrap_or(true)
    };
    if collinear {
        return Err(MosaicError::Degenerate);
    }

    // Super-triangle enclosing everything.
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    let big = 64.0 * span;
    let mut verts: Vec<(f64, f64)> = points.to_vec();
    let s0 = verts.len();
    verts.push((cx - big, cy - big / 2.0));
    verts.push((cx + big, cy - big / 2.0));
    verts.push((cx, cy + big));

    let ccw = |t: [usize; 3]| -> [usize; 3] {
        if orient2d(verts[t[0]], verts[t[1]], verts[t[2]]) < 0.0 {
            [t[0], t[2], t[1]]
        } else {
            t
        }
    };
    let mut tris: Vec<[usize; 3]> = vec![ccw([s0, s0 + 1, s0 + 2])];

    for pi in 0..points.len() {
        let p = verts[pi];
        // Skip exact duplicates of already-inserted points.
        if points[..pi].iter().any(|&q| dist2(p, q) < 1e-9) {
            continue;
        }
        let (bad, good): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris
            .into_iter()
            .partition(|&t| in_circumcircle(verts[t[0]], verts[t[1]], verts[t[2]], p, -1e-12));
        // Boundary of the cavity: edges appearing exactly once among bad triangles.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for t in &bad {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if let Some(pos) = edges.iter().position(|&(a, b)| (b, a) == e || (a, b) == e) {
                    edges.remove(pos);
                } else {
                    edges.push(e);
                }
            }
        }
        tris = good;
        for (a, b) in edges {
            let t = ccw([a, b, pi]);
            if orient2d(verts[t[0]], verts[t[1]], verts[t[2]]).abs() > 1e-12 {
                tris.push(t);
            }
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < s0));
    if tris.is_empty() {
        return Err(MosaicError::Degenerate);
    }
    Ok(tris)
}

fn barycentric(
    p: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
) -> Option<(f64, f64, f64)> {
    let area = orient2d(a, b, c);
    if area.abs() < 1e-12 {
        return None;
    }
    let l0 = orient2d(p, b, c) / area;
    let l1 = orient2d(p, c, a) / area;
    let l2 = orient2d(p, a, b) / area;
    Some((l0, l1, l2))
}

fn nearest_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    // Returns (distance, interpolation parameter along a->b).
    let ab = (b.0 - a.0, b.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 < 1e-18 {
        return (dist2(p, a), 0.0);
    }
    let t = (((p.0 - a.0) * ab.0 + (p.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0);
    let q = (a.0 + t * ab.0, a.1 + t * ab.1);
    (dist2(p, q), t)
}

/// Rasterize a candidate's probability map: vertex k of the aligned pose
/// carries `exp(-d(p_k, q'_k)^2 / sigma^2)`, triangle interiors interpolate
/// barycentrically, pixels outside the hull take the value at the nearest
/// hull-boundary point, invalid pixels are forced to 0.
pub fn probability_map(
    cand: &WarpedCandidate,
    qp: &QueryPose,
    sigma: f64,
) -> Result<ProbabilityMap, MosaicError> {
    let canvas = cand.image.width();
    let visible = qp.pose2d.mutually_visible(&cand.aligned_pose);
    let pts: Vec<(f64, f64)> = visible.iter().map(|&k| cand.aligned_pose.joints[k]).collect();
    let vals: Vec<f64> = visible
        .iter()
        .map(|&k| {
            let d = dist2(qp.pose2d.joints[k], cand.aligned_pose.joints[k]);
            (-d * d / (sigma * sigma)).exp()
        })
        .collect();
    let tris = delaunay(&pts)?;

    let npix = (canvas * canvas) as usize;
    let mut values = vec![0.0f64; npix];
    let mut covered = vec![false; npix];
    for t in &tris {
        let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
        let min_u = a.0.min(b.0).min(c.0).floor().max(0.0) as u32;
        let max_u = (a.0.max(b.0).max(c.0).ceil() as i64).clamp(0, canvas as i64 - 1) as u32;
        let min_v = a.1.min(b.1).min(c.1).floor().max(0.0) as u32;
        let max_v = (a.1.max(b.1).max(c.1).ceil() as i64).clamp(0, canvas as i64 - 1) as u32;
        if a.0.max(b.0).max(c.0) < 0.0 || a.1.max(b.1).max(c.1) < 0.0 {
            continue;
        }
        for v in min_v..=max_v {
            for u in min_u..=max_u {
                let p = (u as f64, v as f64);
                if let Some((l0, l1, l2)) = barycentric(p, a, b, c) {
                    if l0 >= -1e-9 && l1 >= -1e-9 && l2 >= -1e-9 {
                        let idx = (v * canvas + u) as usize;
                        values[idx] = l0 * vals[t[0]] + l1 * vals[t[1]] + l2 * vals[t[2]];
                        covered[idx] = true;
                    }
                }
            }
        }
    }

    // Boundary edges of the triangulation (each used by exactly one triangle).
    let mut boundary: Vec<(usize, usize)> = Vec::new();
    for t in &tris {
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if let Some(pos) = boundary
                .iter()
                .position(|&(a, b)| (a, b) == e || (b, a) == e)
            {
                boundary.remove(pos);
            } else {
                boundary.push(e);
            }
        }
    }
    for v in 0..canvas {
        for u in 0..canvas {
            let idx = (v * canvas + u) as usize;
            if covered[idx] {
                continue;
            }
            let p = (u as f64, v as f64);
            let mut best = (f64::INFINITY, 0.0);
            for &(a, b) in &boundary {
                let (d, t) = nearest_on_segment(p, pts[a], pts[b]);
                if d < best.0 {
                    best = (d, vals[a] * (1.0 - t) + vals[b] * t);
                }
            }
            values[idx] = best.1;
        }
    }
    for (idx, ok) in cand.valid.iter().enumerate() {
        if !ok {
            values[idx] = 0.0;
        }
    }
    for x in &mut values {
        *x = x.clamp(0.0, 1.0);
    }
    Ok(ProbabilityMap { canvas, values })
}

/// Per-pixel argmax over candidate maps. Ties break toward the smallest
/// candidate index; pixels where every map is zero go to the candidate with
/// the smallest match distance.
pub fn index_map(maps: &[ProbabilityMap], distances: &[f64]) -> IndexMap {
    let canvas = maps[0].canvas;
    let fallback = distances
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let npix = (canvas * canvas) as usize;
    let mut indices = vec![0usize; npix];
    for (idx, slot) in indices.iter_mut().enumerate() {
        let mut best_j = 0usize;
        let mut best_v = maps[0].values[idx];
        for (j, m) in maps.iter().enumerate().skip(1) {
            if m.values[idx] > best_v {
                best_v = m.values[idx];
                best_j = j;
            }
        }
        *slot = if best_v == 0.0 { fallback } else { best_j };
    }
    IndexMap { canvas, indices }
}

/// Copy-paste compositing: each pixel comes from the candidate the index map
/// points at. Warped candidates already hold edge-clamped values where the
/// source fell out of bounds.
pub fn compose_mosaic(candidates: &[WarpedCandidate], im: &IndexMap) -> RgbImage {
    let canvas = im.canvas;
    let mut out = RgbImage::new(canvas, canvas);
    for v in 0..canvas {
        for u in 0..canvas {
            let j = im.indices[(v * canvas + u) as usize];
            *out.get_pixel_mut(u, v) = *candidates[j].image.get_pixel(u, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transform2D;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dummy_match(t: Transform2D, pose: Pose2D) -> Match {
        Match {
            source_id: "src".into(),
            source_index: 0,
            aligned_pose: t.apply_pose(&pose),
            transform: t,
            distance: 0.0,
            joint: 0,
        }
    }

    fn noise_image(w: u32, h: u32, seed: u64) -> AnnotatedImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = RgbImage::new(w, h);
        for p in img.pixels_mut() {
            p.0 = [rng.gen(), rng.gen(), rng.gen()];
        }
        AnnotatedImage {
            id: "src".into(),
            pixels: img,
            pose: Pose2D::all_visible(vec![(0.0, 0.0), (10.0, 10.0)]),
        }
    }

    #[test]
    fn identity_warp_is_pixel_exact() {
        let src = noise_image(64, 64, 1);
        let m = dummy_match(Transform2D::identity(), src.pose.clone());
        let w = warp_image(&src, m, 64);
        assert_eq!(w.image, src.pixels);
        assert!(w.valid.iter().all(|&v| v));
    }

    #[test]
    fn translation_invalidates_border_band() {
        let src = noise_image(64, 64, 2);
        let t = Transform2D::scale_translate(1.0, (30.0, 0.0));
        let w = warp_image(&src, dummy_match(t, src.pose.clone()), 64);
        for v in 0..64u32 {
            for u in 0..64u32 {
                let ok = w.valid[(v * 64 + u) as usize];
                assert_eq!(ok, u >= 30, "({u},{v})");
            }
        }
    }

    #[test]
    fn bilinear_matches_hand_computation() {
        // 2x2 checkerboard scaled 2x about the origin: canvas pixel (1,1)
        // maps to source (0.5, 0.5), the average of all four pixels.
        let mut img = RgbImage::new(2, 2);
        img.get_pixel_mut(0, 0).0 = [0, 0, 0];
        img.get_pixel_mut(1, 0).0 = [200, 200, 200];
        img.get_pixel_mut(0, 1).0 = [200, 200, 200];
        img.get_pixel_mut(1, 1).0 = [0, 0, 0];
        let src = AnnotatedImage {
            id: "cb".into(),
            pixels: img,
            pose: Pose2D::all_visible(vec![(0.0, 0.0), (1.0, 1.0)]),
        };
        let t = Transform2D::scale_translate(2.0, (0.0, 0.0));
        let w = warp_image(&src, dummy_match(t, src.pose.clone()), 4);
        assert_eq!(w.image.get_pixel(1, 1).0, [100, 100, 100]);
        assert_eq!(w.image.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(w.image.get_pixel(2, 0).0, [200, 200, 200]);
    }

    #[test]
    fn unit_square_triangulates_into_two() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let tris = delaunay(&pts).unwrap();
        assert_eq!(tris.len(), 2);
        let mut seen = [false; 4];
        for t in &tris {
            for &v in t {
                seen[v] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        assert_eq!(delaunay(&pts), Err(MosaicError::Degenerate));
        assert_eq!(delaunay(&pts[..2]), Err(MosaicError::Degenerate));
    }

    #[test]
    fn empty_circumcircle_property_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let n = rng.gen_range(4..=12);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect();
            let tris = delaunay(&pts).unwrap();
            for t in &tris {
                for (pi, &p) in pts.iter().enumerate() {
                    if t.contains(&pi) {
                        continue;
                    }
                    let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
                    let (a, b, c) = if orient2d(a, b, c) > 0.0 {
                        (a, b, c)
                    } else {
                        (a, c, b)
                    };
                    assert!(
                        !in_circumcircle(a, b, c, p, 1e-6),
                        "trial {trial}: point {pi} inside circumcircle of {t:?}"
                    );
                }
            }
        }
    }

    fn flat_candidate(canvas: u32, pose: Pose2D) -> WarpedCandidate {
        let image = RgbImage::from_pixel(canvas, canvas, image::Rgb([128, 128, 128]));
        WarpedCandidate {
            valid: vec![true; (canvas * canvas) as usize],
            aligned_pose: pose.clone(),
            info: dummy_match(Transform2D::identity(), pose),
            image,
        }
    }

    #[test]
    fn perfect_match_fills_hull_with_ones() {
        let pose = Pose2D::all_visible(vec![(10.0, 10.0), (50.0, 12.0), (30.0, 50.0)]);
        let qp = QueryPose {
            pose2d: pose.clone(),
            crop: Transform2D::identity(),
        };
        let cand = flat_candidate(64, pose);
        let pm = probability_map(&cand, &qp, 15.0).unwrap();
        // every pixel, inside or clamped to the hull, carries value 1
        for &v in &pm.values {
            assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn vertex_residual_sigma_gives_inv_e() {
        let aligned = Pose2D::all_visible(vec![(10.0, 10.0), (50.0, 12.0), (30.0, 50.0)]);
        let mut query = aligned.clone();
        query.joints[2] = (30.0, 35.0); // residual 15 px at vertex 2
        let qp = QueryPose {
            pose2d: query,
            crop: Transform2D::identity(),
        };
        let cand = flat_candidate(64, aligned.clone());
        let pm = probability_map(&cand, &qp, 15.0).unwrap();
        let (x, y) = (aligned.joints[2].0 as u32, aligned.joints[2].1 as u32);
        let v = pm.values[(y * 64 + x) as usize];
        assert_relative_eq!(v, (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn barycenter_interpolates_vertex_values() {
        // Vertex residuals chosen so values are (1, 0.5, 0.25); the triangle
        // barycenter must read their mean.
        let sigma = 15.0;
        let r = |val: f64| sigma * (-val.ln()).sqrt();
        let aligned = Pose2D::all_visible(vec![(12.0, 12.0), (54.0, 12.0), (33.0, 48.0)]);
        let query = Pose2D::all_visible(vec![
            (12.0, 12.0),
            (54.0 + r(0.5), 12.0),
            (33.0 + r(0.25), 48.0),
        ]);
        let qp = QueryPose {
            pose2d: query,
            crop: Transform2D::identity(),
        };
        let cand = flat_candidate(64, aligned.clone());
        let pm = probability_map(&cand, &qp, sigma).unwrap();
        let bx = (12.0 + 54.0 + 33.0) / 3.0;
        let by = (12.0 + 12.0 + 48.0) / 3.0;
        // sample at the nearest pixel center; tolerance covers the sub-pixel offset
        let v = pm.values[(f64::round(by) as u32 * 64 + f64::round(bx) as u32) as usize];
        assert!((v - 0.5833).abs() < 0.02, "{v}");
    }

    #[test]
    fn invalid_pixels_forced_to_zero() {
        let pose = Pose2D::all_visible(vec![(10.0, 10.0), (50.0, 12.0), (30.0, 50.0)]);
        let qp = QueryPose {
            pose2d: pose.clone(),
            crop: Transform2D::identity(),
        };
        let mut cand = flat_candidate(64, pose);
        for u in 0..64u32 {
            cand.valid[u as usize] = false; // first row invalid
        }
        let pm = probability_map(&cand, &qp, 15.0).unwrap();
        for u in 0..64usize {
            assert_eq!(pm.values[u], 0.0);
        }
    }

    #[test]
    fn continuity_across_shared_triangle_edges() {
        // Values along a shared edge must agree with linear interpolation of
        // its endpoints no matter which triangle rasterized the pixel.
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let pts: Vec<(f64, f64)> = (0..9)
            .map(|_| (rng.gen_range(5.0..59.0), rng.gen_range(5.0..59.0)))
            .collect();
        let tris = delaunay(&pts).unwrap();
        let vals: Vec<f64> = (0..pts.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        // shared edges = edges appearing twice
        let mut counts: Vec<((usize, usize), usize)> = Vec::new();
        for t in &tris {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (e.0.min(e.1), e.0.max(e.1));
                if let Some(c) = counts.iter_mut().find(|(k, _)| *k == key) {
                    c.1 += 1;
                } else {
                    counts.push((key, 1));
                }
            }
        }
        let mut checked = 0;
        for &((a, b), c) in &counts {
            if c != 2 {
                continue;
            }
            for step in 1..20 {
                let t = step as f64 / 20.0;
                let p = (
                    pts[a].0 + t * (pts[b].0 - pts[a].0),
                    pts[a].1 + t * (pts[b].1 - pts[a].1),
                );
                let expect = vals[a] * (1.0 - t) + vals[b] * t;
                // evaluate via each triangle containing the edge
                for tri in tris.iter().filter(|tri| tri.contains(&a) && tri.contains(&b)) {
                    let (l0, l1, l2) =
                        barycentric(p, pts[tri[0]], pts[tri[1]], pts[tri[2]]).unwrap();
                    let v = l0 * vals[tri[0]] + l1 * vals[tri[1]] + l2 * vals[tri[2]];
                    assert!((v - expect).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn index_map_single_candidate_is_constant() {
        let pm = ProbabilityMap {
            canvas: 4,
            values: vec![0.5; 16],
        };
        let im = index_map(&[pm], &[1.0]);
        assert!(im.indices.iter().all(|&i| i == 0));
    }

    #[test]
    fn index_map_splits_halves() {
        let canvas = 4u32;
        let mut a = vec![0.1; 16];
        let mut b = vec![0.1; 16];
        for v in 0..4 {
            for u in 0..4 {
                if u < 2 {
                    a[v * 4 + u] = 0.9;
                } else {
                    b[v * 4 + u] = 0.9;
                }
            }
        }
        let im = index_map(
            &[
                ProbabilityMap { canvas, values: a },
                ProbabilityMap { canvas, values: b },
            ],
            &[1.0, 2.0],
        );
        for v in 0..4usize {
            for u in 0..4usize {
                assert_eq!(im.indices[v * 4 + u], if u < 2 { 0 } else { 1 });
            }
        }
    }

    #[test]
    fn index_map_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let canvas = 8u32;
        let maps: Vec<ProbabilityMap> = (0..5)
            .map(|_| ProbabilityMap {
                canvas,
                values: (0..64).map(|_| rng.gen_range(0.0..1.0)).collect(),
            })
            .collect();
        let dists = vec![0.5, 0.2, 0.9, 0.4, 0.7];
        let im = index_map(&maps, &dists);
        for idx in 0..64usize {
            let mut best = 0;
            for j in 1..5 {
                if maps[j].values[idx] > maps[best].values[idx] {
                    best = j;
                }
            }
            assert_eq!(im.indices[idx], best);
        }
    }

    #[test]
    fn all_zero_pixel_falls_back_to_closest_match() {
        let canvas = 2u32;
        let zero = ProbabilityMap {
            canvas,
            values: vec![0.0; 4],
        };
        let im = index_map(&[zero.clone(), zero], &[0.9, 0.1]);
        assert!(im.indices.iter().all(|&i| i == 1));
    }

    #[test]
    fn index_map_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let canvas = 8u32;
        let maps: Vec<ProbabilityMap> = (0..4)
            .map(|_| ProbabilityMap {
                canvas,
                // distinct strictly positive values avoid tie-break asymmetry
                values: (0..64).map(|_| rng.gen_range(0.01..1.0)).collect(),
            })
            .collect();
        let dists = [0.1, 0.2, 0.3, 0.4];
        let im = index_map(&maps, &dists);
        let perm = [2usize, 0, 3, 1];
        let permuted_maps: Vec<ProbabilityMap> = perm.iter().map(|&i| maps[i].clone()).collect();
        let permuted_dists: Vec<f64> = perm.iter().map(|&i| dists[i]).collect();
        let im2 = index_map(&permuted_maps, &permuted_dists);
        for idx in 0..64usize {
            assert_eq!(perm[im2.indices[idx]], im.indices[idx]);
        }
    }

    #[test]
    fn compose_copies_single_candidate() {
        let pose = Pose2D::all_visible(vec![(1.0, 1.0), (3.0, 3.0)]);
        let cand = flat_candidate(4, pose);
        let im = IndexMap {
            canvas: 4,
            indices: vec![0; 16],
        };
        let out = compose_mosaic(&[cand], &im);
        assert!(out.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn checkerboard_index_map_interleaves_constant_candidates() {
        let canvas = 4u32;
        let pose = Pose2D::all_visible(vec![(1.0, 1.0), (3.0, 3.0)]);
        let mut red = flat_candidate(canvas, pose.clone());
        for p in red.image.pixels_mut() {
            p.0 = [255, 0, 0];
        }
        let mut blue = flat_candidate(canvas, pose);
        for p in blue.image.pixels_mut() {
            p.0 = [0, 0, 255];
        }
        let indices: Vec<usize> = (0..16).map(|i| (i / 4 + i % 4) % 2).collect();
        let im = IndexMap {
            canvas,
            indices: indices.clone(),
        };
        let out = compose_mosaic(&[red, blue], &im);
        for v in 0..4u32 {
            for u in 0..4u32 {
                let expect = if indices[(v * 4 + u) as usize] == 0 {
                    [255, 0, 0]
                } else {
                    [0, 0, 255]
                };
                assert_eq!(out.get_pixel(u, v).0, expect);
            }
        }
    }
}
