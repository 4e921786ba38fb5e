//! Self-contained synthetic test corpus: randomized articulated stick
//! figures rendered as colored capsule limbs over textured backgrounds, with
//! exact 2D annotations, plus a matching 3D pose sampler. Everything is
//! deterministic for a given seed.

use crate::io::{
    write_corpus_manifest, write_mocap_poses, write_skeleton, CorpusManifest, CorpusRecord,
    IoError, MocapRecord,
};
use crate::mocap::{normalize_crop, orient_and_center, project};
use crate::model::{derive_seed, AnnotatedImage, Camera, Pose2D, Pose3D, Skeleton};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Standing template for the default 13-joint skeleton, in mm, camera frame
/// (x right, y down, z forward). Torso center is approximately the origin.
fn template_pose() -> Pose3D {
    Pose3D {
        joints: vec![
            (0.0, -520.0, 0.0),    // head
            (-180.0, -300.0, 0.0), // left shoulder
            (180.0, -300.0, 0.0),  // right shoulder
            (-300.0, -100.0, 20.0),
            (300.0, -100.0, 20.0),
            (-330.0, 100.0, 40.0),
            (330.0, 100.0, 40.0),
            (-110.0, 300.0, 0.0), // left hip
            (110.0, 300.0, 0.0),  // right hip
            (-130.0, 650.0, 10.0),
            (130.0, 650.0, 10.0),
            (-140.0, 1000.0, 0.0),
            (140.0, 1000.0, 0.0),
        ],
    }
}

/// A randomized articulated pose: the standing template with per-joint
/// jitter, stronger at the extremities.
pub fn sample_pose3d(rng: &mut impl Rng) -> Pose3D {
    let template = template_pose();
    // torso joints move less than limbs so poses stay roughly human-shaped
    let amp = [
        120.0, 60.0, 60.0, 150.0, 150.0, 220.0, 220.0, 60.0, 60.0, 160.0, 160.0, 220.0, 220.0,
    ];
    Pose3D {
        joints: template
            .joints
            .iter()
            .zip(&amp)
            .map(|(&(x, y, z), &a)| {
                (
                    x + rng.gen_range(-a..a),
                    y + rng.gen_range(-a..a),
                    z + rng.gen_range(-a..a),
                )
            })
            .collect(),
    }
}

fn limb_palette(i: usize) -> [u8; 3] {
    const COLORS: [[u8; 3]; 12] = [
        [220, 60, 60],
        [60, 200, 60],
        [70, 90, 220],
        [220, 180, 40],
        [180, 60, 200],
        [40, 200, 200],
        [240, 130, 40],
        [130, 220, 130],
        [150, 100, 60],
        [100, 140, 240],
        [230, 90, 150],
        [90, 180, 90],
    ];
    COLORS[i % COLORS.len()]
}

/// Render capsule limbs for every skeleton edge onto a textured background.
/// The annotated joints are exactly the capsule endpoints.
pub fn render_stick_figure(
    pose: &Pose2D,
    s: &Skeleton,
    canvas: u32,
    rng: &mut impl Rng,
) -> RgbImage {
    let mut img = RgbImage::new(canvas, canvas);
    // muted noise background
    let base: [u8; 3] = [
        rng.gen_range(140..200),
        rng.gen_range(140..200),
        rng.gen_range(140..200),
    ];
    for p in img.pixels_mut() {
        let n = rng.gen_range(0i16..40) - 20;
        for c in 0..3 {
            p.0[c] = (base[c] as i16 + n).clamp(0, 255) as u8;
        }
    }
    let radius = 4.5f64;
    for (ei, &(a, b)) in s.edges.iter().enumerate() {
        if !pose.visible(a) || !pose.visible(b) {
            continue;
        }
        let pa = pose.joints[a];
        let pb = pose.joints[b];
        let color = limb_palette(ei);
        let min_u = (pa.0.min(pb.0) - radius).floor().max(0.0) as u32;
        let max_u = ((pa.0.max(pb.0) + radius).ceil() as i64).clamp(0, canvas as i64 - 1) as u32;
        let min_v = (pa.1.min(pb.1) - radius).floor().max(0.0) as u32;
        let max_v = ((pa.1.max(pb.1) + radius).ceil() as i64).clamp(0, canvas as i64 - 1) as u32;
        let ab = (pb.0 - pa.0, pb.1 - pa.1);
        let len2 = (ab.0 * ab.0 + ab.1 * ab.1).max(1e-12);
        for v in min_v..=max_v {
            for u in min_u..=max_u {
                let p = (u as f64, v as f64);
                let t = (((p.0 - pa.0) * ab.0 + (p.1 - pa.1) * ab.1) / len2).clamp(0.0, 1.0);
                let q = (pa.0 + t * ab.0, pa.1 + t * ab.1);
                let d = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                if d <= radius {
                    img.get_pixel_mut(u, v).0 = color;
                }
            }
        }
    }
    img
}

/// Generate one corpus entry deterministically from a seed.
pub fn generate_entry(id: &str, s: &Skeleton, canvas: u32, seed: u64) -> AnnotatedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose3d = sample_pose3d(&mut rng);
    let cam = Camera {
        azimuth: rng.gen_range(0.0..360.0),
        elevation: rng.gen_range(-30.0..30.0),
        distance: 5000.0,
        focal: 1100.0,
    };
    let oriented = orient_and_center(&pose3d, &cam, s);
    let projected = project(&oriented).expect("template poses stay in front of the camera");
    let qp = normalize_crop(&projected, canvas, 10.0).expect("template poses are non-degenerate");
    let pixels = render_stick_figure(&qp.pose2d, s, canvas, &mut rng);
    AnnotatedImage {
        id: id.to_string(),
        pixels,
        pose: qp.pose2d,
    }
}

/// Write a full stick-figure corpus (skeleton descriptor, images, manifest)
/// under `out_dir`. Returns the manifest.
pub fn generate_stick_corpus(
    out_dir: &Path,
    count: usize,
    s: &Skeleton,
    canvas: u32,
    seed: u64,
) -> Result<CorpusManifest, IoError> {
    std::fs::create_dir_all(out_dir.join("images"))?;
    write_skeleton(&out_dir.join("skeleton.json"), s)?;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("stick_{i:04}");
        let entry = generate_entry(&id, s, canvas, derive_seed(seed, &id));
        let image_rel = format!("images/{id}.png");
        entry.pixels.save(out_dir.join(&image_rel))?;
        records.push(CorpusRecord {
            id,
            image: image_rel,
            pose2d: entry.pose,
        });
    }
    let manifest = CorpusManifest {
        skeleton: "skeleton.json".into(),
        records,
    };
    write_corpus_manifest(&out_dir.join("manifest"), &manifest)?;
    Ok(manifest)
}

/// Sample `count` raw 3D poses and write them as a MoCap pose file.
pub fn generate_mocap_poses(
    path: &Path,
    count: usize,
    seed: u64,
) -> Result<Vec<MocapRecord>, IoError> {
    let records: Vec<MocapRecord> = (0..count)
        .map(|i| {
            let id = format!("pose_{i:04}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &id));
            MocapRecord {
                joints3d_mm: sample_pose3d(&mut rng).joints,
                id,
            }
        })
        .collect();
    write_mocap_poses(path, &records)?;
    Ok(records)
}
