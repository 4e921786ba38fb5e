//! End-to-end synthesis: orient, project, normalize, retrieve, warp,
//! rasterize, select and blend, with deterministic parallel batch execution
//! over (pose, camera) work items.

use crate::blending::{blend, blend_weights};
use crate::io::{self, IoError, SynthRecord};
use crate::mocap::{
    normalize_crop, orient_and_center, project, sample_virtual_cameras, MocapError, QueryPose,
};
use crate::model::{derive_seed, Camera, Pose3D, Skeleton, SynthConfig};
use crate::mosaic::{
    compose_mosaic, index_map, probability_map, warp_image, IndexMap, MosaicError, ProbabilityMap,
    WarpedCandidate,
};
use crate::retrieval::{RetrievalError, RetrievalIndex};
use image::RgbImage;
use rayon::prelude::*;
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_MARGIN: f64 = 10.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mocap(#[from] MocapError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Mosaic(#[from] MosaicError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("more than {max_percent}% of items failed ({failed}/{total})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        max_percent: f64,
    },
}

/// Virtual-view sampling parameters for the synthesis run.
#[derive(Debug, Clone, Copy)]
pub struct CameraParams {
    pub per_pose: usize,
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
    pub distance: f64,
    pub focal: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            per_pose: 180,
            azimuth: (0.0, 360.0),
            elevation: (-45.0, 45.0),
            distance: 5000.0,
            focal: 1100.0,
        }
    }
}

/// One synthesized sample plus its final image.
pub struct SynthOutput {
    pub record: SynthRecord,
    pub image: RgbImage,
}

/// Intermediate artifacts retained for diagnostics.
pub struct SynthArtifacts {
    pub query: QueryPose,
    pub candidates: Vec<WarpedCandidate>,
    pub prob_maps: Vec<ProbabilityMap>,
    pub imap: IndexMap,
    pub mosaic: RgbImage,
}

/// Synthesize a single (pose, camera) item against a corpus.
pub fn synthesize_one(
    s: &Skeleton,
    index: &RetrievalIndex,
    raw_pose: &Pose3D,
    cam: &Camera,
    cfg: &SynthConfig,
    margin: f64,
    id: &str,
    keep_artifacts: bool,
) -> Result<(SynthOutput, Option<SynthArtifacts>), PipelineError> {
    let oriented = orient_and_center(raw_pose, cam, s);
    let projected = project(&oriented)?;
    let qp = normalize_crop(&projected, cfg.canvas, margin)?;
    let matches = index.query(&qp.pose2d, s)?;
    let corpus = index.corpus();
    let candidates: Vec<WarpedCandidate> = matches
        .into_iter()
        .map(|m| warp_image(&corpus[m.source_index], m, cfg.canvas))
        .collect();
    let prob_maps: Vec<ProbabilityMap> = candidates
        .iter()
        .map(|c| probability_map(c, &qp, cfg.sigma))
        .collect::<Result<_, _>>()?;
    let distances: Vec<f64> = candidates.iter().map(|c| c.info.distance).collect();
    let imap = index_map(&prob_maps, &distances);
    let weights = blend_weights(&imap, &qp, s, &cfg.blend, candidates.len());
    let image = blend(&candidates, &weights);
    let record = SynthRecord {
        id: id.to_string(),
        image: format!("images/{id}.png"),
        pose3d: oriented.pose3d,
        pose2d: qp.pose2d.clone(),
        camera: *cam,
        class_id: None,
        source_ids: candidates.iter().map(|c| c.info.source_id.clone()).collect(),
    };
    let artifacts = keep_artifacts.then(|| SynthArtifacts {
        mosaic: compose_mosaic(&candidates, &imap),
        query: qp,
        candidates,
        prob_maps,
        imap,
    });
    Ok((SynthOutput { record, image }, artifacts))
}

/// Outcome counters of a batch synthesis run.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SynthSummary {
    pub total: usize,
    pub produced: usize,
    pub skipped_existing: usize,
    pub failed: usize,
}

/// Run the full synthesis batch: every subsampled MoCap pose times
/// `cameras.per_pose` virtual views. Output is independent of `workers`;
/// items already present in the output manifest are skipped so interrupted
/// runs resume cleanly.
#[allow(clippy::too_many_arguments)]
pub fn run_synth(
    corpus_manifest: &Path,
    mocap_path: &Path,
    out_dir: &Path,
    cfg: &SynthConfig,
    cameras: &CameraParams,
    subsample_min_dist: Option<f64>,
    margin: f64,
    workers: usize,
) -> Result<SynthSummary, PipelineError> {
    let (_, skeleton, corpus) = io::load_corpus(corpus_manifest)?;
    let index = RetrievalIndex::build(&corpus)?;
    let mocap = io::read_mocap_poses(mocap_path)?;
    let poses: Vec<Pose3D> = mocap.iter().map(|r| r.pose()).collect();
    let kept: Vec<usize> = match subsample_min_dist {
        Some(d) => crate::mocap::subsample_poses(&poses, d),
        None => (0..poses.len()).collect(),
    };

    // Work items: (item id, pose index, camera), fully determined by the seed.
    let mut items: Vec<(String, usize, Camera)> = Vec::new();
    for &pi in &kept {
        let pose_id = &mocap[pi].id;
        let cams = sample_virtual_cameras(
            cameras.per_pose,
            cameras.azimuth,
            cameras.elevation,
            cameras.distance,
            cameras.focal,
            derive_seed(cfg.seed, pose_id),
        )?;
        for (ci, cam) in cams.into_iter().enumerate() {
            items.push((format!("{pose_id}_v{ci:03}"), pi, cam));
        }
    }

    let manifest_path = out_dir.join("manifest");
    let mut existing: Vec<SynthRecord> = Vec::new();
    if manifest_path.exists() {
        let (_, records) = io::read_synth_manifest(&manifest_path)?;
        existing = records;
    }
    let existing_ids: HashSet<String> = existing.iter().map(|r| r.id.clone()).collect();
    let pending: Vec<&(String, usize, Camera)> = items
        .iter()
        .filter(|(id, _, _)| !existing_ids.contains(id))
        .collect();
    let skipped_existing = items.len() - pending.len();

    std::fs::create_dir_all(out_dir.join("images")).map_err(IoError::from)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<SynthOutput, (String, PipelineError)>> = pool.install(|| {
        pending
            .par_iter()
            .map(|(id, pi, cam)| {
                synthesize_one(&skeleton, &index, &poses[*pi], cam, cfg, margin, id, false)
                    .map(|(out, _)| out)
                    .map_err(|e| (id.clone(), e))
            })
            .collect()
    });

    let mut produced = 0usize;
    let mut failed = 0usize;
    let mut records = existing;
    for res in results {
        match res {
            Ok(out) => {
                out.image
                    .save(out_dir.join(&out.record.image))
                    .map_err(IoError::from)?;
                records.push(out.record);
                produced += 1;
            }
            Err((id, e)) => {
                eprintln!("warn: item {id} failed: {e}");
                failed += 1;
            }
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    records.dedup_by(|a, b| a.id == b.id);
    let skeleton_rel = "skeleton.json";
    io::write_skeleton(&out_dir.join(skeleton_rel), &skeleton)?;
    io::write_synth_manifest(&manifest_path, skeleton_rel, &records)?;

    let total = items.len();
    let summary = SynthSummary {
        total,
        produced,
        skipped_existing,
        failed,
    };
    if total > 0 && (failed as f64) / (total as f64) > 0.01 {
        return Err(PipelineError::TooManyFailures {
            failed,
            total,
            max_percent: 1.0,
        });
    }
    Ok(summary)
}

/// Distinct colors for index-map diagnostics; one per candidate.
pub fn index_palette(i: usize) -> [u8; 3] {
    const P: [[u8; 3]; 13] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [0, 128, 128],
        [220, 190, 255],
        [170, 110, 40],
        [128, 128, 128],
    ];
    P[i % P.len()]
}

/// Render diagnostics for one synthesized item: per-candidate probability
/// maps as grayscale, the index map as a paletted image, and the query
/// skeleton overlaid on the final image.
pub fn render_diagnostics(
    artifacts: &SynthArtifacts,
    final_image: &RgbImage,
    s: &Skeleton,
) -> (Vec<image::GrayImage>, RgbImage, RgbImage) {
    let canvas = artifacts.imap.canvas;
    let grays: Vec<image::GrayImage> = artifacts
        .prob_maps
        .iter()
        .map(|pm| {
            let mut g = image::GrayImage::new(canvas, canvas);
            for (i, px) in g.pixels_mut().enumerate() {
                px.0 = [(pm.values[i] * 255.0).round() as u8];
            }
            g
        })
        .collect();
    let mut imap_img = RgbImage::new(canvas, canvas);
    for (i, px) in imap_img.pixels_mut().enumerate() {
        px.0 = index_palette(artifacts.imap.indices[i]);
    }
    let mut overlay = final_image.clone();
    let pose = &artifacts.query.pose2d;
    for &(a, b) in &s.edges {
        if !pose.visible(a) || !pose.visible(b) {
            continue;
        }
        let pa = pose.joints[a];
        let pb = pose.joints[b];
        let steps = (pa.0 - pb.0).abs().max((pa.1 - pb.1).abs()).ceil() as usize + 1;
        for t in 0..=steps {
            let f = t as f64 / steps as f64;
            let x = (pa.0 + f * (pb.0 - pa.0)).round();
            let y = (pa.1 + f * (pb.1 - pa.1)).round();
            if x >= 0.0 && y >= 0.0 && (x as u32) < canvas && (y as u32) < canvas {
                overlay.get_pixel_mut(x as u32, y as u32).0 = [0, 255, 0];
            }
        }
    }
    for (k, &(x, y)) in pose.joints.iter().enumerate() {
        if !pose.visible(k) {
            continue;
        }
        let (x, y) = (x.round(), y.round());
        if x >= 0.0 && y >= 0.0 && (x as u32) < canvas && (y as u32) < canvas {
            overlay.get_pixel_mut(x as u32, y as u32).0 = [255, 0, 0];
        }
    }
    (grays, imap_img, overlay)
}
