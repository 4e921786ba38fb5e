//! Canonical file formats: line-delimited JSON records with a schema header
//! line per file, PNG images, skeleton descriptors and corpus mirroring.
//!
//! Layout convention:
//!   corpus/manifest        corpus records, one per line
//!   corpus/images/*.png    corpus images
//!   mocap/poses            3D pose records
//!   synth/manifest         synthesis output records
//!   synth/images/*.png     synthesized images
//!   clusters/model         pose-class model
//!   reports/*.csv          evaluation reports

use crate::clustering::PoseClass;
use crate::model::{AnnotatedImage, Camera, Pose2D, Pose3D, Skeleton};
use image::RgbImage;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CORPUS_SCHEMA: &str = "corpus-manifest/1";
pub const MOCAP_SCHEMA: &str = "mocap-poses/1";
pub const SYNTH_SCHEMA: &str = "synth-manifest/1";
pub const CLUSTER_SCHEMA: &str = "cluster-model/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: record {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: expected schema {expected}, found {found}")]
    SchemaMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
}

/// One corpus entry: annotation plus the relative path of its image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub image: String,
    pub pose2d: Pose2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    /// Skeleton descriptor path, relative to the manifest.
    pub skeleton: String,
    pub records: Vec<CorpusRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MocapRecord {
    pub id: String,
    pub joints3d_mm: Vec<(f64, f64, f64)>,
}

impl MocapRecord {
    pub fn pose(&self) -> Pose3D {
        Pose3D {
            joints: self.joints3d_mm.clone(),
        }
    }
}

/// One synthesized sample: image path, oriented 3D pose, canvas 2D pose,
/// camera, optional class and the corpus ids that contributed patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub id: String,
    pub image: String,
    pub pose3d: Pose3D,
    pub pose2d: Pose2D,
    pub camera: Camera,
    pub class_id: Option<usize>,
    pub source_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModelHeader {
    pub schema: String,
    pub k: usize,
    pub skeleton: String,
    pub seed: u64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub skeleton: String,
    pub seed: u64,
    pub objective: f64,
    pub classes: Vec<PoseClass>,
}

pub fn read_skeleton(path: &Path) -> Result<Skeleton, IoError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })
}

pub fn write_skeleton(path: &Path, s: &Skeleton) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(s).unwrap())?;
    Ok(())
}

fn read_lines<H: DeserializeOwned, R: DeserializeOwned>(
    path: &Path,
    expected_schema: &str,
) -> Result<(H, Vec<R>), IoError> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let head_line = lines.next().ok_or_else(|| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "empty file".into(),
    })??;
    let schema: serde_json::Value =
        serde_json::from_str(&head_line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
    let found = schema
        .get("schema")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    if found != expected_schema {
        return Err(IoError::SchemaMismatch {
            path: path.display().to_string(),
            expected: expected_schema.into(),
            found,
        });
    }
    let header: H = serde_json::from_str(&head_line).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: R = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok((header, records))
}

fn write_lines<H: Serialize, R: Serialize>(
    path: &Path,
    header: &H,
    records: &[R],
) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(header).unwrap())?;
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).unwrap())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    schema: String,
    skeleton: String,
}

pub fn read_corpus_manifest(path: &Path) -> Result<CorpusManifest, IoError> {
    let (header, records): (CorpusHeader, Vec<CorpusRecord>) = read_lines(path, CORPUS_SCHEMA)?;
    Ok(CorpusManifest {
        skeleton: header.skeleton,
        records,
    })
}

pub fn write_corpus_manifest(path: &Path, m: &CorpusManifest) -> Result<(), IoError> {
    write_lines(
        path,
        &CorpusHeader {
            schema: CORPUS_SCHEMA.into(),
            skeleton: m.skeleton.clone(),
        },
        &m.records,
    )
}

pub fn read_mocap_poses(path: &Path) -> Result<Vec<MocapRecord>, IoError> {
    let (_, records): (Header, Vec<MocapRecord>) = read_lines(path, MOCAP_SCHEMA)?;
    Ok(records)
}

pub fn write_mocap_poses(path: &Path, records: &[MocapRecord]) -> Result<(), IoError> {
    write_lines(
        path,
        &Header {
            schema: MOCAP_SCHEMA.into(),
        },
        records,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthHeader {
    schema: String,
    skeleton: String,
}

pub fn read_synth_manifest(path: &Path) -> Result<(String, Vec<SynthRecord>), IoError> {
    let (header, records): (SynthHeader, Vec<SynthRecord>) = read_lines(path, SYNTH_SCHEMA)?;
    Ok((header.skeleton, records))
}

pub fn write_synth_manifest(
    path: &Path,
    skeleton: &str,
    records: &[SynthRecord],
) -> Result<(), IoError> {
    write_lines(
        path,
        &SynthHeader {
            schema: SYNTH_SCHEMA.into(),
            skeleton: skeleton.into(),
        },
        records,
    )
}

pub fn read_cluster_model(path: &Path) -> Result<ClusterModel, IoError> {
    let (header, classes): (ClusterModelHeader, Vec<PoseClass>) = read_lines(path, CLUSTER_SCHEMA)?;
    Ok(ClusterModel {
        k: header.k,
        skeleton: header.skeleton,
        seed: header.seed,
        objective: header.objective,
        classes,
    })
}

pub fn write_cluster_model(path: &Path, m: &ClusterModel) -> Result<(), IoError> {
    write_lines(
        path,
        &ClusterModelHeader {
            schema: CLUSTER_SCHEMA.into(),
            k: m.k,
            skeleton: m.skeleton.clone(),
            seed: m.seed,
            objective: m.objective,
        },
        &m.classes,
    )
}

/// Load a corpus: manifest, skeleton and all images, resolving paths
/// relative to the manifest location.
pub fn load_corpus(
    manifest_path: &Path,
) -> Result<(CorpusManifest, Skeleton, Vec<AnnotatedImage>), IoError> {
    let manifest = read_corpus_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let skeleton = read_skeleton(&base.join(&manifest.skeleton))?;
    let mut images = Vec::with_capacity(manifest.records.len());
    for rec in &manifest.records {
        let img = image::open(base.join(&rec.image))?.to_rgb8();
        images.push(AnnotatedImage {
            id: rec.id.clone(),
            pixels: img,
            pose: rec.pose2d.clone(),
        });
    }
    Ok((manifest, skeleton, images))
}

/// Structural checks on a loaded manifest: unique ids, files present, pose
/// lengths matching the skeleton.
pub fn validate_manifest(manifest_path: &Path) -> Result<Vec<String>, IoError> {
    let manifest = read_corpus_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut violations = Vec::new();
    let skeleton = match read_skeleton(&base.join(&manifest.skeleton)) {
        Ok(s) => Some(s),
        Err(e) => {
            violations.push(format!("skeleton unreadable: {e}"));
            None
        }
    };
    if let Some(s) = &skeleton {
        for v in crate::model::validate_skeleton(s) {
            violations.push(format!("skeleton: {v}"));
        }
    }
    let mut ids = std::collections::HashSet::new();
    for rec in &manifest.records {
        if !ids.insert(&rec.id) {
            violations.push(format!("duplicate id: {}", rec.id));
        }
        if !base.join(&rec.image).exists() {
            violations.push(format!("{}: missing image {}", rec.id, rec.image));
        }
        if let Some(s) = &skeleton {
            if rec.pose2d.len() != s.len() || rec.pose2d.visibility.len() != s.len() {
                violations.push(format!("{}: pose length mismatch", rec.id));
            }
        }
    }
    Ok(violations)
}

/// Horizontally flip an annotated image: columns reversed, x' = W-1-x, and
/// left/right joint indices swapped. Mirrored ids get a "_m" suffix.
pub fn mirror_annotated(img: &AnnotatedImage, s: &Skeleton) -> AnnotatedImage {
    let w = img.pixels.width();
    let h = img.pixels.height();
    let mut flipped = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            *flipped.get_pixel_mut(w - 1 - x, y) = *img.pixels.get_pixel(x, y);
        }
    }
    let n = img.pose.len();
    let mut swap: Vec<usize> = (0..n).collect();
    for &(l, r) in &s.left_right_pairs {
        swap[l] = r;
        swap[r] = l;
    }
    let joints: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let (x, y) = img.pose.joints[swap[k]];
            ((w - 1) as f64 - x, y)
        })
        .collect();
    let visibility: Vec<bool> = (0..n).map(|k| img.pose.visibility[swap[k]]).collect();
    AnnotatedImage {
        id: format!("{}_m", img.id),
        pixels: flipped,
        pose: Pose2D { joints, visibility },
    }
}

/// Double a corpus on disk by appending mirrored copies of every record.
/// Returns the number of records added.
pub fn mirror_corpus(manifest_path: &Path) -> Result<usize, IoError> {
    let (mut manifest, skeleton, images) = load_corpus(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut new_records = Vec::new();
    for (rec, img) in manifest.records.iter().zip(&images) {
        let mirrored = mirror_annotated(img, &skeleton);
        let src: PathBuf = PathBuf::from(&rec.image);
        let stem = src
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&rec.id)
            .to_string();
        let image_rel = src
            .parent()
            .map(|p| p.join(format!("{stem}_m.png")))
            .unwrap_or_else(|| PathBuf::from(format!("{stem}_m.png")));
        mirrored.pixels.save(base.join(&image_rel))?;
        new_records.push(CorpusRecord {
            id: mirrored.id.clone(),
            image: image_rel.to_string_lossy().into_owned(),
            pose2d: mirrored.pose.clone(),
        });
    }
    let added = new_records.len();
    manifest.records.extend(new_records);
    write_corpus_manifest(manifest_path, &manifest)?;
    Ok(added)
}

/// Write an evaluation report as CSV.
pub fn write_report_csv(path: &Path, report: &crate::evaluation::EvalReport) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "id,abs_mm,rigid_mm,similarity_mm,px,feet_px,knees_px,hips_px,hands_px,elbows_px,shoulders_px,head_px"
    )?;
    for s in &report.samples {
        let px = s.px.map(|v| format!("{v:.6}")).unwrap_or_default();
        let groups = s
            .per_group_px
            .map(|g| {
                g.iter()
                    .map(|v| format!("{v:.6}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_else(|| ",,,,,,".into());
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{},{}",
            s.id, s.abs_mm, s.rigid_mm, s.similarity_mm, px, groups
        )?;
    }
    w.flush()?;
    Ok(())
}
