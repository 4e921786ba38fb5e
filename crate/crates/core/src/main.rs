//! Command-line front end: batch synthesis, clustering, evaluation, corpus
//! utilities, and diagnostics. Progress goes to stderr; each command prints a
//! single machine-readable JSON summary line to stdout on success.
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use posemosaic::io;
use posemosaic::mocap::sample_virtual_cameras;
use posemosaic::model::{derive_seed, BlendConfig, Skeleton, SynthConfig};
use posemosaic::pipeline::{
    render_diagnostics, run_synth, synthesize_one, CameraParams, DEFAULT_MARGIN,
};
use posemosaic::retrieval::RetrievalIndex;
use posemosaic::{clustering, evaluation, stickgen};
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "posemosaic", version, about = "Pose-conditioned image synthesis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Synthesis options shared by `synth` and `preview`. Every value can also
/// come from a JSON config file; explicit flags win over the file, the file
/// wins over built-in defaults.
#[derive(Args, Clone)]
struct SynthOpts {
    /// Corpus manifest path
    #[arg(long)]
    corpus: PathBuf,
    /// MoCap pose file path
    #[arg(long)]
    mocap: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON config file supplying defaults for the options below
    #[arg(long)]
    config: Option<PathBuf>,
    /// Canvas side in pixels
    #[arg(long)]
    canvas: Option<u32>,
    /// Probability-map bandwidth in pixels
    #[arg(long)]
    sigma: Option<f64>,
    /// Global seed
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum blend window side (odd)
    #[arg(long)]
    s_min: Option<u32>,
    /// Maximum blend window side (odd)
    #[arg(long)]
    s_max: Option<u32>,
    /// Blend window growth per pixel of skeleton distance
    #[arg(long)]
    alpha: Option<f64>,
    /// Crop margin in pixels
    #[arg(long)]
    margin: Option<f64>,
    /// Virtual cameras sampled per pose
    #[arg(long)]
    cameras_per_pose: Option<usize>,
    /// Azimuth range in degrees: LO HI
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    azimuth: Option<Vec<f64>>,
    /// Elevation range in degrees: LO HI
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    elevation: Option<Vec<f64>>,
    /// Camera distance in mm
    #[arg(long)]
    distance: Option<f64>,
    /// Focal length in pixels
    #[arg(long)]
    focal: Option<f64>,
    /// Greedy pose-subsampling threshold in mm (omit to keep all poses)
    #[arg(long)]
    subsample_mm: Option<f64>,
    /// Worker threads
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    canvas: Option<u32>,
    sigma: Option<f64>,
    seed: Option<u64>,
    s_min: Option<u32>,
    s_max: Option<u32>,
    alpha: Option<f64>,
    margin: Option<f64>,
    cameras_per_pose: Option<usize>,
    azimuth: Option<(f64, f64)>,
    elevation: Option<(f64, f64)>,
    distance: Option<f64>,
    focal: Option<f64>,
    subsample_mm: Option<f64>,
    workers: Option<usize>,
}

/// Fully resolved synthesis settings.
struct ResolvedSynth {
    cfg: SynthConfig,
    cams: CameraParams,
    margin: f64,
    subsample_mm: Option<f64>,
    workers: usize,
}

impl SynthOpts {
    fn resolve(&self) -> Result<ResolvedSynth> {
        let file: FileConfig = match &self.config {
            Some(p) => serde_json::from_str(
                &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )
            .with_context(|| format!("parsing {}", p.display()))?,
            None => FileConfig::default(),
        };
        let base_cfg = SynthConfig::default();
        let base_blend = BlendConfig::default();
        let base_cams = CameraParams::default();
        let pair = |v: &Option<Vec<f64>>| v.as_ref().map(|r| (r[0], r[1]));
        Ok(ResolvedSynth {
            cfg: SynthConfig {
                canvas: self.canvas.or(file.canvas).unwrap_or(base_cfg.canvas),
                sigma: self.sigma.or(file.sigma).unwrap_or(base_cfg.sigma),
                seed: self.seed.or(file.seed).unwrap_or(base_cfg.seed),
                blend: BlendConfig {
                    s_min: self.s_min.or(file.s_min).unwrap_or(base_blend.s_min),
                    s_max: self.s_max.or(file.s_max).unwrap_or(base_blend.s_max),
                    alpha: self.alpha.or(file.alpha).unwrap_or(base_blend.alpha),
                },
            },
            cams: CameraParams {
                per_pose: self
                    .cameras_per_pose
                    .or(file.cameras_per_pose)
                    .unwrap_or(base_cams.per_pose),
                azimuth: pair(&self.azimuth).or(file.azimuth).unwrap_or(base_cams.azimuth),
                elevation: pair(&self.elevation)
                    .or(file.elevation)
                    .unwrap_or(base_cams.elevation),
                distance: self.distance.or(file.distance).unwrap_or(base_cams.distance),
                focal: self.focal.or(file.focal).unwrap_or(base_cams.focal),
            },
            margin: self.margin.or(file.margin).unwrap_or(DEFAULT_MARGIN),
            subsample_mm: self.subsample_mm.or(file.subsample_mm),
            workers: self
                .workers
                .or(file.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize images for every MoCap pose under sampled virtual cameras
    Synth(SynthOpts),
    /// Cluster synthesized poses into a class codebook
    Cluster {
        /// Synthesis manifest to cluster
        #[arg(long)]
        manifest: PathBuf,
        /// Number of classes
        #[arg(long, short)]
        k: usize,
        /// Clustering seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output model path
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted poses against ground truth and write a CSV report
    Eval {
        /// Predictions (synthesis manifest)
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth (synthesis manifest)
        #[arg(long)]
        gt: PathBuf,
        /// Evaluate every n-th ground-truth sample
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Protocol label recorded in the report
        #[arg(long, default_value = "P1")]
        label: String,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Double a corpus by mirroring every image and annotation
    Mirror {
        /// Corpus manifest path (rewritten in place)
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Check a corpus manifest for structural problems
    Validate {
        /// Corpus manifest path
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Re-run one synthesis item and dump its intermediate artifacts as PNGs
    Preview {
        #[command(flatten)]
        opts: SynthOpts,
        /// Item id to preview, e.g. pose_0003_v007
        #[arg(long)]
        id: String,
    },
    /// Generate a deterministic stick-figure corpus plus MoCap poses
    GenTestCorpus {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Number of corpus images
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Canvas side in pixels
        #[arg(long, default_value_t = 220)]
        canvas: u32,
        /// Generation seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of MoCap poses to generate alongside the corpus
        #[arg(long, default_value_t = 50)]
        mocap_count: usize,
    },
}

fn samples_from_manifest(path: &Path) -> Result<Vec<evaluation::EvalSample>> {
    let (_, records) = io::read_synth_manifest(path)?;
    Ok(records
        .into_iter()
        .map(|r| evaluation::EvalSample {
            id: r.id,
            pose3d: r.pose3d,
            pose2d: Some(r.pose2d),
        })
        .collect())
}

fn cmd_synth(opts: &SynthOpts) -> Result<serde_json::Value> {
    let r = opts.resolve()?;
    eprintln!(
        "synth: corpus={} mocap={} workers={}",
        opts.corpus.display(),
        opts.mocap.display(),
        r.workers
    );
    let summary = run_synth(
        &opts.corpus,
        &opts.mocap,
        &opts.out,
        &r.cfg,
        &r.cams,
        r.subsample_mm,
        r.margin,
        r.workers,
    )?;
    Ok(json!({
        "command": "synth",
        "total": summary.total,
        "produced": summary.produced,
        "skipped_existing": summary.skipped_existing,
        "failed": summary.failed,
        "out": opts.out.display().to_string(),
    }))
}

fn cmd_cluster(manifest: &Path, k: usize, seed: u64, out: &Path) -> Result<serde_json::Value> {
    let (skeleton_rel, records) = io::read_synth_manifest(manifest)?;
    let poses3d: Vec<_> = records.iter().map(|r| r.pose3d.clone()).collect();
    let poses2d: Vec<_> = records.iter().map(|r| r.pose2d.clone()).collect();
    let result = clustering::cluster_poses(&poses3d, &poses2d, k, seed)?;
    eprintln!(
        "cluster: k={k} objective={:.3} iterations={}",
        result.objective,
        result.objective_history.len()
    );
    for class in &result.classes {
        eprintln!("  class {:3}: {} members", class.id, class.member_count);
    }
    let model = io::ClusterModel {
        k,
        skeleton: skeleton_rel,
        seed,
        objective: result.objective,
        classes: result.classes,
    };
    io::write_cluster_model(out, &model)?;
    Ok(json!({
        "command": "cluster",
        "k": k,
        "poses": poses3d.len(),
        "objective": model.objective,
        "out": out.display().to_string(),
    }))
}

fn cmd_eval(
    pred: &Path,
    gt: &Path,
    stride: usize,
    label: &str,
    out: &Path,
) -> Result<serde_json::Value> {
    let (skeleton_rel, _) = io::read_synth_manifest(gt)?;
    let base = gt.parent().unwrap_or(Path::new("."));
    let skeleton = io::read_skeleton(&base.join(skeleton_rel))?;
    let predictions = samples_from_manifest(pred)?;
    let ground_truth = samples_from_manifest(gt)?;
    let report = evaluation::run_protocol(&predictions, &ground_truth, stride, label, &skeleton)?;
    io::write_report_csv(out, &report)?;
    Ok(json!({
        "command": "eval",
        "protocol": report.protocol,
        "samples": report.samples.len(),
        "mean_abs_mm": report.mean_abs_mm,
        "mean_rigid_mm": report.mean_rigid_mm,
        "mean_similarity_mm": report.mean_similarity_mm,
        "mean_px": report.mean_px,
        "out": out.display().to_string(),
    }))
}

fn cmd_preview(opts: &SynthOpts, id: &str, out_dir: &Path) -> Result<serde_json::Value> {
    let r = opts.resolve()?;
    // item ids are "{pose_id}_v{index}"; recover the pose and its camera
    let (pose_id, view) = id
        .rsplit_once("_v")
        .and_then(|(p, v)| v.parse::<usize>().ok().map(|v| (p, v)))
        .with_context(|| format!("unknown id {id:?}: expected <pose_id>_v<index>"))?;
    let (_, skeleton, corpus) = io::load_corpus(&opts.corpus)?;
    let records = io::read_mocap_poses(&opts.mocap)?;
    let record = records
        .iter()
        .find(|m| m.id == pose_id)
        .with_context(|| format!("unknown id {id:?}: no MoCap pose {pose_id:?}"))?;
    let cams = sample_virtual_cameras(
        r.cams.per_pose,
        r.cams.azimuth,
        r.cams.elevation,
        r.cams.distance,
        r.cams.focal,
        derive_seed(r.cfg.seed, pose_id),
    )?;
    let cam = cams
        .get(view)
        .with_context(|| format!("unknown id {id:?}: view {view} out of range"))?;
    let index = RetrievalIndex::build(&corpus)?;
    let (out, artifacts) = synthesize_one(
        &skeleton,
        &index,
        &record.pose(),
        cam,
        &r.cfg,
        r.margin,
        id,
        true,
    )?;
    let artifacts = artifacts.expect("artifacts requested");
    let (grays, imap_img, overlay) = render_diagnostics(&artifacts, &out.image, &skeleton);
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (j, g) in grays.iter().enumerate() {
        let name = format!("{id}_prob_j{j:02}.png");
        g.save(out_dir.join(&name))?;
        written.push(name);
    }
    for (img, suffix) in [
        (&imap_img, "index_map"),
        (&artifacts.mosaic, "mosaic"),
        (&out.image, "final"),
        (&overlay, "overlay"),
    ] {
        let name = format!("{id}_{suffix}.png");
        img.save(out_dir.join(&name))?;
        written.push(name);
    }
    Ok(json!({
        "command": "preview",
        "id": id,
        "files": written.len(),
        "out": out_dir.display().to_string(),
    }))
}

fn cmd_gen_test_corpus(
    out: &Path,
    count: usize,
    canvas: u32,
    seed: u64,
    mocap_count: usize,
) -> Result<serde_json::Value> {
    let s = Skeleton::default_13();
    let manifest = stickgen::generate_stick_corpus(out, count, &s, canvas, seed)?;
    let mocap_path = out.join("mocap_poses");
    let poses = stickgen::generate_mocap_poses(&mocap_path, mocap_count, derive_seed(seed, "mocap"))?;
    Ok(json!({
        "command": "gen-test-corpus",
        "images": manifest.records.len(),
        "mocap_poses": poses.len(),
        "manifest": out.join("manifest").display().to_string(),
        "mocap": mocap_path.display().to_string(),
    }))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Synth(opts) => cmd_synth(opts),
        Command::Cluster { manifest, k, seed, out } => cmd_cluster(manifest, *k, *seed, out),
        Command::Eval {
            pred,
            gt,
            stride,
            label,
            out,
        } => cmd_eval(pred, gt, *stride, label, out),
        Command::Mirror { manifest } => {
            let added = io::mirror_corpus(manifest)?;
            Ok(json!({
                "command": "mirror",
                "added": added,
                "manifest": manifest.display().to_string(),
            }))
        }
        Command::Validate { manifest } => {
            let violations = io::validate_manifest(manifest)?;
            for v in &violations {
                eprintln!("violation: {v}");
            }
            if !violations.is_empty() {
                println!(
                    "{}",
                    json!({
                        "command": "validate",
                        "ok": false,
                        "violations": violations.len(),
                    })
                );
                bail!("validation failed");
            }
            Ok(json!({ "command": "validate", "ok": true, "violations": 0 }))
        }
        Command::Preview { opts, id } => cmd_preview(opts, id, &opts.out),
        Command::GenTestCorpus {
            out,
            count,
            canvas,
            seed,
            mocap_count,
        } => cmd_gen_test_corpus(out, *count, *canvas, *seed, *mocap_count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let validation = matches!(&cli.command, Command::Validate { .. });
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::from(0)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
