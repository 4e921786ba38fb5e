//! Image-based synthesis of pose-annotated training images.
//!
//! The pipeline takes a corpus of real images with 2D joint annotations and a
//! library of 3D poses, and produces synthetic images of humans in novel poses
//! with exact 3D annotations. For every joint of a projected query pose it
//! retrieves the corpus image whose annotated pose locally matches best, warps
//! the candidates onto a common canvas, selects a source per pixel via
//! rasterized probability maps, and blends the result with pose-aware weights
//! so patch seams disappear.
//!
//! Supporting machinery: pose-space k-means quantization with centroid
//! decoding, 3D/2D evaluation metrics, canonical line-delimited file formats,
//! and a deterministic synthetic stick-figure corpus generator for end-to-end
//! testing without licensed datasets.

pub mod blending;
pub mod clustering;
pub mod evaluation;
pub mod io;
pub mod mocap;
pub mod model;
pub mod mosaic;
pub mod pipeline;
pub mod retrieval;
pub mod stickgen;

pub use model::{
    AnnotatedImage, BlendConfig, Camera, Pose2D, Pose3D, Skeleton, SynthConfig, Transform2D,
};
