//! 3D source preparation: pose subsampling, virtual camera sampling,
//! orientation/centering and projection to normalized 2D query poses.

use crate::model::{dist3, Camera, Pose2D, Pose3D, Skeleton, Transform2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MocapError {
    #[error("elevation range [{0}, {1}] exceeds [-90, 90]")]
    InvalidRange(f64, f64),
    #[error("joint {0} is behind the camera")]
    BehindCamera(usize),
    #[error("all visible joints coincide")]
    DegeneratePose,
}

/// A 3D pose in camera coordinates, translated so the torso center sits at
/// the origin. Viewpoint is baked into the coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedPose {
    pub pose3d: Pose3D,
    pub camera: Camera,
}

/// A projected pose normalized onto the synthesis canvas, with the crop
/// transform that took it there.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPose {
    pub pose2d: Pose2D,
    pub crop: Transform2D,
}

/// Greedy scan in input order: a pose is kept iff, for every already-kept
/// pose, at least one joint moved by `min_dist` or more. Returns kept indices.
pub fn subsample_poses(poses: &[Pose3D], min_dist: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (bi, b) in poses.iter().enumerate() {
        let far_from_all = kept.iter().all(|&ai| {
            let a = &poses[ai];
            let max_joint_dist = a
                .joints
                .iter()
                .zip(&b.joints)
                .map(|(&ja, &jb)| dist3(ja, jb))
                .fold(0.0, f64::max);
            max_joint_dist >= min_dist
        });
        if far_from_all {
            kept.push(bi);
        }
    }
    kept
}

/// Sample `count` cameras with azimuth and elevation drawn uniformly from the
/// given degree ranges. Deterministic for a given seed.
pub fn sample_virtual_cameras(
    count: usize,
    azimuth_range: (f64, f64),
    elevation_range: (f64, f64),
    distance: f64,
    focal: f64,
    seed: u64,
) -> Result<Vec<Camera>, MocapError> {
    if elevation_range.0 < -90.0 || elevation_range.1 > 90.0 {
        return Err(MocapError::InvalidRange(
            elevation_range.0,
            elevation_range.1,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    Ok((0..count)
        .map(|_| {
            let azimuth = sample(&mut rng, azimuth_range);
            let elevation = sample(&mut rng, elevation_range);
            Camera {
                azimuth,
                elevation,
                distance,
                focal,
            }
        })
        .collect())
}

fn rotation_rows(cam: &Camera) -> [[f64; 3]; 3] {
    // World-to-camera: azimuth about the vertical (y) axis, then elevation
    // about the camera x axis. Camera frame is x right, y down, z forward.
    let az = cam.azimuth.to_radians();
    let el = cam.elevation.to_radians();
    let (sa, ca) = az.sin_cos();
    let (se, ce) = el.sin_cos();
    // R_x(el) * R_y(az)
    [
        [ca, 0.0, sa],
        [se * sa, ce, -se * ca],
        [-ce * sa, se, ce * ca],
    ]
}

/// Rotate a torso-centered pose into the camera frame. The torso center of
/// the output is the origin.
pub fn orient_and_center(p: &Pose3D, cam: &Camera, s: &Skeleton) -> OrientedPose {
    let c = p.torso_center(&s.torso_joints);
    let r = rotation_rows(cam);
    let joints = p
        .joints
        .iter()
        .map(|&(x, y, z)| {
            let v = (x - c.0, y - c.1, z - c.2);
            (
                r[0][0] * v.0 + r[0][1] * v.1 + r[0][2] * v.2,
                r[1][0] * v.0 + r[1][1] * v.1 + r[1][2] * v.2,
                r[2][0] * v.0 + r[2][1] * v.1 + r[2][2] * v.2,
            )
        })
        .collect();
    OrientedPose {
        pose3d: Pose3D { joints },
        camera: *cam,
    }
}

/// Pinhole projection of an oriented pose. The camera sits `distance` mm
/// behind the torso center on the optical axis; the principal point is the
/// origin. All joints come out visible.
pub fn project(op: &OrientedPose) -> Result<Pose2D, MocapError> {
    let d = op.camera.distance;
    let f = op.camera.focal;
    let mut joints = Vec::with_capacity(op.pose3d.len());
    for (k, &(x, y, z)) in op.pose3d.joints.iter().enumerate() {
        let depth = z + d;
        if depth <= 0.0 {
            return Err(MocapError::BehindCamera(k));
        }
        joints.push((f * x / depth, f * y / depth));
    }
    Ok(Pose2D::all_visible(joints))
}

/// Uniform scale + translation placing the tight bounding box of the visible
/// joints centered in the canvas, larger side scaled to `canvas - 2*margin`.
pub fn normalize_crop(p2d: &Pose2D, canvas: u32, margin: f64) -> Result<QueryPose, MocapError> {
    let visible: Vec<(f64, f64)> = p2d
        .joints
        .iter()
        .zip(&p2d.visibility)
        .filter(|(_, &v)| v)
        .map(|(&j, _)| j)
        .collect();
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in &visible {
        min_x = min_x.min(*x);
        min_y = min_y.min(*y);
        max_x = max_x.max(*x);
        max_y = max_y.max(*y);
    }
    let extent = (max_x - min_x).max(max_y - min_y);
    if visible.len() < 2 || extent <= 0.0 {
        return Err(MocapError::DegeneratePose);
    }
    let canvas = canvas as f64;
    let scale = (canvas - 2.0 * margin) / extent;
    let box_center = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let target = (canvas / 2.0, canvas / 2.0);
    let crop = Transform2D::scale_translate(
        scale,
        (
            target.0 - scale * box_center.0,
            target.1 - scale * box_center.1,
        ),
    );
    // Snap coordinates to a 2^-26 px grid: canvas coordinates then occupy at
    // most 37 significand bits, so reflections like (w-1) - x are exact and
    // mirroring stays a bit-exact involution. The perturbation is < 1e-8 px.
    let snap = |v: f64| (v * GRID).round() / GRID;
    let mut pose2d = crop.apply_pose(p2d);
    for j in pose2d.joints.iter_mut() {
        *j = (snap(j.0), snap(j.1));
    }
    Ok(QueryPose { pose2d, crop })
}

const GRID: f64 = (1u64 << 26) as f64;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Skeleton;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn rand_pose(rng: &mut impl Rng, n: usize, spread: f64) -> Pose3D {
        Pose3D {
            joints: (0..n)
                .map(|_| {
                    (
                        rng.gen_range(-spread..spread),
                        rng.gen_range(-spread..spread),
                        rng.gen_range(-spread..spread),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn duplicate_pose_rejected() {
        let p = Pose3D {
            joints: vec![(0.0, 0.0, 0.0); 13],
        };
        assert_eq!(subsample_poses(&[p.clone(), p], 50.0), vec![0]);
    }

    #[test]
    fn single_far_joint_suffices() {
        let a = Pose3D {
            joints: vec![(0.0, 0.0, 0.0); 13],
        };
        let mut b = a.clone();
        b.joints[5] = (60.0, 0.0, 0.0); // one wrist moved 60 mm
        assert_eq!(subsample_poses(&[a, b], 50.0), vec![0, 1]);
    }

    #[test]
    fn tiny_threshold_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let poses: Vec<Pose3D> = (0..100).map(|_| rand_pose(&mut rng, 13, 500.0)).collect();
        let kept = subsample_poses(&poses, 0.001);
        assert_eq!(kept.len(), 100);
        // Oracle: exhaustive pairwise max-joint distances all exceed the threshold.
        for i in 0..poses.len() {
            for j in 0..i {
                let max_d = poses[i]
                    .joints
                    .iter()
                    .zip(&poses[j].joints)
                    .map(|(&a, &b)| dist3(a, b))
                    .fold(0.0, f64::max);
                assert!(max_d >= 0.001);
            }
        }
    }

    #[test]
    fn subsample_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let poses: Vec<Pose3D> = (0..50).map(|_| rand_pose(&mut rng, 13, 100.0)).collect();
        let kept = subsample_poses(&poses, 80.0);
        let survivors: Vec<Pose3D> = kept.iter().map(|&i| poses[i].clone()).collect();
        let again = subsample_poses(&survivors, 80.0);
        assert_eq!(again, (0..survivors.len()).collect::<Vec<_>>());
    }

    #[test]
    fn camera_sampling_ranges_and_determinism() {
        let cams =
            sample_virtual_cameras(180, (0.0, 360.0), (-45.0, 45.0), 5000.0, 1100.0, 7).unwrap();
        assert_eq!(cams.len(), 180);
        for c in &cams {
            assert!((0.0..360.0).contains(&c.azimuth));
            assert!((-45.0..=45.0).contains(&c.elevation));
        }
        let again =
            sample_virtual_cameras(180, (0.0, 360.0), (-45.0, 45.0), 5000.0, 1100.0, 7).unwrap();
        assert_eq!(cams, again);
    }

    #[test]
    fn degenerate_range_pins_camera() {
        let cams =
            sample_virtual_cameras(1, (90.0, 90.0), (0.0, 0.0), 5000.0, 1100.0, 0).unwrap();
        assert_eq!(cams.len(), 1);
        assert_eq!(cams[0].azimuth, 90.0);
        assert_eq!(cams[0].elevation, 0.0);
    }

    #[test]
    fn out_of_range_elevation_rejected() {
        let err = sample_virtual_cameras(1, (0.0, 360.0), (-100.0, 45.0), 5000.0, 1100.0, 0);
        assert!(matches!(err, Err(MocapError::InvalidRange(_, _))));
    }

    fn torso_chain_skeleton() -> Skeleton {
        Skeleton {
            joints: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![(0, 1), (1, 2)],
            left_right_pairs: vec![],
            torso_joints: vec![0, 1, 2],
            root: 0,
        }
    }

    #[test]
    fn identity_camera_leaves_centered_pose() {
        let s = torso_chain_skeleton();
        let p = Pose3D {
            joints: vec![(-100.0, 0.0, 0.0), (0.0, 0.0, 0.0), (100.0, 0.0, 0.0)],
        };
        let cam = Camera {
            azimuth: 0.0,
            elevation: 0.0,
            distance: 5000.0,
            focal: 1100.0,
        };
        let op = orient_and_center(&p, &cam, &s);
        assert_eq!(op.pose3d, p);
    }

    #[test]
    fn torso_center_lands_on_origin() {
        let s = torso_chain_skeleton();
        let p = Pose3D {
            joints: vec![(37.0, -12.0, 400.0), (-5.0, 90.0, 12.0), (0.5, 3.0, -8.0)],
        };
        let cam = Camera {
            azimuth: 123.0,
            elevation: -31.0,
            distance: 5000.0,
            focal: 1100.0,
        };
        let op = orient_and_center(&p, &cam, &s);
        let c = op.pose3d.torso_center(&s.torso_joints);
        assert!(c.0.abs() < 1e-6 && c.1.abs() < 1e-6 && c.2.abs() < 1e-6);
    }

    #[test]
    fn azimuth_180_flips_depth_axis() {
        let s = Skeleton {
            torso_joints: vec![0],
            ..torso_chain_skeleton()
        };
        let p = Pose3D {
            joints: vec![(0.0, 0.0, 0.0), (0.0, 0.0, 100.0), (0.0, 0.0, 200.0)],
        };
        let cam = Camera {
            azimuth: 180.0,
            elevation: 0.0,
            distance: 5000.0,
            focal: 1100.0,
        };
        let op = orient_and_center(&p, &cam, &s);
        assert_relative_eq!(op.pose3d.joints[1].2, -100.0, epsilon = 1e-9);
        assert_relative_eq!(op.pose3d.joints[2].2, -200.0, epsilon = 1e-9);
    }

    fn cam(focal: f64, distance: f64) -> Camera {
        Camera {
            azimuth: 0.0,
            elevation: 0.0,
            distance,
            focal,
        }
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let op = OrientedPose {
            pose3d: Pose3D {
                joints: vec![(0.0, 0.0, 0.0)],
            },
            camera: cam(1000.0, 3000.0),
        };
        let p = project(&op).unwrap();
        assert_eq!(p.joints[0], (0.0, 0.0));
    }

    #[test]
    fn lateral_offset_projects_proportionally() {
        let op = OrientedPose {
            pose3d: Pose3D {
                joints: vec![(300.0, 0.0, 0.0)],
            },
            camera: cam(1000.0, 3000.0),
        };
        let p = project(&op).unwrap();
        assert_relative_eq!(p.joints[0].0, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn doubling_focal_doubles_offsets() {
        let pose = Pose3D {
            joints: vec![(300.0, -150.0, 250.0), (-80.0, 40.0, -900.0)],
        };
        let p1 = project(&OrientedPose {
            pose3d: pose.clone(),
            camera: cam(1000.0, 3000.0),
        })
        .unwrap();
        let p2 = project(&OrientedPose {
            pose3d: pose,
            camera: cam(2000.0, 3000.0),
        })
        .unwrap();
        for (a, b) in p1.joints.iter().zip(&p2.joints) {
            assert_relative_eq!(2.0 * a.0, b.0, epsilon = 1e-9);
            assert_relative_eq!(2.0 * a.1, b.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn behind_camera_rejected() {
        let op = OrientedPose {
            pose3d: Pose3D {
                joints: vec![(0.0, 0.0, -4000.0)],
            },
            camera: cam(1000.0, 3000.0),
        };
        assert_eq!(project(&op), Err(MocapError::BehindCamera(0)));
    }

    #[test]
    fn crop_identity_when_already_framed() {
        // Box centered at 110 with larger side exactly canvas - 2*margin.
        let p = Pose2D::all_visible(vec![(10.0, 60.0), (210.0, 160.0)]);
        let qp = normalize_crop(&p, 220, 10.0).unwrap();
        assert_relative_eq!(qp.crop.scale, 1.0, epsilon = 1e-9);
        assert_relative_eq!(qp.crop.translation.0, 0.0, epsilon = 1e-9);
        assert_relative_eq!(qp.crop.translation.1, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn crop_scale_from_tall_pose() {
        let p = Pose2D::all_visible(vec![(100.0, 0.0), (120.0, 440.0)]);
        let qp = normalize_crop(&p, 220, 10.0).unwrap();
        assert_relative_eq!(qp.crop.scale, 200.0 / 440.0, epsilon = 1e-12);
    }

    #[test]
    fn crop_keeps_joints_inside_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 13;
            let joints: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)))
                .collect();
            let p = Pose2D::all_visible(joints);
            let Ok(qp) = normalize_crop(&p, 220, 10.0) else {
                continue;
            };
            for (k, &(x, y)) in qp.pose2d.joints.iter().enumerate() {
                if qp.pose2d.visible(k) {
                    assert!(x >= 10.0 - 1e-6 && x <= 210.0 + 1e-6);
                    assert!(y >= 10.0 - 1e-6 && y <= 210.0 + 1e-6);
                }
            }
        }
    }

    #[test]
    fn coincident_joints_are_degenerate() {
        let p = Pose2D::all_visible(vec![(5.0, 5.0), (5.0, 5.0)]);
        assert_eq!(normalize_crop(&p, 220, 10.0), Err(MocapError::DegeneratePose));
    }

    #[test]
    fn azimuth_shift_equals_world_rotation() {
        // Rotating the camera azimuth by delta matches rotating the world pose
        // by -delta about the vertical axis.
        let s = torso_chain_skeleton();
        let p = Pose3D {
            joints: vec![(-120.0, 30.0, 45.0), (10.0, -80.0, 0.0), (200.0, 50.0, -90.0)],
        };
        let delta: f64 = 37.0;
        let base = Camera {
            azimuth: 10.0,
            elevation: 20.0,
            distance: 5000.0,
            focal: 1100.0,
        };
        let shifted = Camera {
            azimuth: base.azimuth + delta,
            ..base
        };
        // -delta about the up axis is +delta about y (y points down).
        let (sd, cd) = delta.to_radians().sin_cos();
        let rotated = Pose3D {
            joints: p
                .joints
                .iter()
                .map(|&(x, y, z)| (cd * x + sd * z, y, -sd * x + cd * z))
                .collect(),
        };
        let a = project(&orient_and_center(&p, &shifted, &s)).unwrap();
        let b = project(&orient_and_center(&rotated, &base, &s)).unwrap();
        for (ja, jb) in a.joints.iter().zip(&b.joints) {
            assert_relative_eq!(ja.0, jb.0, epsilon = 1e-6);
            assert_relative_eq!(ja.1, jb.1, epsilon = 1e-6);
        }
    }

    #[test]
    fn projection_preserves_collinearity_at_fixed_depth() {
        let op = OrientedPose {
            pose3d: Pose3D {
                joints: vec![(0.0, 0.0, 100.0), (50.0, 25.0, 100.0), (100.0, 50.0, 100.0)],
            },
            camera: cam(1100.0, 5000.0),
        };
        let p = project(&op).unwrap();
        let (a, b, c) = (p.joints[0], p.joints[1], p.joints[2]);
        let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        assert!(cross.abs() < 1e-6);
    }
}
