//! Procedural scenes and camera rigs.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{logit, Camera, CameraIntrinsics, CameraPose, Gaussian};
use crate::{Error, Result};

/// A generating Gaussian cloud plus its world extent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub gt_cloud: Vec<Gaussian>,
    /// World-unit scale of the scene, used for densification thresholds.
    pub extent: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Random anisotropic blobs filling a unit box around the origin.
    BlobField,
    /// A thin z = 0 plane tiled with checkerboard-colored Gaussians.
    TexturedPlane,
}

/// Deterministically generates `n` Gaussians of the requested kind.
pub fn gen_scene(kind: SceneKind, n: usize, seed: u64) -> Result<SyntheticScene> {
    if n == 0 {
        return Err(Error::EmptyInput("scene needs at least one gaussian".into()));
    }
    let gt_cloud = match kind {
        SceneKind::BlobField => blob_field(n, seed),
        SceneKind::TexturedPlane => textured_plane(n),
    };
    let extent = cloud_extent(&gt_cloud);
    Ok(SyntheticScene { gt_cloud, extent, seed })
}

fn blob_field(n: usize, seed: u64) -> Vec<Gaussian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mu = Vector3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let raw_scale = Vector3::new(
                rng.gen_range(0.02f64..0.08).ln(),
                rng.gen_range(0.02f64..0.08).ln(),
                rng.gen_range(0.02f64..0.08).ln(),
            );
            let q = [
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
            ];
            let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            let rotation = if norm > 1e-6 {
                [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm]
            } else {
                [1.0, 0.0, 0.0, 0.0]
            };
            let color = Vector3::new(
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            );
            let opacity = rng.gen_range(0.6..0.95);
            Gaussian {
                mu,
                raw_opacity: logit(opacity),
                raw_scale,
                rotation,
                color,
            }
        })
        .collect()
}

fn textured_plane(n: usize) -> Vec<Gaussian> {
    let side = (n as f64).sqrt().ceil() as usize;
    let spacing = 1.0 / side as f64;
    let light = Vector3::new(0.9, 0.9, 0.85);
    let dark = Vector3::new(0.12, 0.12, 0.18);
    (0..n)
        .map(|k| {
            let (i, j) = (k % side, k / side);
            let mu = Vector3::new(
                (i as f64 + 0.5) * spacing - 0.5,
                (j as f64 + 0.5) * spacing - 0.5,
                0.0,
            );
            let s_xy = (0.35 * spacing).ln();
            Gaussian {
                mu,
                raw_opacity: logit(0.9),
                raw_scale: Vector3::new(s_xy, s_xy, (0.01 * spacing).ln()),
                rotation: [1.0, 0.0, 0.0, 0.0],
                color: if (i + j) % 2 == 0 { light } else { dark },
            }
        })
        .collect()
}

/// Extent from the generating centers: bounding-box diagonal plus the
/// largest 3-sigma reach, floored so a one-Gaussian scene still has a
/// usable scale.
fn cloud_extent(cloud: &[Gaussian]) -> f64 {
    let mut min = cloud[0].mu;
    let mut max = cloud[0].mu;
    let mut reach = 0.0f64;
    for g in cloud {
        min = min.inf(&g.mu);
        max = max.sup(&g.mu);
        reach = reach.max(3.0 * g.scale().max());
    }
    ((max - min).norm() + 2.0 * reach).max(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKind {
    /// Horizontal arc facing a target, mimicking forward-facing capture.
    ForwardArc,
}

/// Cameras evenly spread over a 60-degree horizontal arc of the given
/// radius, all aimed at `target`, with `fx = fy = 0.9 * width`.
pub fn gen_rig(
    kind: RigKind,
    n_views: usize,
    radius: f64,
    target: Vector3<f64>,
    width: usize,
    height: usize,
) -> Result<Vec<Camera>> {
    let RigKind::ForwardArc = kind;
    if n_views == 0 {
        return Err(Error::NoCameras);
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("rig radius {radius} must be positive")));
    }
    let f = 0.9 * width as f64;
    let intrinsics =
        CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)?;
    let arc = 60.0f64.to_radians();
    (0..n_views)
        .map(|i| {
            let theta = if n_views == 1 {
                0.0
            } else {
                -arc / 2.0 + arc * i as f64 / (n_views - 1) as f64
            };
            let center = target + radius * Vector3::new(theta.sin(), 0.0, -theta.cos());
            let pose = CameraPose::look_at(center, target, Vector3::new(0.0, 1.0, 0.0));
            pose.validate()?;
            Ok(Camera { intrinsics, pose })
        })
        .collect()
}

/// The rig used throughout the tests: 8 views, radius 2.5, 64x64 pixels,
/// aimed at the origin where the synthetic scenes live.
pub fn default_rig() -> Vec<Camera> {
    gen_rig(RigKind::ForwardArc, 8, 2.5, Vector3::zeros(), 64, 64).unwrap()
}

/// Scene extent derived from the capture: 1.1 times the largest distance
/// of any camera center from their centroid, floored at 0.5 world units
/// so single-camera setups stay usable.
pub fn scene_extent_from_cameras(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 0.5;
    }
    let centroid: Vector3<f64> =
        cameras.iter().map(|c| c.pose.center).sum::<Vector3<f64>>() / cameras.len() as f64;
    let max_dist = cameras
        .iter()
        .map(|c| (c.pose.center - centroid).norm())
        .fold(0.0f64, f64::max);
    (1.1 * max_dist).max(0.5)
}
