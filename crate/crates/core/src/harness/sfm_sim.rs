//! A simulated sparse-reconstruction provider: samples surface points from
//! a known scene, builds visibility-aware tracks, and perturbs keypoints
//! with Gaussian noise whose RMS becomes the match error.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::core::world_to_camera;
use crate::raster::{project_sorted, transmittance_at_depth, NEAR_PLANE};
use crate::sfm::{SfmImage, SfmModel, SfmPoint3D, SfmProvider, SfmView};
use crate::{Error, Result};

use super::scene::SyntheticScene;

/// A point is considered visible in a view when at least this much
/// transmittance remains in front of it under the ground-truth render.
const VISIBLE_TRANSMITTANCE: f64 = 0.5;

/// A reconstruction keeps a point only when this many views corroborate
/// it, mirroring the two-view floor of triangulation.
const MIN_TRACK: usize = 2;

/// Avalanche mix so every (candidate, view) pair gets its own stream.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Builds a reconstruction of `scene` as seen from `views`.
///
/// One candidate point is sampled per ground-truth Gaussian: the center
/// plus a jitter inside the 1-sigma ellipsoid. A view observes a candidate
/// when it projects inside the image, is unoccluded, and survives an
/// independent per-observation dropout draw; candidates observed by fewer
/// than two views are omitted, so widening the view set can only grow the
/// model. Every draw is keyed on (seed, candidate, view), making each
/// observation independent of which other views were requested. Keypoints
/// are the exact projections plus per-axis Gaussian noise of standard
/// deviation `noise_px`; a point's `reproj_error` is the RMS of its
/// injected noise components.
pub fn synthetic_sfm(
    scene: &SyntheticScene,
    views: &[SfmView],
    noise_px: f64,
    dropout: f64,
    seed: u64,
) -> Result<SfmModel> {
    if views.is_empty() {
        return Err(Error::NoCameras);
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::InvalidConfig(format!("dropout must be in [0, 1], got {dropout}")));
    }

    let mut model = SfmModel::default();
    for view in views {
        view.camera.intrinsics.validate()?;
        view.camera.pose.validate()?;
        if model.images.contains_key(&view.image_id) {
            return Err(Error::InvalidConfig(format!(
                "duplicate image id {} in sfm request",
                view.image_id
            )));
        }
        let r = view.camera.pose.rotation_matrix();
        let t = -(r * view.camera.pose.center);
        let q = view.camera.pose.rotation.normalize();
        model.cameras.insert(view.image_id, view.camera.intrinsics);
        model.images.insert(
            view.image_id,
            SfmImage {
                name: view.name.clone(),
                camera_id: view.image_id,
                qvec: [q.w, q.i, q.j, q.k],
                tvec: [t.x, t.y, t.z],
                keypoints: Vec::new(),
            },
        );
        match view.kind {
            crate::losses::ViewKind::Training => model.training_image_ids.insert(view.image_id),
            crate::losses::ViewKind::Pseudo => model.pseudo_image_ids.insert(view.image_id),
        };
    }

    // Ground-truth splats per view for occlusion checks.
    let splats: BTreeMap<u64, _> = views
        .iter()
        .map(|v| (v.image_id, project_sorted(&scene.gt_cloud, &v.camera)))
        .collect();

    let mut next_point_id = 1u64;
    for (gi, g) in scene.gt_cloud.iter().enumerate() {
        // Jitter uniformly inside the 1-sigma ellipsoid, from a stream
        // owned by this candidate alone.
        let mut point_rng = ChaCha8Rng::seed_from_u64(mix(seed, gi as u64 + 1, 0));
        let unit = loop {
            let v = Vector3::new(
                point_rng.gen_range(-1.0f64..1.0),
                point_rng.gen_range(-1.0f64..1.0),
                point_rng.gen_range(-1.0f64..1.0),
            );
            if v.norm_squared() <= 1.0 {
                break v;
            }
        };
        let p = g.mu + g.rotation_matrix() * g.scale().component_mul(&unit);

        let mut observations = Vec::new();
        let mut noise_sq = 0.0;
        for view in views {
            let cam = &view.camera;
            let x_cam = world_to_camera(&p, &cam.pose);
            if x_cam.z <= NEAR_PLANE {
                continue;
            }
            let u = cam.intrinsics.fx * x_cam.x / x_cam.z + cam.intrinsics.cx;
            let v = cam.intrinsics.fy * x_cam.y / x_cam.z + cam.intrinsics.cy;
            if u < 0.0 || v < 0.0 || u >= cam.width() as f64 || v >= cam.height() as f64 {
                continue;
            }
            let t = transmittance_at_depth(&splats[&view.image_id], u, v, x_cam.z, Some(gi));
            if t <= VISIBLE_TRANSMITTANCE {
                continue;
            }
            let mut obs_rng =
                ChaCha8Rng::seed_from_u64(mix(seed, gi as u64 + 1, view.image_id.wrapping_add(1)));
            if obs_rng.gen::<f64>() < dropout {
                continue;
            }
            let (n1, n2) = if noise_px > 0.0 {
                let a: f64 = obs_rng.sample(StandardNormal);
                let b: f64 = obs_rng.sample(StandardNormal);
                (noise_px * a, noise_px * b)
            } else {
                (0.0, 0.0)
            };
            noise_sq += n1 * n1 + n2 * n2;
            observations.push((view.image_id, u + n1, v + n2));
        }
        if observations.len() < MIN_TRACK {
            continue;
        }

        let mut track = Vec::new();
        for (image_id, kx, ky) in observations {
            let image = model.images.get_mut(&image_id).unwrap();
            image.keypoints.push((kx, ky, next_point_id as i64));
            track.push((image_id, image.keypoints.len() - 1));
        }
        let reproj_error = (noise_sq / (2 * track.len()) as f64).sqrt();
        let rgb = [
            (g.color.x.clamp(0.0, 1.0) * 255.0).round() as u8,
            (g.color.y.clamp(0.0, 1.0) * 255.0).round() as u8,
            (g.color.z.clamp(0.0, 1.0) * 255.0).round() as u8,
        ];
        model.points.insert(
            next_point_id,
            SfmPoint3D { id: next_point_id, xyz: p, rgb, reproj_error, track },
        );
        next_point_id += 1;
    }

    model.validate()?;
    Ok(model)
}

/// [`SfmProvider`] over a fixed synthetic scene.
pub struct SyntheticSfmProvider {
    pub scene: SyntheticScene,
    pub noise_px: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl SfmProvider for SyntheticSfmProvider {
    fn run(&self, views: &[SfmView]) -> Result<SfmModel> {
        synthetic_sfm(&self.scene, views, self.noise_px, self.dropout, self.seed)
    }
}
