//! Splatting eligible points into per-view sparse depth maps.

use std::collections::BTreeMap;

use crate::core::{world_to_camera, Camera, DepthMap};
use crate::{Error, Result};

use super::colmap::SfmModel;

/// Projects the depth-eligible points observed by view `view_id` into a
/// sparse depth map.
///
/// Each eligible point whose track contains the view writes its camera-z
/// depth at the pixel of its keypoint in that view, rounded to the nearest
/// integer pixel. Collisions keep the smaller depth. Points at or behind
/// the camera are skipped; the skip count is returned and logged. Pixels
/// with no point stay 0, meaning "no supervision here".
pub fn project_sparse_depth(
    model: &SfmModel,
    view_id: u64,
    eligible: &BTreeMap<u64, bool>,
) -> Result<(DepthMap, usize)> {
    let image = model
        .images
        .get(&view_id)
        .ok_or_else(|| Error::InvalidModel(format!("no image with id {view_id}")))?;
    let intr = model
        .cameras
        .get(&image.camera_id)
        .ok_or_else(|| Error::InvalidModel(format!("no camera with id {}", image.camera_id)))?;
    let camera = Camera { intrinsics: *intr, pose: image.pose() };

    let mut depth = DepthMap::new(intr.width, intr.height);
    let mut behind = 0usize;
    for (id, point) in &model.points {
        if !eligible.get(id).copied().unwrap_or(false) {
            continue;
        }
        for &(track_image, kp) in &point.track {
            if track_image != view_id {
                continue;
            }
            let (x, y, _) = image.keypoints[kp];
            let px = x.round();
            let py = y.round();
            if px < 0.0 || py < 0.0 || px >= intr.width as f64 || py >= intr.height as f64 {
                continue;
            }
            let z = world_to_camera(&point.xyz, &camera.pose).z;
            if z <= 0.0 {
                behind += 1;
                continue;
            }
            let (ix, iy) = (px as usize, py as usize);
            let current = depth.get(ix, iy);
            if current == 0.0 || z < current {
                depth.set(ix, iy, z);
            }
        }
    }
    if behind > 0 {
        log::warn!(
            "view {view_id} ({}): skipped {behind} point observation(s) behind the camera",
            image.name
        );
    }
    Ok((depth, behind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfm::{filter_match_error, parse_colmap_text, testutil, MATCH_ERROR_TAU};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use tempfile::TempDir;

    fn fixture() -> crate::sfm::SfmModel {
        let dir = TempDir::new().unwrap();
        testutil::write_fixture(dir.path());
        let mut m = parse_colmap_text(dir.path()).unwrap();
        m.label_pseudo_by_prefix("pseudo_");
        m
    }

    fn all_eligible(m: &crate::sfm::SfmModel) -> BTreeMap<u64, bool> {
        m.points.keys().map(|&id| (id, true)).collect()
    }

    #[test]
    fn keypoint_rounds_to_nearest_pixel() {
        let m = fixture();
        // Point 2 sits at keypoint (10.2, 20.7) in view 1 with camera z 3.5.
        let (d, behind) = project_sparse_depth(&m, 1, &all_eligible(&m)).unwrap();
        assert_eq!(behind, 0);
        assert_relative_eq!(d.get(10, 21), 3.5, epsilon = 1e-9);
    }

    #[test]
    fn ineligible_and_untracked_points_leave_zeros() {
        let m = fixture();
        let flags = filter_match_error(&m, MATCH_ERROR_TAU);
        let (d, _) = project_sparse_depth(&m, 1, &flags).unwrap();
        // Point 1 (eligible, tracked) lands at its rounded keypoint with z 3.5.
        assert_relative_eq!(d.get(32, 23), 3.5, epsilon = 1e-9);
        // Point 2 is tracked here but fails the match-error filter.
        assert_eq!(d.get(10, 21), 0.0);
        // Point 3 projects into this view but has no track entry for it.
        assert_eq!(d.get(37, 17), 0.0);
        assert_eq!(d.valid_count(), 1);
    }

    #[test]
    fn depth_equals_camera_z() {
        let m = fixture();
        let (d, _) = project_sparse_depth(&m, 2, &all_eligible(&m)).unwrap();
        // Point 1 in the rotated view: camera z = 2.525 at keypoint (30, 24).
        let cam = crate::core::Camera {
            intrinsics: m.cameras[&1],
            pose: m.images[&2].pose(),
        };
        let z = world_to_camera(&m.points[&1].xyz, &cam.pose).z;
        assert_relative_eq!(d.get(30, 24), z, epsilon = 1e-9);
        assert_relative_eq!(z, 2.525, epsilon = 1e-12);
    }

    #[test]
    fn colliding_points_keep_smaller_depth() {
        let mut m = fixture();
        // Move point 3's observation onto point 1's pixel in view 2 and put
        // it closer to the camera.
        m.images.get_mut(&2).unwrap().keypoints[1] = (30.2, 23.8, 3);
        m.points.get_mut(&3).unwrap().xyz = Vector3::new(1.0, 0.0, 2.5);
        let z3 = world_to_camera(&m.points[&3].xyz, &m.images[&2].pose()).z;
        let z1 = world_to_camera(&m.points[&1].xyz, &m.images[&2].pose()).z;
        assert!(z3 < z1 && z3 > 0.0);
        let (d, _) = project_sparse_depth(&m, 2, &all_eligible(&m)).unwrap();
        assert_relative_eq!(d.get(30, 24), z3, epsilon = 1e-9);
    }

    #[test]
    fn behind_camera_observation_is_counted() {
        let mut m = fixture();
        // Put point 2 behind view 1 (camera center z = -2.5, looking +z).
        m.points.get_mut(&2).unwrap().xyz = Vector3::new(0.0, 0.0, -4.0);
        let (d, behind) = project_sparse_depth(&m, 1, &all_eligible(&m)).unwrap();
        assert_eq!(behind, 1);
        assert_eq!(d.get(10, 21), 0.0);
    }

    #[test]
    fn unknown_view_errors() {
        let m = fixture();
        assert!(project_sparse_depth(&m, 99, &all_eligible(&m)).is_err());
    }
}
