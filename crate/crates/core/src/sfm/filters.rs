//! Point filters applied between reconstruction and depth supervision.

use std::collections::{BTreeMap, BTreeSet};

use super::colmap::SfmModel;

/// Reprojection-error cutoff in pixels for depth eligibility.
pub const MATCH_ERROR_TAU: f64 = 2.0;

/// Marks each point depth-eligible iff its reprojection error is known
/// (non-negative) and strictly below `tau`. No points are removed; an
/// ineligible point still seeds the cloud, it just contributes no sparse
/// depth.
pub fn filter_match_error(model: &SfmModel, tau: f64) -> BTreeMap<u64, bool> {
    model
        .points
        .iter()
        .map(|(&id, p)| (id, p.reproj_error >= 0.0 && p.reproj_error < tau))
        .collect()
}

/// Removes every point whose track consists entirely of pseudo views, then
/// clears keypoint references to the removed points. Points observed by at
/// least one training view survive unchanged.
pub fn filter_pseudo_only(model: &SfmModel) -> SfmModel {
    let mut out = model.clone();
    let removed: BTreeSet<u64> = out
        .points
        .iter()
        .filter(|(_, p)| {
            p.track
                .iter()
                .all(|(image_id, _)| out.pseudo_image_ids.contains(image_id))
        })
        .map(|(&id, _)| id)
        .collect();
    out.points.retain(|id, _| !removed.contains(id));
    for image in out.images.values_mut() {
        for kp in &mut image.keypoints {
            if kp.2 >= 0 && removed.contains(&(kp.2 as u64)) {
                kp.2 = -1;
            }
        }
    }
    out
}
