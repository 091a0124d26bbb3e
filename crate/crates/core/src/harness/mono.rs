//! Simulated monocular depth: an affine (or inverse-affine) remap of the
//! true depth with per-view coefficients, mimicking estimators that are
//! consistent within a view but scale/shift-inconsistent across views.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::DepthMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonoMode {
    /// `a * d + b` in metric depth space.
    Affine,
    /// `a * (1 / d) + b`, tagged as inverse so losses negate it.
    InverseAffine,
}

/// Applies the per-view remap to the valid pixels of `gt_depth`, then
/// fills invalid pixels from their nearest valid neighbor so the output is
/// dense, the way real monocular predictions are.
pub fn mono_depth_sim(gt_depth: &DepthMap, a: f64, b: f64, mode: MonoMode) -> Result<DepthMap> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig(format!("mono scale a = {a} must be positive")));
    }
    if gt_depth.is_inverse {
        return Err(Error::InvalidConfig(
            "mono simulation expects a metric depth input".into(),
        ));
    }
    if gt_depth.valid_count() == 0 {
        return Err(Error::EmptyInput("depth map has no valid pixels".into()));
    }

    let (w, h) = (gt_depth.width, gt_depth.height);
    let mut out = DepthMap::new(w, h);
    out.is_inverse = matches!(mode, MonoMode::InverseAffine);
    for p in 0..w * h {
        let d = gt_depth.data[p];
        if d != 0.0 {
            out.data[p] = match mode {
                MonoMode::Affine => a * d + b,
                MonoMode::InverseAffine => a / d + b,
            };
        }
    }
    fill_nearest_valid(&mut out, gt_depth);
    Ok(out)
}

/// Multi-source BFS from the valid pixels (4-neighborhood, deterministic
/// visit order), copying each source value outward.
fn fill_nearest_valid(out: &mut DepthMap, validity: &DepthMap) {
    let (w, h) = (out.width, out.height);
    let mut filled = vec![false; w * h];
    let mut queue = VecDeque::new();
    for p in 0..w * h {
        if validity.data[p] != 0.0 {
            filled[p] = true;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % w, p / w);
        let neighbors = [
            (x > 0).then(|| p - 1),
            (x + 1 < w).then(|| p + 1),
            (y > 0).then(|| p - w),
            (y + 1 < h).then(|| p + w),
        ];
        for q in neighbors.into_iter().flatten() {
            if !filled[q] {
                filled[q] = true;
                out.data[q] = out.data[p];
                queue.push_back(q);
            }
        }
    }
}

/// Draws per-view affine coefficients from a seeded stream, so every view
/// gets a different scale and shift the way real estimators disagree.
pub struct SimulatedMonoProvider {
    pub mode: MonoMode,
    pub seed: u64,
}

impl SimulatedMonoProvider {
    /// Coefficients for a view: `a` in `[0.5, 2]`, `b` in `[-0.5, 0.5]`.
    pub fn coefficients(&self, view_id: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ view_id.wrapping_mul(0x9e3779b97f4a7c15));
        (rng.gen_range(0.5..2.0), rng.gen_range(-0.5..0.5))
    }

    pub fn estimate(&self, view_id: u64, depth_hint: &DepthMap) -> Result<DepthMap> {
        let (a, b) = self.coefficients(view_id);
        mono_depth_sim(depth_hint, a, b, self.mode)
    }
}

impl crate::pgi::MonoDepthProvider for SimulatedMonoProvider {
    fn estimate(&self, req: &crate::pgi::MonoRequest<'_>) -> Result<DepthMap> {
        SimulatedMonoProvider::estimate(self, req.view_id, req.depth_hint)
    }
}
