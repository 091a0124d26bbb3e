use nalgebra::Vector3;
use rayon::prelude::*;

use crate::core::{Camera, DepthMap, Gaussian, ImageBuffer};
use crate::raster::project::{project_sorted, row_span, Splat2D};
use crate::raster::ROW_BLOCK;
use crate::Result;

/// Alpha clamp ceiling.
pub(crate) const ALPHA_MAX: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub(crate) const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Blending stops once transmittance drops below this.
pub(crate) const T_STOP: f64 = 1e-4;
/// Pixels with accumulated weight below this have no valid depth.
pub(crate) const ALPHA_VALID: f64 = 1e-4;
/// Floor for the depth normalizer.
pub(crate) const DEPTH_DENOM_FLOOR: f64 = 1e-8;

/// Forward rendering result with the per-pixel statistics the losses and
/// the error-guided densifier consume.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ImageBuffer,
    /// Alpha-normalized depth; 0 where `accum_alpha < 1e-4`.
    pub depth: DepthMap,
    /// Per-pixel sum of blend weights.
    pub accum_alpha: Vec<f64>,
    /// Per-pixel final transmittance; `accum_alpha + transmittance = 1`
    /// up to rounding.
    pub transmittance: Vec<f64>,
    /// Per-pixel Gaussian index with the largest blend weight, -1 if the
    /// pixel was not hit.
    pub max_weight_index: Vec<i64>,
    /// The largest blend weight itself.
    pub max_weight: Vec<f64>,
    /// Per-pixel sum of alpha over every hit except the max-weight one.
    pub nonmax_alpha_sum: Vec<f64>,
    /// Per-pixel count of hits excluding the max-weight one.
    pub nonmax_count: Vec<u32>,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }
}

/// Per-row lists of splat slots, each row in front-to-back order.
pub(crate) fn bin_rows(splats: &[Splat2D], height: usize) -> Vec<Vec<u32>> {
    let mut bins = vec![Vec::new(); height];
    for (slot, splat) in splats.iter().enumerate() {
        if let Some((lo, hi)) = row_span(splat, height) {
            for bin in &mut bins[lo..=hi] {
                bin.push(slot as u32);
            }
        }
    }
    bins
}

struct RowBlockOut {
    color: Vec<f64>,
    depth: Vec<f64>,
    accum_alpha: Vec<f64>,
    transmittance: Vec<f64>,
    max_weight_index: Vec<i64>,
    max_weight: Vec<f64>,
    nonmax_alpha_sum: Vec<f64>,
    nonmax_count: Vec<u32>,
}

/// Render a cloud. Rejects non-finite parameters; an empty cloud renders
/// the background everywhere.
pub fn render(cloud: &[Gaussian], cam: &Camera, background: Vector3<f64>) -> Result<RenderOutput> {
    for (i, g) in cloud.iter().enumerate() {
        g.validate(i)?;
    }
    let (width, height) = (cam.width(), cam.height());
    let splats = project_sorted(cloud, cam);
    let bins = bin_rows(&splats, height);

    let n_blocks = height.div_ceil(ROW_BLOCK);
    let blocks: Vec<RowBlockOut> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let y0 = b * ROW_BLOCK;
            let y1 = ((b + 1) * ROW_BLOCK).min(height);
            render_rows(&splats, &bins, width, y0, y1, background)
        })
        .collect();

    let mut out = RenderOutput {
        color: ImageBuffer::new(width, height),
        depth: DepthMap::new(width, height),
        accum_alpha: vec![0.0; width * height],
        transmittance: vec![0.0; width * height],
        max_weight_index: vec![0; width * height],
        max_weight: vec![0.0; width * height],
        nonmax_alpha_sum: vec![0.0; width * height],
        nonmax_count: vec![0; width * height],
    };
    for (b, block) in blocks.iter().enumerate() {
        let p0 = b * ROW_BLOCK * width;
        let n = block.accum_alpha.len();
        out.color.data[3 * p0..3 * p0 + 3 * n].copy_from_slice(&block.color);
        out.depth.data[p0..p0 + n].copy_from_slice(&block.depth);
        out.accum_alpha[p0..p0 + n].copy_from_slice(&block.accum_alpha);
        out.transmittance[p0..p0 + n].copy_from_slice(&block.transmittance);
        out.max_weight_index[p0..p0 + n].copy_from_slice(&block.max_weight_index);
        out.max_weight[p0..p0 + n].copy_from_slice(&block.max_weight);
        out.nonmax_alpha_sum[p0..p0 + n].copy_from_slice(&block.nonmax_alpha_sum);
        out.nonmax_count[p0..p0 + n].copy_from_slice(&block.nonmax_count);
    }
    Ok(out)
}

/// Transmittance remaining just in front of depth `z` at the continuous
/// pixel position `(x, y)`, under the same blending rules as the render
/// (opacity clamp and skip threshold included). `exclude` names a Gaussian
/// that never occludes, so a sample drawn from a Gaussian is not shadowed
/// by its own generator.
pub(crate) fn transmittance_at_depth(
    splats: &[Splat2D],
    x: f64,
    y: f64,
    z: f64,
    exclude: Option<usize>,
) -> f64 {
    let mut t = 1.0f64;
    for s in splats {
        if s.depth_z >= z {
            break;
        }
        if exclude == Some(s.gaussian_index) {
            continue;
        }
        let dx = x - s.mean2d.x;
        let dy = y - s.mean2d.y;
        if dx.abs() > s.radius || dy.abs() > s.radius {
            continue;
        }
        let q = &s.conic;
        let power =
            -0.5 * (q[(0, 0)] * dx * dx + 2.0 * q[(0, 1)] * dx * dy + q[(1, 1)] * dy * dy);
        let alpha = (s.opacity * power.exp()).min(ALPHA_MAX);
        if alpha < ALPHA_MIN {
            continue;
        }
        t *= 1.0 - alpha;
        if t < T_STOP {
            break;
        }
    }
    t
}

fn render_rows(
    splats: &[Splat2D],
    bins: &[Vec<u32>],
    width: usize,
    y0: usize,
    y1: usize,
    background: Vector3<f64>,
) -> RowBlockOut {
    let n = (y1 - y0) * width;
    let mut out = RowBlockOut {
        color: vec![0.0; 3 * n],
        depth: vec![0.0; n],
        accum_alpha: vec![0.0; n],
        transmittance: vec![0.0; n],
        max_weight_index: vec![-1; n],
        max_weight: vec![0.0; n],
        nonmax_alpha_sum: vec![0.0; n],
        nonmax_count: vec![0; n],
    };
    for y in y0..y1 {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let p = (y - y0) * width + x;

            let mut t = 1.0f64;
            let mut wsum = 0.0;
            let mut zsum = 0.0;
            let mut color = Vector3::zeros();
            let mut alpha_total = 0.0;
            let mut hits = 0u32;
            let mut best_w = 0.0;
            let mut best_alpha = 0.0;
            let mut best_idx = -1i64;

            for &slot in &bins[y] {
                let s = &splats[slot as usize];
                let dx = px - s.mean2d.x;
                let dy = py - s.mean2d.y;
                if dx.abs() > s.radius {
                    continue;
                }
                let q = &s.conic;
                let power = -0.5
                    * (q[(0, 0)] * dx * dx + 2.0 * q[(0, 1)] * dx * dy + q[(1, 1)] * dy * dy);
                let alpha = (s.opacity * power.exp()).min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                let w = alpha * t;
                color += s.color * w;
                wsum += w;
                zsum += s.depth_z * w;
                alpha_total += alpha;
                hits += 1;
                if w > best_w {
                    best_w = w;
                    best_alpha = alpha;
                    best_idx = s.gaussian_index as i64;
                }
                t *= 1.0 - alpha;
                if t < T_STOP {
                    break;
                }
            }

            color += background * t;
            out.color[3 * p] = color.x;
            out.color[3 * p + 1] = color.y;
            out.color[3 * p + 2] = color.z;
            out.depth[p] = if wsum < ALPHA_VALID {
                0.0
            } else {
                zsum / wsum.max(DEPTH_DENOM_FLOOR)
            };
            out.accum_alpha[p] = wsum;
            out.transmittance[p] = t;
            out.max_weight_index[p] = best_idx;
            out.max_weight[p] = best_w;
            out.nonmax_alpha_sum[p] = alpha_total - best_alpha;
            out.nonmax_count[p] = hits.saturating_sub(1);
        }
    }
    out
}
