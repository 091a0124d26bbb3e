//! Training objectives: photometric color supervision, depth alignment
//! against sparse and monocular depth, and the non-maximum opacity
//! penalty.

mod pearson;
mod photometric;
mod ssim;

pub use pearson::{pearson_windows, windowed_pearson_backward, windowed_pearson_loss};
pub use photometric::{photometric_backward, photometric_loss};
pub use ssim::{ssim, ssim_backward};

use serde::{Deserialize, Serialize};

use crate::core::{DepthMap, ImageBuffer};
use crate::raster::RenderOutput;
use crate::{Error, Result};

/// How per-window correlation terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PearsonReduce {
    /// Average over contributing windows; resolution independent.
    #[default]
    Mean,
    /// Plain sum over contributing windows.
    Sum,
}

/// Objective weights and window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_o: f64,
    pub lambda_d: f64,
    pub lambda_p: f64,
    /// Mix for the standalone photometric form `(1-m)*L1 + m*D-SSIM`.
    pub dssim_mix: f64,
    pub window_len: usize,
    pub window_stride: usize,
    pub pearson_reduce: PearsonReduce,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.8,
            lambda2: 0.2,
            lambda_o: 0.05,
            lambda_d: 0.005,
            lambda_p: 0.05,
            dssim_mix: 0.2,
            window_len: 32,
            window_stride: 4,
            pearson_reduce: PearsonReduce::Mean,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda1,
            self.lambda2,
            self.lambda_o,
            self.lambda_d,
            self.lambda_p,
            self.dssim_mix,
        ];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if self.window_len < 2 {
            return Err(Error::InvalidConfig("window_len must be >= 2".into()));
        }
        if self.window_stride < 1 {
            return Err(Error::InvalidConfig("window_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean absolute depth difference over pixels that both maps cover.
///
/// Coverage means `sfm_depth > 0` and rendered depth valid (> 0). With no
/// such pixels the loss is 0.
pub fn sparse_depth_l1(rendered: &DepthMap, sfm_depth: &DepthMap) -> Result<f64> {
    if rendered.width != sfm_depth.width || rendered.height != sfm_depth.height {
        return Err(Error::DimensionMismatch(format!(
            "depth L1 over {}x{} vs {}x{}",
            rendered.width, rendered.height, sfm_depth.width, sfm_depth.height
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (d, c) in rendered.data.iter().zip(&sfm_depth.data) {
        if *c > 0.0 && *d > 0.0 {
            sum += (d - c).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Gradient of `sparse_depth_l1` w.r.t. the rendered depth, same layout as
/// the depth buffer. Zero residuals contribute zero (subgradient).
pub fn sparse_depth_l1_backward(rendered: &DepthMap, sfm_depth: &DepthMap) -> Result<Vec<f64>> {
    if rendered.width != sfm_depth.width || rendered.height != sfm_depth.height {
        return Err(Error::DimensionMismatch("depth L1 backward".into()));
    }
    let n = rendered
        .data
        .iter()
        .zip(&sfm_depth.data)
        .filter(|(d, c)| **c > 0.0 && **d > 0.0)
        .count();
    let mut grad = vec![0.0; rendered.data.len()];
    if n == 0 {
        return Ok(grad);
    }
    let scale = 1.0 / n as f64;
    for (g, (d, c)) in grad.iter_mut().zip(rendered.data.iter().zip(&sfm_depth.data)) {
        if *c > 0.0 && *d > 0.0 {
            *g = scale * (d - c).signum();
        }
    }
    Ok(grad)
}

/// Non-maximum opacity penalty read off the render statistics:
/// `lambda_o * sum(nonmax_alpha_sum) / max(N, 1)` with
/// `N = sum(nonmax_count)`.
pub fn opacity_regularization(render_out: &RenderOutput, lambda_o: f64) -> f64 {
    let n: u64 = render_out.nonmax_count.iter().map(|c| *c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = render_out.nonmax_alpha_sum.iter().sum();
    lambda_o * total / n as f64
}

/// Coefficient to feed the rasterizer backward so the penalty's gradient
/// reaches each non-maximum hit's alpha.
pub fn opacity_regularization_grad_coeff(render_out: &RenderOutput, lambda_o: f64) -> f64 {
    let n: u64 = render_out.nonmax_count.iter().map(|c| *c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    lambda_o / n as f64
}

/// Which objective applies to a rendered view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    /// Real captured view: photometric + depth alignment + opacity.
    Training,
    /// Generated viewpoint without a ground-truth image: depth alignment
    /// only.
    Pseudo,
}

/// Itemized objective; `total` is the exact sum of the parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub dssim: f64,
    pub sparse_depth: f64,
    pub pearson: f64,
    pub opacity: f64,
    pub total: f64,
}

/// Full objective for one view.
///
/// Training views get every term; pseudo views only the depth-alignment
/// pair. Depth terms are skipped when their weight is zero, and only then
/// may the corresponding depth input be absent.
pub fn total_loss(
    pred: &ImageBuffer,
    gt: Option<&ImageBuffer>,
    render_out: &RenderOutput,
    sfm_depth: Option<&DepthMap>,
    mono_depth: Option<&DepthMap>,
    weights: &LossWeights,
    view_kind: ViewKind,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let mut out = LossBreakdown::default();

    if view_kind == ViewKind::Training {
        let gt = gt.ok_or_else(|| Error::EmptyInput("training view needs a target image".into()))?;
        out.l1 = weights.lambda1 * pred.mean_l1(gt)?;
        if weights.lambda2 > 0.0 {
            out.dssim = weights.lambda2 * (1.0 - ssim(pred, gt)?) / 2.0;
        }
        out.opacity = opacity_regularization(render_out, weights.lambda_o);
    }

    if weights.lambda_d > 0.0 {
        let sfm = sfm_depth.ok_or_else(|| {
            Error::SparseDepthRequired("depth-alignment weight lambda_d is nonzero".into())
        })?;
        out.sparse_depth = weights.lambda_d * sparse_depth_l1(&render_out.depth, sfm)?;
    }
    if weights.lambda_p > 0.0 {
        let mono = mono_depth.ok_or_else(|| {
            Error::MonoDepthRequired("depth-alignment weight lambda_p is nonzero".into())
        })?;
        out.pearson = weights.lambda_p
            * windowed_pearson_loss(
                &render_out.depth,
                mono,
                weights.window_len,
                weights.window_stride,
                weights.pearson_reduce,
            )?;
    }

    out.total = out.l1 + out.dssim + out.sparse_depth + out.pearson + out.opacity;
    if !out.total.is_finite() {
        // Iteration 0 here; the trainer rewrites it with the real index.
        return Err(Error::NonFiniteLoss {
            iteration: 0,
            breakdown: format!("{:?}", out),
        });
    }
    Ok(out)
}
