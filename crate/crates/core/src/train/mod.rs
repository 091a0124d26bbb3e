//! Gradient-descent optimization of a Gaussian cloud: per-iteration view
//! scheduling, loss assembly by view kind, Adam parameter updates, and the
//! densification schedules, plus PSNR/SSIM evaluation and persistence.

mod adam;
mod checkpoint;

pub use checkpoint::{
    load_checkpoint, load_metric_log, save_checkpoint, save_metric_log, Checkpoint, MetricRecord,
};

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Camera, DepthMap, Gaussian, ImageBuffer};
use crate::densify::{adc_step, sfs_select, sfs_split, DensifyConfig, GradAccum};
use crate::losses::{
    opacity_regularization_grad_coeff, photometric_backward, sparse_depth_l1_backward, ssim,
    total_loss, windowed_pearson_backward, LossWeights, ViewKind,
};
use crate::raster::{backward, render};
use crate::{Error, Result};

use adam::Adam;

/// Logged PSNR for an exact match; also the cap for near-exact ones.
pub const PSNR_CAP: f64 = 99.0;

/// Optimization schedule and optimizer hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Position step size per unit of scene extent; decayed exponentially
    /// to one hundredth of its starting value over the run.
    pub lr_position: f64,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub background: [f64; 3],
    /// Round-robin view order when set; seeded random draws otherwise.
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            lr_position: 1.6e-4,
            lr_color: 2.5e-3,
            lr_opacity: 5e-2,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-15,
            background: [0.0, 0.0, 0.0],
            deterministic: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Zero iterations stays legal: `train` is then an explicit no-op.
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lr_position", self.lr_position),
            ("lr_color", self.lr_color),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
        ];
        for (name, lr) in rates {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {lr}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig(format!(
                "background must lie in [0, 1], got {:?}",
                self.background
            )));
        }
        Ok(())
    }
}

/// One optimization viewpoint with whatever supervision it carries.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub name: String,
    pub camera: Camera,
    pub kind: ViewKind,
    /// Required for training views.
    pub gt_image: Option<ImageBuffer>,
    /// Required whenever `lambda_d > 0`.
    pub sparse_depth: Option<DepthMap>,
    /// Required whenever `lambda_p > 0`.
    pub mono_depth: Option<DepthMap>,
}

/// Trained parameters plus the metric log sampled every 100 iterations.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub cloud: Vec<Gaussian>,
    pub metrics: Vec<MetricRecord>,
}

fn check_views(views: &[TrainView], weights: &LossWeights) -> Result<()> {
    if views.is_empty() {
        return Err(Error::EmptyInput("no views to optimize against".into()));
    }
    for v in views {
        if v.kind == ViewKind::Training && v.gt_image.is_none() {
            return Err(Error::EmptyInput(format!("training view '{}' has no target image", v.name)));
        }
        if weights.lambda_d > 0.0 && v.sparse_depth.is_none() {
            return Err(Error::SparseDepthRequired(v.name.clone()));
        }
        if weights.lambda_p > 0.0 && v.mono_depth.is_none() {
            return Err(Error::MonoDepthRequired(v.name.clone()));
        }
    }
    Ok(())
}

/// Optimizes `cloud` against the given views.
///
/// Each iteration renders one view (training views first, then pseudo, in
/// round-robin order), assembles the gradient of the per-kind objective,
/// and applies one Adam update to every parameter. When `densify_cfg` is
/// present, the clone/split/prune pass and the error-driven split run on
/// their schedules until 80% of the run, with optimizer moments remapped
/// across every mutation (new Gaussians start from zeroed moments).
///
/// `extent` scales the position learning rate and the clone/split size
/// boundary.
pub fn train(
    mut cloud: Vec<Gaussian>,
    views: &[TrainView],
    cfg: &TrainConfig,
    densify_cfg: Option<&DensifyConfig>,
    weights: &LossWeights,
    extent: f64,
) -> Result<TrainOutput> {
    cfg.validate()?;
    weights.validate()?;
    if let Some(dc) = densify_cfg {
        dc.validate()?;
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidConfig(format!("scene extent must be positive, got {extent}")));
    }
    check_views(views, weights)?;

    let mut order: Vec<usize> =
        (0..views.len()).filter(|i| views[*i].kind == ViewKind::Training).collect();
    order.extend((0..views.len()).filter(|i| views[*i].kind == ViewKind::Pseudo));

    let background = Vector3::from(cfg.background);
    let mut adam = Adam::new(cloud.len(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut accum = GradAccum::new(cloud.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut metrics = Vec::new();
    // Density mutations stop at 80% of the run so the count settles.
    let mutation_cutoff = (0.8 * cfg.iterations as f64).floor() as usize;

    for i in 0..cfg.iterations {
        let iter = i + 1;
        let pick = if cfg.deterministic {
            order[i % order.len()]
        } else {
            order[rng.gen_range(0..order.len())]
        };
        let view = &views[pick];

        let out = render(&cloud, &view.camera, background)?;
        let breakdown = match total_loss(
            &out.color,
            view.gt_image.as_ref(),
            &out,
            view.sparse_depth.as_ref(),
            view.mono_depth.as_ref(),
            weights,
            view.kind,
        ) {
            Ok(b) => b,
            Err(Error::NonFiniteLoss { breakdown, .. }) => {
                return Err(Error::NonFiniteLoss { iteration: iter, breakdown })
            }
            Err(e) => return Err(e),
        };

        let (w, h) = (view.camera.width(), view.camera.height());
        let mut grad_color = vec![0.0; 3 * w * h];
        let mut grad_nonmax_alpha = 0.0;
        if view.kind == ViewKind::Training {
            let gt = view.gt_image.as_ref().expect("training views carry images");
            grad_color = photometric_backward(&out.color, gt, weights, 1.0)?;
            grad_nonmax_alpha = opacity_regularization_grad_coeff(&out, weights.lambda_o);
        }
        let mut grad_depth = vec![0.0; w * h];
        if weights.lambda_d > 0.0 {
            let sfm = view.sparse_depth.as_ref().expect("checked by check_views");
            let g = sparse_depth_l1_backward(&out.depth, sfm)?;
            for (acc, gd) in grad_depth.iter_mut().zip(g) {
                *acc += weights.lambda_d * gd;
            }
        }
        if weights.lambda_p > 0.0 {
            let mono = view.mono_depth.as_ref().expect("checked by check_views");
            let g = windowed_pearson_backward(
                &out.depth,
                mono,
                weights.window_len,
                weights.window_stride,
                weights.pearson_reduce,
                weights.lambda_p,
            )?;
            for (acc, gd) in grad_depth.iter_mut().zip(g) {
                *acc += gd;
            }
        }

        let back =
            backward(&cloud, &view.camera, background, &grad_color, &grad_depth, grad_nonmax_alpha)?;
        accum.add(&back)?;

        let decay = 0.01f64.powf(iter as f64 / cfg.iterations as f64);
        let lrs = [
            cfg.lr_position * extent * decay,
            cfg.lr_opacity,
            cfg.lr_scale,
            cfg.lr_rotation,
            cfg.lr_color,
        ];
        adam.step(&mut cloud, &back.grads, &lrs);

        if iter % 100 == 0 {
            metrics.push(MetricRecord { iteration: iter, gaussians: cloud.len(), loss: breakdown });
        }

        if let Some(dc) = densify_cfg {
            if iter <= mutation_cutoff {
                if iter >= dc.start_iter && iter % dc.interval == 0 {
                    let origin = adc_step(&mut cloud, &mut accum, dc, extent, &mut rng)?;
                    adam.remap(&origin);
                }
                if iter >= dc.sfs_start && iter % dc.sfs_interval == 0 {
                    let mut renders = Vec::new();
                    let mut gts = Vec::new();
                    for v in views.iter().filter(|v| v.kind == ViewKind::Training) {
                        renders.push(render(&cloud, &v.camera, background)?);
                        gts.push(v.gt_image.clone().expect("training views carry images"));
                    }
                    let picked = sfs_select(&renders, &gts, dc.sfs_top_fraction)?;
                    if !picked.is_empty() {
                        let origin =
                            sfs_split(&mut cloud, &picked, dc.sfs_m, dc.split_shrink, &mut rng)?;
                        adam.remap(&origin);
                        accum.reset(cloud.len());
                    }
                }
            }
        }

        // Shadow-length check: optimizer state must track every mutation.
        assert_eq!(adam.gaussians(), cloud.len(), "optimizer rows diverged from cloud");
        assert_eq!(accum.len(), cloud.len(), "gradient accumulator diverged from cloud");
    }

    Ok(TrainOutput { cloud, metrics })
}

/// Peak signal-to-noise ratio in dB over all pixels and channels, with an
/// exact match reported as the 99 dB sentinel.
pub fn psnr(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "psnr over {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mse: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / pred.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Image quality of one rendered view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-view records plus arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_view: Vec<EvalRecord>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Arithmetic means over the per-view records.
pub fn summarize(per_view: Vec<EvalRecord>) -> Result<EvalSummary> {
    if per_view.is_empty() {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    let n = per_view.len() as f64;
    let mean_psnr = per_view.iter().map(|r| r.psnr).sum::<f64>() / n;
    let mean_ssim = per_view.iter().map(|r| r.ssim).sum::<f64>() / n;
    Ok(EvalSummary { per_view, mean_psnr, mean_ssim })
}

/// Renders each view and scores it against its target image. Every view
/// passed in must carry one.
pub fn evaluate(
    cloud: &[Gaussian],
    views: &[TrainView],
    background: Vector3<f64>,
) -> Result<EvalSummary> {
    let mut per_view = Vec::with_capacity(views.len());
    for v in views {
        let gt = v
            .gt_image
            .as_ref()
            .ok_or_else(|| Error::EmptyInput(format!("view '{}' has no target image", v.name)))?;
        let out = render(cloud, &v.camera, background)?;
        per_view.push(EvalRecord {
            name: v.name.clone(),
            psnr: psnr(&out.color, gt)?,
            ssim: ssim(&out.color, gt)?,
        });
    }
    summarize(per_view)
}
