//! Density control between optimizer steps: the clone/split/prune cycle
//! driven by accumulated screen-space gradients, and the error-driven
//! split that targets the few Gaussians dominating badly rendered pixels
//! in sparse-view setups.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::{Gaussian, ImageBuffer};
use crate::raster::RenderOutput;
use crate::{Error, Result};

/// Pixels with squared error at or below this never trigger a split.
const SFS_ERROR_GUARD: f64 = 1e-8;

/// Schedule and thresholds for both density mechanisms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensifyConfig {
    /// First iteration at which clone/split runs.
    pub start_iter: usize,
    /// Iterations between clone/split passes.
    pub interval: usize,
    /// Mean screen-space gradient norm required to densify.
    pub grad_threshold: f64,
    /// Activated opacity below which a Gaussian is pruned.
    pub prune_opacity: f64,
    /// Clone-vs-split boundary as a fraction of scene extent.
    pub split_scale_percentile: f64,
    /// Iterations between error-driven split passes.
    pub sfs_interval: usize,
    /// First iteration at which error-driven splits run.
    pub sfs_start: usize,
    /// Fraction of pooled pixels selected as high-error.
    pub sfs_top_fraction: f64,
    /// Children per error-driven split.
    pub sfs_m: usize,
    /// Scale divisor applied to split children.
    pub split_shrink: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            start_iter: 1000,
            interval: 200,
            grad_threshold: 0.0005,
            prune_opacity: 0.005,
            split_scale_percentile: 0.01,
            sfs_interval: 500,
            sfs_start: 2000,
            sfs_top_fraction: 0.01,
            sfs_m: 2,
            split_shrink: 1.6,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("interval", self.interval as f64),
            ("grad_threshold", self.grad_threshold),
            ("prune_opacity", self.prune_opacity),
            ("split_scale_percentile", self.split_scale_percentile),
            ("sfs_interval", self.sfs_interval as f64),
            ("split_shrink", self.split_shrink),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sfs_top_fraction > 0.0 && self.sfs_top_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sfs_top_fraction must be in (0, 1], got {}",
                self.sfs_top_fraction
            )));
        }
        if self.sfs_m < 2 {
            return Err(Error::InvalidConfig(format!("sfs_m must be >= 2, got {}", self.sfs_m)));
        }
        Ok(())
    }
}

/// Running mean of per-view screen-space gradient norms, one slot per
/// Gaussian. Only iterations where the Gaussian was actually rendered
/// count toward its mean.
#[derive(Debug, Clone)]
pub struct GradAccum {
    pub norm_sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradAccum {
    pub fn new(n: usize) -> Self {
        GradAccum { norm_sum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.norm_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm_sum.is_empty()
    }

    /// Record one backward pass: `d_mean2d` norms for visible Gaussians.
    pub fn add(&mut self, grads: &crate::raster::BackwardOutput) -> Result<()> {
        if grads.grads.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient accumulator holds {} slots, backward produced {}",
                self.len(),
                grads.grads.len()
            )));
        }
        for (i, g) in grads.grads.iter().enumerate() {
            if grads.visible[i] {
                self.norm_sum[i] += g.d_mean2d.norm();
                self.count[i] += 1;
            }
        }
        Ok(())
    }

    fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.norm_sum[i] / self.count[i] as f64
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.norm_sum.clear();
        self.norm_sum.resize(n, 0.0);
        self.count.clear();
        self.count.resize(n, 0);
    }
}

/// Draw a child center from the parent's own 3D density.
fn sample_child(parent: &Gaussian, shrink: f64, rng: &mut ChaCha8Rng) -> Gaussian {
    let n = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let offset = parent.rotation_matrix() * parent.scale().component_mul(&n);
    let ln_shrink = shrink.ln();
    Gaussian {
        mu: parent.mu + offset,
        raw_opacity: parent.raw_opacity,
        raw_scale: parent.raw_scale.map(|r| r - ln_shrink),
        rotation: parent.rotation,
        color: parent.color,
    }
}

/// One clone/split/prune pass.
///
/// Gaussians whose accumulated mean screen-space gradient reaches the
/// threshold densify: small ones (max scale under the extent fraction) are
/// cloned in place, large ones are replaced by two children sampled from
/// the parent density with scales shrunk by `split_shrink`. Afterwards all
/// Gaussians under the opacity floor are pruned and the accumulator is
/// reset to the new cloud size.
///
/// Returns, for each surviving Gaussian, the index it had before the pass,
/// or `None` for newly created ones, so optimizer state can follow along.
pub fn adc_step(
    cloud: &mut Vec<Gaussian>,
    accum: &mut GradAccum,
    cfg: &DensifyConfig,
    scene_extent: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Option<usize>>> {
    cfg.validate()?;
    if accum.len() != cloud.len() {
        return Err(Error::DimensionMismatch(format!(
            "accumulator covers {} gaussians, cloud has {}",
            accum.len(),
            cloud.len()
        )));
    }
    let scale_limit = cfg.split_scale_percentile * scene_extent;

    let mut next = Vec::with_capacity(cloud.len() + 8);
    let mut origin: Vec<Option<usize>> = Vec::with_capacity(cloud.len() + 8);
    for (i, g) in cloud.iter().enumerate() {
        if accum.mean(i) >= cfg.grad_threshold {
            if g.scale().max() < scale_limit {
                next.push(g.clone());
                origin.push(Some(i));
                next.push(g.clone());
                origin.push(None);
            } else {
                for _ in 0..2 {
                    next.push(sample_child(g, cfg.split_shrink, rng));
                    origin.push(None);
                }
            }
        } else {
            next.push(g.clone());
            origin.push(Some(i));
        }
    }

    let mut pruned = Vec::with_capacity(next.len());
    let mut pruned_origin = Vec::with_capacity(next.len());
    for (g, o) in next.into_iter().zip(origin) {
        if g.opacity() >= cfg.prune_opacity {
            pruned.push(g);
            pruned_origin.push(o);
        }
    }

    *cloud = pruned;
    accum.reset(cloud.len());
    Ok(pruned_origin)
}

/// Pools per-pixel squared RGB error over all training views and returns
/// the dominant Gaussian of each of the top `ceil(rho * total_pixels)`
/// error pixels, deduplicated. Ties in error break by pixel index, then
/// view index; pixels at or below the error guard, and pixels no Gaussian
/// dominates, contribute nothing.
pub fn sfs_select(
    renders: &[RenderOutput],
    gts: &[ImageBuffer],
    rho: f64,
) -> Result<Vec<usize>> {
    if renders.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} renders vs {} ground-truth images",
            renders.len(),
            gts.len()
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("rho must be in (0, 1], got {rho}")));
    }
    let mut candidates = Vec::new();
    let mut total_pixels = 0usize;
    for (v, (r, gt)) in renders.iter().zip(gts).enumerate() {
        if r.width() != gt.width || r.height() != gt.height {
            return Err(Error::DimensionMismatch(format!(
                "render {}x{} vs image {}x{}",
                r.width(),
                r.height(),
                gt.width,
                gt.height
            )));
        }
        let n = gt.width * gt.height;
        total_pixels += n;
        for p in 0..n {
            let mut e = 0.0;
            for c in 0..3 {
                let d = r.color.data[3 * p + c] - gt.data[3 * p + c];
                e += d * d;
            }
            if e > SFS_ERROR_GUARD {
                candidates.push((e, p, v));
            }
        }
    }
    let k = (rho * total_pixels as f64).ceil() as usize;
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    candidates.truncate(k);

    let mut set = BTreeSet::new();
    for (_, p, v) in candidates {
        let idx = renders[v].max_weight_index[p];
        if idx >= 0 {
            set.insert(idx as usize);
        }
    }
    Ok(set.into_iter().collect())
}

/// Replaces each listed Gaussian with `m` children sampled from its
/// density, scales divided by `split_shrink`. Returns the same
/// origin-index mapping as [`adc_step`].
pub fn sfs_split(
    cloud: &mut Vec<Gaussian>,
    indices: &[usize],
    m: usize,
    split_shrink: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Option<usize>>> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("split multiplicity must be >= 2, got {m}")));
    }
    if !(split_shrink > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "split_shrink must be positive, got {split_shrink}"
        )));
    }
    let selected: BTreeSet<usize> = indices.iter().copied().collect();
    if let Some(&bad) = selected.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::IndexOutOfRange(bad));
    }

    let mut next = Vec::with_capacity(cloud.len() + selected.len() * (m - 1));
    let mut origin = Vec::with_capacity(next.capacity());
    for (i, g) in cloud.iter().enumerate() {
        if selected.contains(&i) {
            for _ in 0..m {
                next.push(sample_child(g, split_shrink, rng));
                origin.push(None);
            }
        } else {
            next.push(g.clone());
            origin.push(Some(i));
        }
    }
    *cloud = next;
    Ok(origin)
}
