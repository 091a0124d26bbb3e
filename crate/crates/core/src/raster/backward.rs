use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::core::{Camera, Gaussian};
use crate::raster::forward::{bin_rows, ALPHA_MAX, ALPHA_MIN, ALPHA_VALID, T_STOP};
use crate::raster::project::{project_sorted, Splat2D};
use crate::raster::ROW_BLOCK;
use crate::{Error, Result};

/// Gradients for one Gaussian. All-zero for culled primitives.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianGrad {
    pub d_mu: Vector3<f64>,
    pub d_raw_opacity: f64,
    pub d_raw_scale: Vector3<f64>,
    pub d_rotation_q: [f64; 4],
    pub d_color: Vector3<f64>,
    /// Screen-space center gradient, the densification signal.
    pub d_mean2d: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct BackwardOutput {
    /// One record per input Gaussian.
    pub grads: Vec<GaussianGrad>,
    /// True where the Gaussian survived culling for this camera.
    pub visible: Vec<bool>,
}

/// Per-splat accumulator in screen space, reduced over pixels.
#[derive(Clone, Copy)]
struct ScreenGrad {
    d_mean2d: Vector2<f64>,
    /// Gradient w.r.t. the conic (inverse 2D covariance), full-matrix
    /// convention; symmetric by construction.
    d_conic: Matrix2<f64>,
    d_opacity: f64,
    d_color: Vector3<f64>,
    d_z: f64,
}

impl Default for ScreenGrad {
    fn default() -> Self {
        ScreenGrad {
            d_mean2d: Vector2::zeros(),
            d_conic: Matrix2::zeros(),
            d_opacity: 0.0,
            d_color: Vector3::zeros(),
            d_z: 0.0,
        }
    }
}

struct Hit {
    slot: u32,
    alpha: f64,
    /// Transmittance in front of this hit.
    t_before: f64,
    /// Gaussian falloff value before the opacity multiply.
    gval: f64,
    dx: f64,
    dy: f64,
    clamped: bool,
}

/// Gradients of `L = sum_p (grad_color[p] . C_p + grad_depth[p] * D_p)
/// + grad_nonmax_alpha * sum_p nonmax_alpha_sum[p]`
/// with respect to every raw Gaussian parameter. The depth-sort order, the
/// culling set, the alpha clamp, the skip threshold, the early-termination
/// point, and the per-pixel max-weight choice are all held constant, so
/// these are subgradients at the (measure-zero) non-smooth points.
///
/// `grad_color` is pixel-interleaved RGB of length `3*w*h`; `grad_depth`
/// has length `w*h`. Depth gradients at pixels whose rendered depth is
/// invalid are ignored, mirroring the forward zeroing.
pub fn backward(
    cloud: &[Gaussian],
    cam: &Camera,
    background: Vector3<f64>,
    grad_color: &[f64],
    grad_depth: &[f64],
    grad_nonmax_alpha: f64,
) -> Result<BackwardOutput> {
    for (i, g) in cloud.iter().enumerate() {
        g.validate(i)?;
    }
    let (width, height) = (cam.width(), cam.height());
    if grad_color.len() != 3 * width * height || grad_depth.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "gradient buffers {}/{} do not match a {}x{} image",
            grad_color.len(),
            grad_depth.len(),
            width,
            height
        )));
    }

    let splats = project_sorted(cloud, cam);
    let bins = bin_rows(&splats, height);
    let n_slots = splats.len();

    let n_blocks = height.div_ceil(ROW_BLOCK);
    let block_grads: Vec<Vec<ScreenGrad>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let y0 = b * ROW_BLOCK;
            let y1 = ((b + 1) * ROW_BLOCK).min(height);
            backward_rows(
                &splats,
                &bins,
                width,
                y0,
                y1,
                background,
                grad_color,
                grad_depth,
                grad_nonmax_alpha,
            )
        })
        .collect();

    // Fixed block order makes the reduction deterministic at any thread
    // count.
    let mut screen = vec![ScreenGrad::default(); n_slots];
    for block in &block_grads {
        for (acc, g) in screen.iter_mut().zip(block) {
            acc.d_mean2d += g.d_mean2d;
            acc.d_conic += g.d_conic;
            acc.d_opacity += g.d_opacity;
            acc.d_color += g.d_color;
            acc.d_z += g.d_z;
        }
    }

    let mut grads = vec![GaussianGrad::default(); cloud.len()];
    let mut visible = vec![false; cloud.len()];
    let chained: Vec<(usize, GaussianGrad)> = splats
        .par_iter()
        .zip(&screen)
        .map(|(splat, sg)| {
            (
                splat.gaussian_index,
                chain_to_parameters(&cloud[splat.gaussian_index], cam, splat, sg),
            )
        })
        .collect();
    for (idx, g) in chained {
        grads[idx] = g;
        visible[idx] = true;
    }
    Ok(BackwardOutput { grads, visible })
}

#[allow(clippy::too_many_arguments)]
fn backward_rows(
    splats: &[Splat2D],
    bins: &[Vec<u32>],
    width: usize,
    y0: usize,
    y1: usize,
    background: Vector3<f64>,
    grad_color: &[f64],
    grad_depth: &[f64],
    grad_nonmax_alpha: f64,
) -> Vec<ScreenGrad> {
    let mut acc = vec![ScreenGrad::default(); splats.len()];
    let mut hits: Vec<Hit> = Vec::with_capacity(64);

    for y in y0..y1 {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let p = y * width + x;

            // Replay the forward blend, recording every hit.
            hits.clear();
            let mut t = 1.0f64;
            let mut wsum = 0.0;
            let mut zsum = 0.0;
            let mut best_w = 0.0;
            let mut best_hit = usize::MAX;
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
                let gval = power.exp();
                let raw_alpha = s.opacity * gval;
                let clamped = raw_alpha > ALPHA_MAX;
                let alpha = raw_alpha.min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                let w = alpha * t;
                wsum += w;
                zsum += s.depth_z * w;
                if w > best_w {
                    best_w = w;
                    best_hit = hits.len();
                }
                hits.push(Hit {
                    slot,
                    alpha,
                    t_before: t,
                    gval,
                    dx,
                    dy,
                    clamped,
                });
                t *= 1.0 - alpha;
                if t < T_STOP {
                    break;
                }
            }
            if hits.is_empty() {
                continue;
            }

            let gc = Vector3::new(grad_color[3 * p], grad_color[3 * p + 1], grad_color[3 * p + 2]);
            // Depth at invalid pixels is pinned to zero in the forward
            // pass, so its gradient path is dead there.
            let depth_valid = wsum >= ALPHA_VALID;
            let gd = if depth_valid { grad_depth[p] } else { 0.0 };
            let d_p = if depth_valid { zsum / wsum } else { 0.0 };

            // Back-to-front sweep for dL/d(alpha_i): the suffix term
            // collects every later weight plus the background through the
            // final transmittance.
            let g_t_final = gc.dot(&background);
            let mut suffix = g_t_final * t;
            for (h, hit) in hits.iter().enumerate().rev() {
                let s = &splats[hit.slot as usize];
                let w = hit.alpha * hit.t_before;
                let mut gw = gc.dot(&s.color);
                if gd != 0.0 {
                    gw += gd * (s.depth_z - d_p) / wsum;
                }
                let mut d_alpha = gw * hit.t_before - suffix / (1.0 - hit.alpha);
                suffix += gw * w;
                if h != best_hit {
                    d_alpha += grad_nonmax_alpha;
                }

                let a = &mut acc[hit.slot as usize];
                a.d_color += gc * w;
                if gd != 0.0 {
                    a.d_z += gd * w / wsum;
                }
                if hit.clamped {
                    continue;
                }
                a.d_opacity += d_alpha * hit.gval;
                let d_power = d_alpha * s.opacity * hit.gval;
                let q = &s.conic;
                let qd = Vector2::new(
                    q[(0, 0)] * hit.dx + q[(0, 1)] * hit.dy,
                    q[(1, 0)] * hit.dx + q[(1, 1)] * hit.dy,
                );
                a.d_mean2d += qd * d_power;
                a.d_conic += Matrix2::new(
                    hit.dx * hit.dx,
                    hit.dx * hit.dy,
                    hit.dy * hit.dx,
                    hit.dy * hit.dy,
                ) * (-0.5 * d_power);
            }
        }
    }
    acc
}

/// Chain screen-space gradients through projection and activation to the
/// raw parameters of one Gaussian.
fn chain_to_parameters(
    g: &Gaussian,
    cam: &Camera,
    splat: &Splat2D,
    sg: &ScreenGrad,
) -> GaussianGrad {
    let intr = &cam.intrinsics;
    let w_mat = cam.pose.rotation_matrix();
    let t = w_mat * (g.mu - cam.pose.center);
    let tz2 = t.z * t.z;

    // Conic -> 2D covariance: Q = C^-1, so dC = -Q dQ Q.
    let q = splat.conic;
    let d_cov2d = -q * sg.d_conic * q;

    // C = M Sigma M^T with M = J W; the low-pass dilation is additive and
    // drops out.
    let j = Matrix2x3::new(
        intr.fx / t.z,
        0.0,
        -intr.fx * t.x / tz2,
        0.0,
        intr.fy / t.z,
        -intr.fy * t.y / tz2,
    );
    let m = j * w_mat;
    let sigma = g.covariance();
    let d_sigma = m.transpose() * d_cov2d * m;
    let d_m = (d_cov2d + d_cov2d.transpose()) * m * sigma;
    let d_j = d_m * w_mat.transpose();

    // J and the projected center both depend on the camera-space point.
    let mut d_t = Vector3::new(
        d_j[(0, 2)] * (-intr.fx / tz2),
        d_j[(1, 2)] * (-intr.fy / tz2),
        d_j[(0, 0)] * (-intr.fx / tz2)
            + d_j[(1, 1)] * (-intr.fy / tz2)
            + d_j[(0, 2)] * (2.0 * intr.fx * t.x / (tz2 * t.z))
            + d_j[(1, 2)] * (2.0 * intr.fy * t.y / (tz2 * t.z)),
    );
    d_t.x += sg.d_mean2d.x * intr.fx / t.z;
    d_t.y += sg.d_mean2d.y * intr.fy / t.z;
    d_t.z += -sg.d_mean2d.x * intr.fx * t.x / tz2 - sg.d_mean2d.y * intr.fy * t.y / tz2;
    d_t.z += sg.d_z;

    let d_mu = w_mat.transpose() * d_t;

    // Sigma = R B R^T with B = diag(exp(2*raw_scale)).
    let r = g.rotation_matrix();
    let s_act = g.scale();
    let b = Matrix3::from_diagonal(&Vector3::new(
        s_act.x * s_act.x,
        s_act.y * s_act.y,
        s_act.z * s_act.z,
    ));
    let d_sigma_sym = d_sigma + d_sigma.transpose();
    let d_r = d_sigma_sym * r * b;
    let rt_ds_r = r.transpose() * d_sigma * r;
    let d_raw_scale = Vector3::new(
        2.0 * b[(0, 0)] * rt_ds_r[(0, 0)],
        2.0 * b[(1, 1)] * rt_ds_r[(1, 1)],
        2.0 * b[(2, 2)] * rt_ds_r[(2, 2)],
    );

    // Unit-quaternion partials of R, then the normalization Jacobian.
    let qn = g.rotation_quat().normalize();
    let (qw, qx, qy, qz) = (qn.w, qn.i, qn.j, qn.k);
    let dr_dw = Matrix3::new(0.0, -2.0 * qz, 2.0 * qy, 2.0 * qz, 0.0, -2.0 * qx, -2.0 * qy, 2.0 * qx, 0.0);
    let dr_dx = Matrix3::new(0.0, 2.0 * qy, 2.0 * qz, 2.0 * qy, -4.0 * qx, -2.0 * qw, 2.0 * qz, 2.0 * qw, -4.0 * qx);
    let dr_dy = Matrix3::new(-4.0 * qy, 2.0 * qx, 2.0 * qw, 2.0 * qx, 0.0, 2.0 * qz, -2.0 * qw, 2.0 * qz, -4.0 * qy);
    let dr_dz = Matrix3::new(-4.0 * qz, -2.0 * qw, 2.0 * qx, 2.0 * qw, -4.0 * qz, 2.0 * qy, 2.0 * qx, 2.0 * qy, 0.0);
    // Gradient w.r.t. the unit quaternion, then through normalization:
    // d_raw = (I - u u^T) d_unit / |q|.
    let d_unit = [
        d_r.dot(&dr_dw),
        d_r.dot(&dr_dx),
        d_r.dot(&dr_dy),
        d_r.dot(&dr_dz),
    ];
    let unit = [qw, qx, qy, qz];
    let norm = g.rotation_quat().norm();
    let proj: f64 = unit.iter().zip(&d_unit).map(|(u, d)| u * d).sum();
    let mut d_rotation_q = [0.0; 4];
    for k in 0..4 {
        d_rotation_q[k] = (d_unit[k] - unit[k] * proj) / norm;
    }

    let o = splat.opacity;
    GaussianGrad {
        d_mu,
        d_raw_opacity: sg.d_opacity * o * (1.0 - o),
        d_raw_scale,
        d_rotation_q,
        d_color: sg.d_color,
        d_mean2d: sg.d_mean2d,
    }
}
