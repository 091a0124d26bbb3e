use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};

use crate::core::{Camera, Gaussian};

/// Splats with camera-space z at or below this are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Isotropic low-pass added to every projected covariance, in px^2.
pub const COV2D_DILATION: f64 = 0.3;

/// A Gaussian after perspective projection, ready for blending.
#[derive(Debug, Clone)]
pub struct Splat2D {
    pub gaussian_index: usize,
    /// Projected center in continuous pixel coordinates.
    pub mean2d: Vector2<f64>,
    /// Projected covariance after low-pass dilation; positive definite.
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    /// Camera-space z of the center; greater than `NEAR_PLANE`.
    pub depth_z: f64,
    /// Activated opacity.
    pub opacity: f64,
    pub color: Vector3<f64>,
    /// Three-sigma reach in pixels along the widest axis.
    pub radius: f64,
}

/// Project one Gaussian. `None` means culled: behind the near plane or the
/// 3-sigma box misses the image rectangle entirely.
pub fn project_gaussian(g: &Gaussian, cam: &Camera, index: usize) -> Option<Splat2D> {
    let intr = &cam.intrinsics;
    let w = cam.pose.rotation_matrix();
    let t = w * (g.mu - cam.pose.center);
    if t.z <= NEAR_PLANE {
        return None;
    }

    let mean2d = Vector2::new(
        intr.fx * t.x / t.z + intr.cx,
        intr.fy * t.y / t.z + intr.cy,
    );

    // Perspective Jacobian at the center (EWA approximation).
    let tz2 = t.z * t.z;
    let j = Matrix2x3::new(
        intr.fx / t.z,
        0.0,
        -intr.fx * t.x / tz2,
        0.0,
        intr.fy / t.z,
        -intr.fy * t.y / tz2,
    );

    let m = j * w;
    let cov2d = m * g.covariance() * m.transpose() + Matrix2::identity() * COV2D_DILATION;

    // Largest eigenvalue of a symmetric 2x2.
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let half_diff = 0.5 * (cov2d[(0, 0)] - cov2d[(1, 1)]);
    let disc = (half_diff * half_diff + cov2d[(0, 1)] * cov2d[(0, 1)]).sqrt();
    let radius = 3.0 * (mid + disc).max(0.0).sqrt();

    let (w_px, h_px) = (intr.width as f64, intr.height as f64);
    if mean2d.x + radius < 0.0
        || mean2d.x - radius > w_px
        || mean2d.y + radius < 0.0
        || mean2d.y - radius > h_px
    {
        return None;
    }

    // The dilation keeps the determinant at least 0.09, so the inverse
    // always exists.
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    let conic = Matrix2::new(
        cov2d[(1, 1)] / det,
        -cov2d[(0, 1)] / det,
        -cov2d[(1, 0)] / det,
        cov2d[(0, 0)] / det,
    );

    Some(Splat2D {
        gaussian_index: index,
        mean2d,
        cov2d,
        conic,
        depth_z: t.z,
        opacity: g.opacity(),
        color: g.color,
        radius,
    })
}

/// Project an entire cloud and sort ascending by center depth. The sort is
/// stable, so equal depths keep their original index order.
pub(crate) fn project_sorted(cloud: &[Gaussian], cam: &Camera) -> Vec<Splat2D> {
    let mut splats: Vec<Splat2D> = cloud
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, cam, i))
        .collect();
    splats.sort_by(|a, b| a.depth_z.partial_cmp(&b.depth_z).unwrap());
    splats
}

/// Row indices whose pixel centers a splat can reach, clipped to the image.
pub(crate) fn row_span(splat: &Splat2D, height: usize) -> Option<(usize, usize)> {
    let lo = (splat.mean2d.y - splat.radius - 0.5).ceil().max(0.0);
    let hi = (splat.mean2d.y + splat.radius - 0.5)
        .floor()
        .min(height as f64 - 1.0);
    if lo > hi {
        return None;
    }
    Some((lo as usize, hi as usize))
}
