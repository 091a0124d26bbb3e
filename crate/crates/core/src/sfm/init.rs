//! Seeding a Gaussian cloud from reconstructed points.

use nalgebra::Vector3;

use crate::core::{logit, Gaussian};
use crate::{Error, Result};

use super::colmap::SfmPoint3D;

/// Floor on the neighbor distance before taking its log, so coincident
/// points still yield a finite scale.
const MIN_NN_DIST: f64 = 1e-7;

/// One Gaussian per point: mean at the point, color from its RGB, opacity
/// 0.1 pre-activation, identity rotation, and isotropic scale set to the
/// mean distance to the 3 nearest neighbors (mean pairwise distance below
/// 4 points, 0.1 for a single point).
pub fn init_gaussians_from_points(points: &[SfmPoint3D]) -> Result<Vec<Gaussian>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points to initialize gaussians from".into()));
    }
    let n = points.len();
    let dist = |a: usize, b: usize| (points[a].xyz - points[b].xyz).norm();

    let scales: Vec<f64> = if n == 1 {
        vec![0.1]
    } else if n < 4 {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                sum += dist(i, j);
                pairs += 1;
            }
        }
        vec![sum / pairs as f64; n]
    } else {
        (0..n)
            .map(|i| {
                // Mean of the 3 smallest distances to other points.
                let mut best = [f64::INFINITY; 3];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d = dist(i, j);
                    if d < best[2] {
                        best[2] = d;
                        if best[2] < best[1] {
                            best.swap(1, 2);
                        }
                        if best[1] < best[0] {
                            best.swap(0, 1);
                        }
                    }
                }
                (best[0] + best[1] + best[2]) / 3.0
            })
            .collect()
    };

    Ok(points
        .iter()
        .zip(&scales)
        .map(|(p, &s)| {
            let raw = s.max(MIN_NN_DIST).ln();
            Gaussian {
                mu: p.xyz,
                raw_opacity: logit(0.1),
                raw_scale: Vector3::new(raw, raw, raw),
                rotation: [1.0, 0.0, 0.0, 0.0],
                color: Vector3::new(
                    p.rgb[0] as f64 / 255.0,
                    p.rgb[1] as f64 / 255.0,
                    p.rgb[2] as f64 / 255.0,
                ),
            }
        })
        .collect())
}
