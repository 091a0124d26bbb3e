use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::core::camera::quat_to_matrix;
use crate::{Error, Result};

/// One anisotropic 3D Gaussian primitive.
///
/// Opacity and scale are stored pre-activation (`sigmoid` and `exp`
/// respectively) so the optimizer works on unconstrained values. The
/// rotation quaternion is stored unnormalized and normalized on use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: Vector3<f64>,
    pub raw_opacity: f64,
    pub raw_scale: Vector3<f64>,
    /// `(w, x, y, z)` order.
    pub rotation: [f64; 4],
    /// Linear RGB in `[0, 1]`, one constant color per primitive.
    pub color: Vector3<f64>,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.raw_opacity)
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.raw_scale.map(f64::exp)
    }

    pub fn rotation_quat(&self) -> Quaternion<f64> {
        Quaternion::new(
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.rotation[3],
        )
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.rotation_quat().normalize())
    }

    /// World-space covariance `R S S^T R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_from_scale_rotation(&self.scale(), &self.rotation_matrix())
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let finite = self.mu.iter().all(|v| v.is_finite())
            && self.raw_opacity.is_finite()
            && self.raw_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.color.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteParameter { index });
        }
        if self.rotation_quat().norm() < 1e-12 {
            return Err(Error::NonFiniteParameter { index });
        }
        Ok(())
    }
}

/// `R S S^T R^T` for activated scales `s` and rotation `R`.
pub fn covariance_from_scale_rotation(scale: &Vector3<f64>, r: &Matrix3<f64>) -> Matrix3<f64> {
    let rs = Matrix3::from_columns(&[
        r.column(0) * scale.x,
        r.column(1) * scale.y,
        r.column(2) * scale.z,
    ]);
    rs * rs.transpose()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of `sigmoid`; caller must keep `p` strictly inside `(0, 1)`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_logit_fixed_points() {
        assert_relative_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(logit(0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(logit(0.1), -(9.0f64).ln(), epsilon = 1e-12);
        assert_relative_eq!(sigmoid(logit(0.1)), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_extremes_stay_finite() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0).is_finite());
    }

    #[test]
    fn covariance_identity_rotation_is_diagonal() {
        let s = Vector3::new(1.0, 2.0, 3.0);
        let cov = covariance_from_scale_rotation(&s, &Matrix3::identity());
        assert_relative_eq!(cov[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 4.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(2, 2)], 9.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_eigenvalues_are_squared_scales() {
        // Arbitrary rotation; the spectrum must be the squared scales
        // regardless of orientation.
        let q = Quaternion::new(0.9, 0.1, -0.3, 0.25).normalize();
        let r = quat_to_matrix(&q);
        let s = Vector3::new(0.5, 1.5, 2.5);
        let cov = covariance_from_scale_rotation(&s, &r);
        let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(eig[0], 0.25, epsilon = 1e-10);
        assert_relative_eq!(eig[1], 2.25, epsilon = 1e-10);
        assert_relative_eq!(eig[2], 6.25, epsilon = 1e-10);
    }

    #[test]
    fn validate_rejects_nan() {
        let mut g = Gaussian {
            mu: Vector3::zeros(),
            raw_opacity: 0.0,
            raw_scale: Vector3::zeros(),
            rotation: [1.0, 0.0, 0.0, 0.0],
            color: Vector3::zeros(),
        };
        assert!(g.validate(0).is_ok());
        g.mu.x = f64::NAN;
        assert!(matches!(
            g.validate(7),
            Err(Error::NonFiniteParameter { index: 7 })
        ));
    }

    proptest! {
        #[test]
        fn activation_round_trip(p in 1e-6f64..=(1.0 - 1e-6)) {
            prop_assert!((sigmoid(logit(p)) - p).abs() < 1e-9);
        }

        #[test]
        fn covariance_is_symmetric_psd(
            s in prop::array::uniform3(-3.0f64..3.0),
            q in prop::array::uniform4(-1.0f64..1.0),
        ) {
            let qn = Quaternion::new(q[0], q[1], q[2], q[3]);
            prop_assume!(qn.norm() > 1e-3);
            let r = quat_to_matrix(&qn.normalize());
            let scale = Vector3::new(s[0].exp(), s[1].exp(), s[2].exp());
            let cov = covariance_from_scale_rotation(&scale, &r);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((cov[(i, j)] - cov[(j, i)]).abs() < 1e-12);
                }
            }
            for ev in cov.symmetric_eigenvalues().iter() {
                prop_assert!(*ev > 0.0);
            }
        }
    }
}
