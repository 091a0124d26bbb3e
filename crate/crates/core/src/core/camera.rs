use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(Error::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }
}

/// Rigid pose, world to camera: `x = R * (p - center)`.
///
/// The quaternion is stored in `(w, x, y, z)` order and is expected to be
/// unit norm; poses are fixed inputs and are never optimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Quaternion<f64>,
    pub center: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Quaternion<f64>, center: Vector3<f64>) -> Result<Self> {
        let pose = CameraPose { rotation, center };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: Quaternion::new(1.0, 0.0, 0.0, 0.0),
            center: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rotation.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPose(format!(
                "rotation quaternion norm {} is not 1",
                n
            )));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPose("non-finite center".into()));
        }
        Ok(())
    }

    /// Rotation matrix of the (normalized) quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.rotation.normalize())
    }

    /// Pose that looks from `center` at `target`, image y pointing down.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let zc = (target - center).normalize();
        let xc = zc.cross(&up).normalize();
        let yc = zc.cross(&xc);
        // Rows are the camera axes expressed in world coordinates.
        let r = Matrix3::from_rows(&[xc.transpose(), yc.transpose(), zc.transpose()]);
        CameraPose {
            rotation: matrix_to_quat(&r),
            center,
        }
    }
}

impl Serialize for CameraPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr {
            rotation: [
                self.rotation.w,
                self.rotation.i,
                self.rotation.j,
                self.rotation.k,
            ],
            center: [self.center.x, self.center.y, self.center.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        Ok(CameraPose {
            rotation: Quaternion::new(
                repr.rotation[0],
                repr.rotation[1],
                repr.rotation[2],
                repr.rotation[3],
            ),
            center: Vector3::new(repr.center[0], repr.center[1], repr.center[2]),
        })
    }
}

/// Wire form of a pose: quaternion as `[w, x, y, z]`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 4],
    center: [f64; 3],
}

/// A full camera: intrinsics plus pose. Training cameras and generated
/// pseudo cameras share this type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Camera { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }
}

/// Map a world point into camera space.
pub fn world_to_camera(point: &Vector3<f64>, pose: &CameraPose) -> Vector3<f64> {
    pose.rotation_matrix() * (point - pose.center)
}

/// Axis-aligned box over camera centers, expanded per axis by
/// `max(1e-3 * extent, 1e-6)` so no axis is ever zero width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    /// Componentwise clamp into the box.
    pub fn clamp(&self, p: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }
}

/// Bounding box of the camera centers, the clamping region for pseudo
/// cameras.
pub fn camera_bbox(poses: &[CameraPose]) -> Result<Aabb> {
    if poses.is_empty() {
        return Err(Error::NoCameras);
    }
    let mut min = poses[0].center;
    let mut max = poses[0].center;
    for pose in &poses[1..] {
        for a in 0..3 {
            min[a] = min[a].min(pose.center[a]);
            max[a] = max[a].max(pose.center[a]);
        }
    }
    for a in 0..3 {
        let margin = (1e-3 * (max[a] - min[a])).max(1e-6);
        min[a] -= margin;
        max[a] += margin;
    }
    Ok(Aabb { min, max })
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub(crate) fn quat_to_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unit quaternion of a rotation matrix (Shepperd's method).
pub(crate) fn matrix_to_quat(r: &Matrix3<f64>) -> Quaternion<f64> {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let (w, x, y, z);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (r[(2, 1)] - r[(1, 2)]) / s;
        y = (r[(0, 2)] - r[(2, 0)]) / s;
        z = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(2, 1)] - r[(1, 2)]) / s;
        x = 0.25 * s;
        y = (r[(0, 1)] + r[(1, 0)]) / s;
        z = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(0, 2)] - r[(2, 0)]) / s;
        x = (r[(0, 1)] + r[(1, 0)]) / s;
        y = 0.25 * s;
        z = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        w = (r[(1, 0)] - r[(0, 1)]) / s;
        x = (r[(0, 2)] + r[(2, 0)]) / s;
        y = (r[(1, 2)] + r[(2, 1)]) / s;
        z = 0.25 * s;
    }
    Quaternion::new(w, x, y, z).normalize()
}
