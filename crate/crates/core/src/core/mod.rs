//! Geometry and parameter primitives shared by the whole pipeline.
//!
//! One convention is fixed repo-wide: a camera pose maps world points into
//! camera space as `x = R * (p - center)`, with `+z` looking forward. Every
//! parser and generator converts into this frame.

mod camera;
mod gaussian;
mod image;

pub use camera::{camera_bbox, world_to_camera, Aabb, Camera, CameraIntrinsics, CameraPose};
pub use gaussian::{covariance_from_scale_rotation, logit, sigmoid, Gaussian};
pub use image::{DepthMap, ImageBuffer};
