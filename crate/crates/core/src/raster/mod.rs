//! Differentiable splatting rasterizer.
//!
//! Forward: project each Gaussian to a 2D splat, sort by center depth,
//! alpha-blend front to back per pixel. Backward: exact gradients of
//! `sum_p (grad_color . C_p + grad_depth . D_p)` plus an optional uniform
//! per-hit alpha term, holding the sort order, culling set, alpha clamp,
//! and early-termination set fixed.
//!
//! Both passes chunk rows into fixed-size blocks and reduce block results
//! in block order, so outputs are bitwise identical at any thread count.

mod backward;
mod forward;
mod project;

pub use backward::{backward, BackwardOutput, GaussianGrad};
pub use forward::{render, RenderOutput};
pub use project::{project_gaussian, Splat2D, COV2D_DILATION, NEAR_PLANE};

pub(crate) use forward::transmittance_at_depth;
pub(crate) use project::project_sorted;

/// Rows per parallel work unit; fixed so the reduction order never depends
/// on the thread count.
pub(crate) const ROW_BLOCK: usize = 16;
