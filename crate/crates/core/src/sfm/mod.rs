//! Sparse-reconstruction handling: COLMAP text models, the three point
//! filters, per-view sparse depth projection, and cloud initialization
//! from points.

mod colmap;
mod depth;
mod filters;
mod init;
mod provider;

pub use colmap::{parse_colmap_text, serialize_colmap_text, SfmImage, SfmModel, SfmPoint3D};
pub use depth::project_sparse_depth;
pub use filters::{filter_match_error, filter_pseudo_only, MATCH_ERROR_TAU};
pub use init::init_gaussians_from_points;
pub use provider::{ColmapDirProvider, SfmProvider, SfmView};
