//! Synthetic ground truth for desk-scale verification: procedural scenes,
//! camera rigs, a simulated sparse-reconstruction provider, and a
//! simulated monocular depth estimator with controllable per-view
//! scale/shift disagreement.

mod mono;
mod scene;
mod sfm_sim;

pub use mono::{mono_depth_sim, MonoMode, SimulatedMonoProvider};
pub use scene::{
    default_rig, gen_rig, gen_scene, scene_extent_from_cameras, RigKind, SceneKind,
    SyntheticScene,
};
pub use sfm_sim::{synthetic_sfm, SyntheticSfmProvider};
