//! The run configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use loopsplat::densify::DensifyConfig;
use loopsplat::harness::{MonoMode, RigKind, SceneKind};
use loopsplat::losses::LossWeights;
use loopsplat::pgi::PgiConfig;
use loopsplat::train::TrainConfig;
use loopsplat::{Error, Result};
use serde::{Deserialize, Serialize};

/// Top-level configuration. Exactly one of `scene` (synthetic data) and
/// `colmap_dir` (a COLMAP text model) selects the data source. The
/// top-level `seed` and `deterministic` are the single knobs for
/// reproducibility: `resolve` copies them into the `train` and `pgi`
/// sections, and every optional per-section seed falls back to `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: Option<SceneConfig>,
    pub colmap_dir: Option<PathBuf>,
    pub rig: RigConfig,
    pub train: TrainConfig,
    pub pgi: PgiConfig,
    pub densify: DensifyConfig,
    pub losses: LossWeights,
    pub providers: ProvidersConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: Some(SceneConfig::default()),
            colmap_dir: None,
            rig: RigConfig::default(),
            train: TrainConfig::default(),
            pgi: PgiConfig::default(),
            densify: DensifyConfig::default(),
            losses: LossWeights::default(),
            providers: ProvidersConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            deterministic: true,
        }
    }
}

/// Synthetic scene source.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub gaussians: usize,
    /// Falls back to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { kind: SceneKind::BlobField, gaussians: 200, seed: None }
    }
}

/// Capture rig for synthetic data. Three views is the sparse-input
/// setting the pipeline is built around.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub kind: RigKind,
    pub views: usize,
    pub radius: f64,
    pub target: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            kind: RigKind::ForwardArc,
            views: 3,
            radius: 2.5,
            target: [0.0, 0.0, 0.0],
            width: 64,
            height: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProvidersConfig {
    pub sfm: SfmProviderConfig,
    pub mono: MonoProviderConfig,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        ProvidersConfig {
            sfm: SfmProviderConfig::Synthetic { noise_px: 0.5, dropout: 0.7, seed: None },
            mono: MonoProviderConfig::Simulator { mode: MonoMode::Affine, seed: None },
        }
    }
}

/// Where sparse reconstructions come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SfmProviderConfig {
    /// Re-read a COLMAP text directory on every loop; an external
    /// reconstruction step is expected to refresh it.
    ColmapDir {
        dir: PathBuf,
        #[serde(default = "default_pseudo_prefix")]
        pseudo_prefix: String,
    },
    /// Simulate triangulation against the synthetic scene.
    Synthetic {
        #[serde(default = "default_noise_px")]
        noise_px: f64,
        #[serde(default = "default_dropout")]
        dropout: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_pseudo_prefix() -> String {
    "pseudo_".into()
}

fn default_noise_px() -> f64 {
    0.5
}

fn default_dropout() -> f64 {
    0.7
}

/// Where dense monocular depth comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonoProviderConfig {
    /// Precomputed maps at `<dir>/<image stem>.pfm`.
    FileDir {
        dir: PathBuf,
        #[serde(default)]
        is_inverse: bool,
    },
    /// Per-view affine remap of rendered depth.
    Simulator {
        #[serde(default = "default_mono_mode")]
        mode: MonoMode,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_mono_mode() -> MonoMode {
    MonoMode::Affine
}

impl RunConfig {
    /// Pushes the top-level reproducibility knobs into the sections that
    /// carry their own copies.
    pub fn resolve(&mut self) {
        self.train.seed = self.seed;
        self.pgi.seed = self.seed;
        self.train.deterministic = self.deterministic;
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.scene, &self.colmap_dir) {
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of `scene` and `colmap_dir` must be set".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "`scene` and `colmap_dir` are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        if let Some(scene) = &self.scene {
            if scene.gaussians == 0 {
                return Err(Error::InvalidConfig("scene.gaussians must be at least 1".into()));
            }
        }
        if self.rig.views == 0 {
            return Err(Error::InvalidConfig("rig.views must be at least 1".into()));
        }
        if !(self.rig.radius > 0.0 && self.rig.radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rig.radius must be positive, got {}",
                self.rig.radius
            )));
        }
        if self.rig.width == 0 || self.rig.height == 0 {
            return Err(Error::InvalidConfig("rig dimensions must be nonzero".into()));
        }
        if let SfmProviderConfig::Synthetic { noise_px, dropout, .. } = &self.providers.sfm {
            if self.scene.is_none() {
                return Err(Error::InvalidConfig(
                    "providers.sfm `synthetic` requires a `scene` section".into(),
                ));
            }
            if !(*noise_px >= 0.0 && noise_px.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "providers.sfm.noise_px must be >= 0, got {noise_px}"
                )));
            }
            if !(0.0..=1.0).contains(dropout) {
                return Err(Error::InvalidConfig(format!(
                    "providers.sfm.dropout must lie in [0, 1], got {dropout}"
                )));
            }
        }
        if matches!(self.providers.mono, MonoProviderConfig::Simulator { .. })
            && self.scene.is_none()
            && self.losses.lambda_p > 0.0
        {
            return Err(Error::InvalidConfig(
                "providers.mono `simulator` cannot supply training-view depth without a \
                 `scene` section; set losses.lambda_p to 0 or use a `file_dir` provider"
                    .into(),
            ));
        }
        self.train.validate()?;
        self.pgi.validate()?;
        self.densify.validate()?;
        self.losses.validate()?;
        Ok(())
    }
}

/// Reads, resolves, and validates a configuration file. `seed` and
/// `deterministic` overrides take effect before resolution so they reach
/// every section.
pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    deterministic_override: Option<bool>,
) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    if let Some(d) = deterministic_override {
        cfg.deterministic = d;
    }
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}
