//! Turns a configuration into concrete pipeline inputs: cameras, the
//! initial reconstruction, ground-truth images, and providers.

use std::path::Path;

use loopsplat::core::{Camera, DepthMap};
use loopsplat::harness::{gen_rig, gen_scene, SimulatedMonoProvider, SyntheticScene, SyntheticSfmProvider};
use loopsplat::io::read_ppm;
use loopsplat::losses::ViewKind;
use loopsplat::pgi::{FileDirMonoProvider, MonoDepthProvider, MonoRequest, PgiTrainingView};
use loopsplat::raster::render;
use loopsplat::sfm::{parse_colmap_text, SfmModel, SfmProvider, SfmView};
use loopsplat::{Error, Result};
use nalgebra::Vector3;

use crate::config::{MonoProviderConfig, RunConfig, SfmProviderConfig};

/// Identity and pose of one training view, before any image is loaded.
#[derive(Debug, Clone)]
pub struct ViewMeta {
    pub image_id: u64,
    pub name: String,
    pub camera: Camera,
}

/// The initial reconstruction and the training views it covers. For
/// synthetic data the generating scene rides along for providers and
/// ground-truth rendering.
pub struct ModelInputs {
    pub model: SfmModel,
    pub views: Vec<ViewMeta>,
    pub scene: Option<SyntheticScene>,
}

/// Everything `train`, `loop`, and `eval` need.
pub struct Dataset {
    pub inputs: ModelInputs,
    pub training: Vec<PgiTrainingView>,
    pub sfm: Box<dyn SfmProvider>,
    pub mono: Box<dyn MonoDepthProvider>,
}

fn sfm_views(views: &[ViewMeta]) -> Vec<SfmView> {
    views
        .iter()
        .map(|v| SfmView {
            image_id: v.image_id,
            name: v.name.clone(),
            camera: v.camera,
            kind: ViewKind::Training,
        })
        .collect()
}

/// Builds the model and view list without touching any image data, so
/// `init`, `depth`, and `pseudo` stay cheap.
pub fn model_inputs(cfg: &RunConfig) -> Result<ModelInputs> {
    if let Some(scene_cfg) = &cfg.scene {
        let scene = gen_scene(scene_cfg.kind, scene_cfg.gaussians, scene_cfg.seed.unwrap_or(cfg.seed))?;
        let cams = gen_rig(
            cfg.rig.kind,
            cfg.rig.views,
            cfg.rig.radius,
            Vector3::from(cfg.rig.target),
            cfg.rig.width,
            cfg.rig.height,
        )?;
        let views: Vec<ViewMeta> = cams
            .into_iter()
            .enumerate()
            .map(|(i, camera)| ViewMeta {
                image_id: i as u64 + 1,
                name: format!("view{i:03}.png"),
                camera,
            })
            .collect();
        let provider = make_sfm_provider(cfg, Some(&scene))?;
        let model = provider.run(&sfm_views(&views))?;
        Ok(ModelInputs { model, views, scene: Some(scene) })
    } else {
        let dir = cfg.colmap_dir.as_ref().expect("validated source");
        let mut model = parse_colmap_text(dir)?;
        let prefix = match &cfg.providers.sfm {
            SfmProviderConfig::ColmapDir { pseudo_prefix, .. } => pseudo_prefix.clone(),
            _ => "pseudo_".into(),
        };
        model.label_pseudo_by_prefix(&prefix);
        model.validate()?;
        let mut views = Vec::new();
        for id in &model.training_image_ids {
            let image = &model.images[id];
            let intrinsics = model.cameras[&image.camera_id];
            views.push(ViewMeta {
                image_id: *id,
                name: image.name.clone(),
                camera: Camera::new(intrinsics, image.pose()),
            });
        }
        Ok(ModelInputs { model, views, scene: None })
    }
}

pub fn make_sfm_provider(
    cfg: &RunConfig,
    scene: Option<&SyntheticScene>,
) -> Result<Box<dyn SfmProvider>> {
    match &cfg.providers.sfm {
        SfmProviderConfig::ColmapDir { dir, pseudo_prefix } => {
            Ok(Box::new(loopsplat::sfm::ColmapDirProvider {
                dir: dir.clone(),
                pseudo_prefix: pseudo_prefix.clone(),
            }))
        }
        SfmProviderConfig::Synthetic { noise_px, dropout, seed } => {
            let scene = scene.ok_or_else(|| {
                Error::InvalidConfig("synthetic reconstruction needs a scene".into())
            })?;
            Ok(Box::new(SyntheticSfmProvider {
                scene: scene.clone(),
                noise_px: *noise_px,
                dropout: *dropout,
                seed: seed.unwrap_or(cfg.seed),
            }))
        }
    }
}

pub fn make_mono_provider(cfg: &RunConfig) -> Box<dyn MonoDepthProvider> {
    match &cfg.providers.mono {
        MonoProviderConfig::FileDir { dir, is_inverse } => {
            Box::new(FileDirMonoProvider { dir: dir.clone(), is_inverse: *is_inverse })
        }
        MonoProviderConfig::Simulator { mode, seed } => {
            Box::new(SimulatedMonoProvider { mode: *mode, seed: seed.unwrap_or(cfg.seed) })
        }
    }
}

fn gt_image_path(colmap_dir: &Path, name: &str) -> std::path::PathBuf {
    let stem = Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string());
    colmap_dir.join("images").join(format!("{stem}.ppm"))
}

/// Loads ground-truth images (and monocular depth when the Pearson weight
/// asks for it) on top of [`model_inputs`].
pub fn full_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let inputs = model_inputs(cfg)?;
    let mono = make_mono_provider(cfg);
    let background = Vector3::from(cfg.train.background);
    let want_mono = cfg.losses.lambda_p > 0.0;

    let mut training = Vec::with_capacity(inputs.views.len());
    for v in &inputs.views {
        let (gt_image, depth_hint) = match &inputs.scene {
            Some(scene) => {
                let out = render(&scene.gt_cloud, &v.camera, background)?;
                (out.color, out.depth)
            }
            None => {
                let dir = cfg.colmap_dir.as_ref().expect("validated source");
                let path = gt_image_path(dir, &v.name);
                let image = read_ppm(&path)?;
                // File-based mono providers ignore the hint.
                let empty = DepthMap::new(image.width, image.height);
                (image, empty)
            }
        };
        let mono_depth = if want_mono {
            Some(mono.estimate(&MonoRequest {
                view_id: v.image_id,
                name: &v.name,
                image: &gt_image,
                depth_hint: &depth_hint,
            })?)
        } else {
            None
        };
        training.push(PgiTrainingView {
            image_id: v.image_id,
            name: v.name.clone(),
            camera: v.camera,
            gt_image,
            mono_depth,
        });
    }

    let sfm = make_sfm_provider(cfg, inputs.scene.as_ref())?;
    Ok(Dataset { inputs, training, sfm, mono })
}
