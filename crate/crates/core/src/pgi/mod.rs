//! Progressive initialization: jittered pseudo cameras around the capture,
//! and the outer loop that renders them, accumulates their images through
//! the reconstruction provider, filters, and re-initializes the cloud.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::{camera_bbox, Camera, CameraPose, DepthMap, Gaussian, ImageBuffer};
use crate::densify::DensifyConfig;
use crate::io::{read_pfm, write_pfm, write_ppm};
use crate::losses::{LossWeights, ViewKind};
use crate::raster::render;
use crate::sfm::{
    filter_match_error, filter_pseudo_only, init_gaussians_from_points, project_sparse_depth,
    SfmModel, SfmProvider, SfmView, MATCH_ERROR_TAU,
};
use crate::train::{
    save_checkpoint, save_metric_log, train, Checkpoint, MetricRecord, TrainConfig, TrainView,
};
use crate::{Error, Result};

/// Outer-loop schedule and the pseudo-camera noise model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgiConfig {
    /// Number of refinement loops after the initial training run.
    pub loops: usize,
    /// Pseudo cameras generated per training view per loop.
    pub pseudo_per_view: usize,
    /// Base standard deviation of the camera-center jitter.
    pub epsilon: f64,
    /// Per-loop widening of the jitter: sigma = epsilon + delta * loop.
    pub delta: f64,
    pub iterations_per_loop: usize,
    /// Keep the trained cloud across loops instead of re-initializing.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for PgiConfig {
    fn default() -> Self {
        PgiConfig {
            loops: 3,
            pseudo_per_view: 4,
            epsilon: 0.02,
            delta: 0.1,
            iterations_per_loop: 10_000,
            warm_start: false,
            seed: 0,
        }
    }
}

impl PgiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pseudo_per_view < 1 {
            return Err(Error::InvalidConfig("pseudo_per_view must be at least 1".into()));
        }
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One stream per (loop, view, sample) so the sequence never depends on
/// generation order.
fn pseudo_rng(seed: u64, l: u64, j: u64, i: u64) -> ChaCha8Rng {
    let mut z = seed
        ^ l.wrapping_mul(0x9e3779b97f4a7c15)
        ^ j.wrapping_mul(0xbf58476d1ce4e5b9)
        ^ i.wrapping_mul(0x94d049bb133111eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Hemisphere-aligned normalized linear midpoint of two unit quaternions.
fn quat_midpoint(a: Quaternion<f64>, b: Quaternion<f64>) -> Quaternion<f64> {
    let b = if a.dot(&b) < 0.0 { -b } else { b };
    (a + b).normalize()
}

/// Samples `pseudo_per_view` cameras around every training camera.
///
/// Each center is the training center plus isotropic Gaussian noise of
/// standard deviation `epsilon + delta * l`, clamped componentwise into
/// the bounding box of the training centers. The orientation is the
/// midpoint of the two training views nearest the clamped center (the
/// lone view's own orientation when only one exists); intrinsics are
/// copied from the view that seeded the sample.
pub fn gen_pseudo_cameras(training: &[Camera], l: usize, cfg: &PgiConfig) -> Result<Vec<Camera>> {
    cfg.validate()?;
    if training.is_empty() {
        return Err(Error::NoCameras);
    }
    let poses: Vec<CameraPose> = training.iter().map(|c| c.pose).collect();
    let bbox = camera_bbox(&poses)?;
    let sigma = cfg.epsilon + cfg.delta * l as f64;

    let mut out = Vec::with_capacity(training.len() * cfg.pseudo_per_view);
    for (j, cam) in training.iter().enumerate() {
        for i in 0..cfg.pseudo_per_view {
            let mut rng = pseudo_rng(cfg.seed, l as u64, j as u64, i as u64);
            let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
            let eta = sigma * Vector3::new(draw(), draw(), draw());
            let center = bbox.clamp(cam.pose.center + eta);

            let rotation = if training.len() == 1 {
                training[0].pose.rotation.normalize()
            } else {
                let mut by_dist: Vec<usize> = (0..training.len()).collect();
                by_dist.sort_by(|&a, &b| {
                    let da = (training[a].pose.center - center).norm();
                    let db = (training[b].pose.center - center).norm();
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                });
                quat_midpoint(
                    training[by_dist[0]].pose.rotation.normalize(),
                    training[by_dist[1]].pose.rotation.normalize(),
                )
            };
            out.push(Camera::new(cam.intrinsics, CameraPose::new(rotation, center)?));
        }
    }
    Ok(out)
}

/// Everything the mono-depth provider may draw on for one image.
pub struct MonoRequest<'a> {
    pub view_id: u64,
    pub name: &'a str,
    pub image: &'a ImageBuffer,
    /// Rendered depth of the same view, for providers that simulate an
    /// estimator instead of running one.
    pub depth_hint: &'a DepthMap,
}

/// Source of dense relative depth for a single image.
pub trait MonoDepthProvider {
    fn estimate(&self, req: &MonoRequest<'_>) -> Result<DepthMap>;
}

/// Reads precomputed monocular depth from `<dir>/<image stem>.pfm`.
pub struct FileDirMonoProvider {
    pub dir: PathBuf,
    /// Set when the stored maps are inverse depth.
    pub is_inverse: bool,
}

impl FileDirMonoProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileDirMonoProvider { dir: dir.into(), is_inverse: false }
    }
}

impl MonoDepthProvider for FileDirMonoProvider {
    fn estimate(&self, req: &MonoRequest<'_>) -> Result<DepthMap> {
        let stem = Path::new(req.name)
            .file_stem()
            .ok_or_else(|| Error::Provider(format!("image name '{}' has no stem", req.name)))?;
        read_pfm(&self.dir.join(format!("{}.pfm", stem.to_string_lossy())), self.is_inverse)
    }
}

/// A pseudo view and every buffer derived for it.
#[derive(Debug, Clone)]
pub struct PseudoView {
    pub image_id: u64,
    pub name: String,
    pub camera: Camera,
    /// Rendering from the cloud that was current when the view was born.
    pub image: ImageBuffer,
    pub mono: DepthMap,
    /// Rebuilt from the newest reconstruction each loop.
    pub sparse: DepthMap,
}

/// Point counts and end-of-loop training stats, one per completed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub loop_index: usize,
    /// Points surviving the pseudo-only filter, i.e. the initialization
    /// set of this loop.
    pub initialized_points: usize,
    pub final_gaussians: usize,
    /// Total loss at the last logged iteration; 0 when nothing was logged.
    pub final_loss: f64,
}

/// Rolling state of the outer loop.
#[derive(Debug, Clone)]
pub struct LoopState {
    pub loop_index: usize,
    /// Grows by `pseudo_per_view * P` every loop and never shrinks.
    pub accumulated_pseudo: Vec<PseudoView>,
    pub cloud: Vec<Gaussian>,
    pub training_sparse: BTreeMap<u64, DepthMap>,
    /// `initialized_points` per loop, the growth signal of the method.
    pub point_count_history: Vec<usize>,
    pub records: Vec<LoopRecord>,
}

/// A captured view with its ground-truth image and optional mono depth.
#[derive(Debug, Clone)]
pub struct PgiTrainingView {
    pub image_id: u64,
    pub name: String,
    pub camera: Camera,
    pub gt_image: ImageBuffer,
    /// Required whenever the Pearson weight is nonzero.
    pub mono_depth: Option<DepthMap>,
}

fn wrap_loop<T>(loop_index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::LoopFailed { loop_index, source: Box::new(e) })
}

/// Sparse depth maps for every view plus the initialization point set of
/// the model, after both track filters.
fn depths_and_points(
    model: &SfmModel,
    view_ids: impl Iterator<Item = u64>,
) -> Result<(BTreeMap<u64, DepthMap>, Vec<crate::sfm::SfmPoint3D>)> {
    let filtered = filter_pseudo_only(model);
    let eligible = filter_match_error(&filtered, MATCH_ERROR_TAU);
    let mut maps = BTreeMap::new();
    for id in view_ids {
        let (depth, _behind) = project_sparse_depth(&filtered, id, &eligible)?;
        maps.insert(id, depth);
    }
    Ok((maps, filtered.points.into_values().collect()))
}

fn assemble_views(
    training: &[PgiTrainingView],
    training_sparse: &BTreeMap<u64, DepthMap>,
    pseudo: &[PseudoView],
) -> Vec<TrainView> {
    let mut views: Vec<TrainView> = training
        .iter()
        .map(|t| TrainView {
            name: t.name.clone(),
            camera: t.camera,
            kind: ViewKind::Training,
            gt_image: Some(t.gt_image.clone()),
            sparse_depth: training_sparse.get(&t.image_id).cloned(),
            mono_depth: t.mono_depth.clone(),
        })
        .collect();
    views.extend(pseudo.iter().map(|p| TrainView {
        name: p.name.clone(),
        camera: p.camera,
        kind: ViewKind::Pseudo,
        gt_image: None,
        sparse_depth: Some(p.sparse.clone()),
        mono_depth: Some(p.mono.clone()),
    }));
    views
}

fn write_loop_artifacts(
    out_dir: &Path,
    loop_index: usize,
    state: &LoopState,
    new_pseudo: std::ops::Range<usize>,
    metrics: &[MetricRecord],
    extent: f64,
    seed: u64,
    iterations: usize,
) -> Result<()> {
    let dir = out_dir.join(format!("loop_{loop_index}"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for p in &state.accumulated_pseudo[new_pseudo] {
        let stem = Path::new(&p.name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.name.clone());
        write_ppm(&dir.join(format!("{stem}.ppm")), &p.image)?;
        write_pfm(&dir.join(format!("{stem}_mono.pfm")), &p.mono)?;
        write_pfm(&dir.join(format!("{stem}_sparse.pfm")), &p.sparse)?;
    }
    save_checkpoint(
        &dir.join("cloud.ckpt"),
        &Checkpoint { cloud: state.cloud.clone(), extent, iteration: iterations, seed },
    )?;
    save_metric_log(&dir.join("metrics.jsonl"), metrics)?;
    let history = serde_json::to_string_pretty(&state.records).expect("records serialize");
    std::fs::write(dir.join("history.json"), history)
        .map_err(|e| Error::io("writing history.json", e))
}

/// Runs the full progressive loop.
///
/// Loop 0 initializes from `initial` and trains. Every later loop `l`
/// samples `pseudo_per_view` cameras per training view with noise index
/// `l`, renders them from the current cloud, asks the mono provider for
/// their depth, reruns the reconstruction provider over the training views
/// plus every pseudo view accumulated so far, filters the result, rebuilds
/// all sparse depth maps, re-initializes the cloud from the surviving
/// points (unless `warm_start`), and trains again. Provider failures abort
/// with the loop index attached.
#[allow(clippy::too_many_arguments)]
pub fn run_pgi(
    initial: &SfmModel,
    training: &[PgiTrainingView],
    sfm: &dyn SfmProvider,
    mono: &dyn MonoDepthProvider,
    cfg: &PgiConfig,
    train_cfg: &TrainConfig,
    densify_cfg: Option<&DensifyConfig>,
    weights: &LossWeights,
    out_dir: Option<&Path>,
) -> Result<LoopState> {
    cfg.validate()?;
    train_cfg.validate()?;
    weights.validate()?;
    if training.is_empty() {
        return Err(Error::NoCameras);
    }
    for t in training {
        if !initial.images.contains_key(&t.image_id) {
            return Err(Error::InvalidModel(format!(
                "training view '{}' (id {}) missing from the initial reconstruction",
                t.name, t.image_id
            )));
        }
    }
    let training_cams: Vec<Camera> = training.iter().map(|t| t.camera).collect();
    let extent = crate::harness::scene_extent_from_cameras(&training_cams);
    let loop_train_cfg = TrainConfig { iterations: cfg.iterations_per_loop, ..*train_cfg };
    let mut next_pseudo_id = training.iter().map(|t| t.image_id).max().unwrap_or(0) + 1;

    let mut state = LoopState {
        loop_index: 0,
        accumulated_pseudo: Vec::new(),
        cloud: Vec::new(),
        training_sparse: BTreeMap::new(),
        point_count_history: Vec::new(),
        records: Vec::new(),
    };

    // Loop 0: plain training on the initial reconstruction.
    let (maps, points) = depths_and_points(initial, training.iter().map(|t| t.image_id))?;
    state.training_sparse = maps;
    state.point_count_history.push(points.len());
    state.cloud = init_gaussians_from_points(&points)?;
    let views = assemble_views(training, &state.training_sparse, &[]);
    let trained = train(
        std::mem::take(&mut state.cloud),
        &views,
        &loop_train_cfg,
        densify_cfg,
        weights,
        extent,
    )?;
    state.cloud = trained.cloud;
    state.records.push(LoopRecord {
        loop_index: 0,
        initialized_points: points.len(),
        final_gaussians: state.cloud.len(),
        final_loss: trained.metrics.last().map(|m| m.loss.total).unwrap_or(0.0),
    });
    if let Some(dir) = out_dir {
        write_loop_artifacts(
            dir,
            0,
            &state,
            0..0,
            &trained.metrics,
            extent,
            cfg.seed,
            cfg.iterations_per_loop,
        )?;
    }

    let background = Vector3::from(train_cfg.background);
    for l in 1..=cfg.loops {
        state.loop_index = l;
        let new_cams = gen_pseudo_cameras(&training_cams, l, cfg)?;
        let first_new = state.accumulated_pseudo.len();
        for (k, cam) in new_cams.into_iter().enumerate() {
            let (j, i) = (k / cfg.pseudo_per_view, k % cfg.pseudo_per_view);
            let rendered = render(&state.cloud, &cam, background)?;
            let name = format!("pseudo_l{l}_v{j}_s{i}.png");
            let request = MonoRequest {
                view_id: next_pseudo_id,
                name: &name,
                image: &rendered.color,
                depth_hint: &rendered.depth,
            };
            let mono_depth = wrap_loop(l, mono.estimate(&request))?;
            state.accumulated_pseudo.push(PseudoView {
                image_id: next_pseudo_id,
                name,
                camera: cam,
                image: rendered.color,
                mono: mono_depth,
                sparse: DepthMap::new(cam.width(), cam.height()),
            });
            next_pseudo_id += 1;
        }

        let mut request: Vec<SfmView> = training
            .iter()
            .map(|t| SfmView {
                image_id: t.image_id,
                name: t.name.clone(),
                camera: t.camera,
                kind: ViewKind::Training,
            })
            .collect();
        request.extend(state.accumulated_pseudo.iter().map(|p| SfmView {
            image_id: p.image_id,
            name: p.name.clone(),
            camera: p.camera,
            kind: ViewKind::Pseudo,
        }));
        let model = wrap_loop(l, sfm.run(&request))?;

        let all_ids = training
            .iter()
            .map(|t| t.image_id)
            .chain(state.accumulated_pseudo.iter().map(|p| p.image_id));
        let (mut maps, points) = depths_and_points(&model, all_ids)?;
        for p in &mut state.accumulated_pseudo {
            if let Some(depth) = maps.remove(&p.image_id) {
                p.sparse = depth;
            }
        }
        state.training_sparse = maps;
        state.point_count_history.push(points.len());
        if !cfg.warm_start {
            state.cloud = init_gaussians_from_points(&points)?;
        }

        let views = assemble_views(training, &state.training_sparse, &state.accumulated_pseudo);
        let trained = train(
            std::mem::take(&mut state.cloud),
            &views,
            &loop_train_cfg,
            densify_cfg,
            weights,
            extent,
        )?;
        state.cloud = trained.cloud;
        state.records.push(LoopRecord {
            loop_index: l,
            initialized_points: points.len(),
            final_gaussians: state.cloud.len(),
            final_loss: trained.metrics.last().map(|m| m.loss.total).unwrap_or(0.0),
        });
        if let Some(dir) = out_dir {
            write_loop_artifacts(
                dir,
                l,
                &state,
                first_new..state.accumulated_pseudo.len(),
                &trained.metrics,
                extent,
                cfg.seed,
                cfg.iterations_per_loop,
            )?;
        }
    }
    Ok(state)
}
