//! Subcommand bodies. Primary results go to stdout; progress goes through
//! the logger.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use loopsplat::core::{world_to_camera, Camera, DepthMap};
use loopsplat::harness::scene_extent_from_cameras;
use loopsplat::io::{write_pfm, write_ppm};
use loopsplat::losses::ViewKind;
use loopsplat::pgi::{gen_pseudo_cameras, run_pgi, PgiConfig};
use loopsplat::raster::render;
use loopsplat::sfm::{
    filter_match_error, filter_pseudo_only, init_gaussians_from_points, parse_colmap_text,
    project_sparse_depth, SfmModel, MATCH_ERROR_TAU,
};
use loopsplat::train::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, TrainView};
use loopsplat::{Error, Result};
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{full_dataset, model_inputs};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::Io { context: format!("creating {}", path.display()), source: e })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidModel(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })
}

#[derive(Serialize)]
struct InitSummary {
    points: usize,
    initialized_points: usize,
    gaussians: usize,
    training_views: usize,
    extent: f64,
}

/// Builds the initial reconstruction and cloud, then writes
/// `init.ckpt` and `init.json` under the output directory.
pub fn cmd_init(cfg: &RunConfig) -> Result<()> {
    let inputs = model_inputs(cfg)?;
    let filtered = filter_pseudo_only(&inputs.model);
    let points: Vec<_> = filtered.points.values().cloned().collect();
    let cloud = init_gaussians_from_points(&points)?;
    let cams: Vec<Camera> = inputs.views.iter().map(|v| v.camera).collect();
    let extent = scene_extent_from_cameras(&cams);

    ensure_dir(&cfg.output_dir)?;
    let summary = InitSummary {
        points: inputs.model.points.len(),
        initialized_points: points.len(),
        gaussians: cloud.len(),
        training_views: inputs.views.len(),
        extent,
    };
    save_checkpoint(
        &cfg.output_dir.join("init.ckpt"),
        &Checkpoint { cloud, extent, iteration: 0, seed: cfg.seed },
    )?;
    write_json(&cfg.output_dir.join("init.json"), &summary)?;
    println!(
        "initialized {} gaussians from {} points into {}",
        summary.gaussians,
        summary.initialized_points,
        cfg.output_dir.join("init.ckpt").display()
    );
    Ok(())
}

/// Runs the progressive pipeline; `train` is the zero-loop special case.
/// Per-loop artifacts land in `loop_<l>/`, the final cloud and record
/// history at the output root.
pub fn cmd_loop(cfg: &RunConfig, loops_override: Option<usize>) -> Result<()> {
    let ds = full_dataset(cfg)?;
    let pgi_cfg = PgiConfig { loops: loops_override.unwrap_or(cfg.pgi.loops), ..cfg.pgi };
    ensure_dir(&cfg.output_dir)?;
    let state = run_pgi(
        &ds.inputs.model,
        &ds.training,
        ds.sfm.as_ref(),
        ds.mono.as_ref(),
        &pgi_cfg,
        &cfg.train,
        Some(&cfg.densify),
        &cfg.losses,
        Some(&cfg.output_dir),
    )?;

    let cams: Vec<Camera> = ds.training.iter().map(|t| t.camera).collect();
    let extent = scene_extent_from_cameras(&cams);
    save_checkpoint(
        &cfg.output_dir.join("final.ckpt"),
        &Checkpoint {
            cloud: state.cloud.clone(),
            extent,
            iteration: pgi_cfg.iterations_per_loop,
            seed: cfg.seed,
        },
    )?;
    write_json(&cfg.output_dir.join("history.json"), &state.records)?;
    println!(
        "finished {} loop(s): {} gaussians, point history {:?}",
        pgi_cfg.loops, state.cloud.len(), state.point_count_history
    );
    Ok(())
}

/// Renders a checkpoint from one camera into `<stem>.ppm` and `<stem>.pfm`.
pub fn cmd_render(
    checkpoint: &Path,
    camera: &Camera,
    background: Vector3<f64>,
    out_stem: &Path,
) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let out = render(&ckpt.cloud, camera, background)?;
    let with_ext = |ext: &str| -> PathBuf {
        let mut s = out_stem.as_os_str().to_owned();
        s.push(format!(".{ext}"));
        PathBuf::from(s)
    };
    if let Some(parent) = out_stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_ppm(&with_ext("ppm"), &out.color)?;
    write_pfm(&with_ext("pfm"), &out.depth)?;
    println!("{}", with_ext("ppm").display());
    println!("{}", with_ext("pfm").display());
    Ok(())
}

/// Which of the three track filters to apply when projecting depth.
#[derive(Debug, Clone, Copy)]
pub struct DepthFilters {
    /// Match-error threshold (reprojection error below tau).
    pub filter1: bool,
    /// Drop points whose track is entirely pseudo views.
    pub filter2: bool,
    /// Only project a point into views that actually observe it.
    pub filter3: bool,
}

impl Default for DepthFilters {
    fn default() -> Self {
        DepthFilters { filter1: true, filter2: true, filter3: true }
    }
}

/// Projection with the track-membership rule disabled: every eligible
/// point lands in every view that sees it in front of the camera.
fn project_ignoring_tracks(
    model: &SfmModel,
    view_id: u64,
    eligible: &BTreeMap<u64, bool>,
) -> Result<DepthMap> {
    let image = model
        .images
        .get(&view_id)
        .ok_or_else(|| Error::InvalidModel(format!("no image with id {view_id}")))?;
    let intr = model
        .cameras
        .get(&image.camera_id)
        .ok_or_else(|| Error::InvalidModel(format!("no camera with id {}", image.camera_id)))?;
    let pose = image.pose();
    let mut depth = DepthMap::new(intr.width, intr.height);
    for (id, point) in &model.points {
        if !eligible.get(id).copied().unwrap_or(false) {
            continue;
        }
        let pc = world_to_camera(&point.xyz, &pose);
        if pc.z <= 0.0 {
            continue;
        }
        let px = (intr.fx * pc.x / pc.z + intr.cx).round();
        let py = (intr.fy * pc.y / pc.z + intr.cy).round();
        if px < 0.0 || py < 0.0 || px >= intr.width as f64 || py >= intr.height as f64 {
            continue;
        }
        let (ix, iy) = (px as usize, py as usize);
        let current = depth.get(ix, iy);
        if current == 0.0 || pc.z < current {
            depth.set(ix, iy, pc.z);
        }
    }
    Ok(depth)
}

/// Writes one filtered sparse depth PFM per registered image.
pub fn cmd_depth(
    colmap_dir: &Path,
    out_dir: &Path,
    filters: DepthFilters,
    pseudo_prefix: &str,
) -> Result<()> {
    let mut model = parse_colmap_text(colmap_dir)?;
    model.label_pseudo_by_prefix(pseudo_prefix);
    model.validate()?;
    let working = if filters.filter2 { filter_pseudo_only(&model) } else { model };
    let eligible: BTreeMap<u64, bool> = if filters.filter1 {
        filter_match_error(&working, MATCH_ERROR_TAU)
    } else {
        working.points.keys().map(|&id| (id, true)).collect()
    };

    ensure_dir(out_dir)?;
    for (&id, image) in &working.images {
        let depth = if filters.filter3 {
            project_sparse_depth(&working, id, &eligible)?.0
        } else {
            project_ignoring_tracks(&working, id, &eligible)?
        };
        let stem = Path::new(&image.name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| image.name.clone());
        let path = out_dir.join(format!("{stem}.pfm"));
        write_pfm(&path, &depth)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Prints the pseudo cameras of one loop index as JSON and also stores
/// them under the output directory.
pub fn cmd_pseudo(cfg: &RunConfig, loop_index: usize) -> Result<()> {
    let inputs = model_inputs(cfg)?;
    let cams: Vec<Camera> = inputs.views.iter().map(|v| v.camera).collect();
    let pseudo = gen_pseudo_cameras(&cams, loop_index, &cfg.pgi)?;
    let text = serde_json::to_string_pretty(&pseudo)
        .map_err(|e| Error::InvalidModel(format!("serializing cameras: {e}")))?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("pseudo_cameras_l{loop_index}.json"));
    std::fs::write(&path, format!("{text}\n"))
        .map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })?;
    println!("{text}");
    Ok(())
}

/// PSNR/SSIM table of a checkpoint over the training views: JSON on disk,
/// an aligned text table on stdout.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let ds = full_dataset(cfg)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let views: Vec<TrainView> = ds
        .training
        .iter()
        .map(|t| TrainView {
            name: t.name.clone(),
            camera: t.camera,
            kind: ViewKind::Training,
            gt_image: Some(t.gt_image.clone()),
            sparse_depth: None,
            mono_depth: None,
        })
        .collect();
    let summary = evaluate(&ckpt.cloud, &views, Vector3::from(cfg.train.background))?;

    ensure_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("eval.json"), &summary)?;
    let name_w = summary
        .per_view
        .iter()
        .map(|r| r.name.len())
        .chain(["view".len(), "mean".len()])
        .max()
        .unwrap_or(4);
    println!("{:name_w$}  {:>8}  {:>8}", "view", "psnr", "ssim");
    for r in &summary.per_view {
        println!("{:name_w$}  {:>8.2}  {:>8.4}", r.name, r.psnr, r.ssim);
    }
    println!("{:name_w$}  {:>8.2}  {:>8.4}", "mean", summary.mean_psnr, summary.mean_ssim);
    Ok(())
}
