//! End-to-end tests of the `loopsplat` binary: exit codes, artifact
//! formats, and cross-command consistency.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopsplat::core::{Camera, CameraIntrinsics};
use loopsplat::harness::{gen_scene, SceneKind};
use loopsplat::io::{read_pfm, read_ppm, write_ppm};
use loopsplat::raster::render;
use loopsplat::sfm::{serialize_colmap_text, SfmImage, SfmModel, SfmPoint3D};
use loopsplat::train::{load_checkpoint, save_checkpoint, Checkpoint, EvalSummary};
use nalgebra::Vector3;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loopsplat"));
    c.env("LOOPSPLAT_THREADS", "2").env("RUST_LOG", "warn");
    c
}

fn run_ok(c: &mut Command) -> Output {
    let out = c.output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small synthetic config: 3 views of a 15-blob scene at 32x32.
fn write_config(dir: &Path, out_dir: &Path) -> PathBuf {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{
  "scene": {{"kind": "blob_field", "gaussians": 15, "seed": 3}},
  "rig": {{"views": 3, "width": 32, "height": 32}},
  "pgi": {{"loops": 1, "pseudo_per_view": 2, "iterations_per_loop": 40}},
  "losses": {{"window_len": 16, "window_stride": 8}},
  "providers": {{
    "sfm": {{"kind": "synthetic", "noise_px": 0.4, "dropout": 0.5}},
    "mono": {{"kind": "simulator"}}
  }},
  "output_dir": {:?},
  "seed": 7
}}"#,
        out_dir.to_str().unwrap()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("loop"));
}

#[test]
fn unknown_flag_exits_one() {
    let out = bin().args(["init", "--confg", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_one_and_names_it() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"bogus_key": 1}"#).unwrap();
    let out = bin().args(["init", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn missing_checkpoint_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("out"));
    let out = bin()
        .args(["eval", "--config", cfg.to_str().unwrap(), "--checkpoint", "absent.ckpt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn init_writes_checkpoint_and_summary() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &out_dir);
    run_ok(bin().args(["init", "--config", cfg.to_str().unwrap()]));
    let ckpt = load_checkpoint(&out_dir.join("init.ckpt")).unwrap();
    assert!(!ckpt.cloud.is_empty());
    assert_eq!(ckpt.iteration, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("init.json")).unwrap()).unwrap();
    assert_eq!(summary["gaussians"].as_u64().unwrap() as usize, ckpt.cloud.len());
    assert_eq!(summary["training_views"], 3);
}

#[test]
fn render_output_reloads_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &out_dir);
    run_ok(bin().args(["init", "--config", cfg.to_str().unwrap()]));
    run_ok(bin().args([
        "render",
        "--checkpoint",
        out_dir.join("init.ckpt").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--view",
        "1",
        "--out",
        out_dir.join("v1").to_str().unwrap(),
    ]));

    // Same render through the library.
    let ckpt = load_checkpoint(&out_dir.join("init.ckpt")).unwrap();
    let cameras: Vec<Camera> = loopsplat::harness::gen_rig(
        loopsplat::harness::RigKind::ForwardArc,
        3,
        2.5,
        Vector3::zeros(),
        32,
        32,
    )
    .unwrap();
    let expected = render(&ckpt.cloud, &cameras[1], Vector3::zeros()).unwrap();

    // Depth reloads as exactly the f32 rounding of the render.
    let depth = read_pfm(&out_dir.join("v1.pfm"), false).unwrap();
    assert_eq!(depth.data.len(), expected.depth.data.len());
    for (a, b) in depth.data.iter().zip(&expected.depth.data) {
        assert_eq!(*a, *b as f32 as f64);
    }

    // Color reloads as the 8-bit quantization, and re-writing the loaded
    // image reproduces the file byte for byte.
    let color = read_ppm(&out_dir.join("v1.ppm")).unwrap();
    for (a, b) in color.data.iter().zip(&expected.color.data) {
        let q = (b.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        assert!((a - q).abs() < 1e-12);
    }
    let rewritten = dir.path().join("rewrite.ppm");
    write_ppm(&rewritten, &color).unwrap();
    assert_eq!(std::fs::read(&rewritten).unwrap(), std::fs::read(out_dir.join("v1.ppm")).unwrap());
}

#[test]
fn pseudo_prints_parseable_cameras() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &out_dir);
    let out = run_ok(bin().args([
        "pseudo",
        "--config",
        cfg.to_str().unwrap(),
        "--loop-index",
        "2",
    ]));
    let cams: Vec<Camera> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cams.len(), 3 * 2);
    let stored: Vec<Camera> = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("pseudo_cameras_l2.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(cams.len(), stored.len());
    for (a, b) in cams.iter().zip(&stored) {
        assert_eq!(a.pose.center, b.pose.center);
    }
}

#[test]
fn eval_of_the_generating_cloud_hits_the_sentinel() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &out_dir);
    // A checkpoint holding exactly the scene that makes the ground truth.
    let scene = gen_scene(SceneKind::BlobField, 15, 3).unwrap();
    std::fs::create_dir_all(&out_dir).unwrap();
    let ckpt_path = out_dir.join("gt.ckpt");
    save_checkpoint(
        &ckpt_path,
        &Checkpoint { cloud: scene.gt_cloud, extent: scene.extent, iteration: 0, seed: 3 },
    )
    .unwrap();
    let out = run_ok(bin().args([
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt_path.to_str().unwrap(),
    ]));
    let summary: EvalSummary =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(summary.per_view.len(), 3);
    for r in &summary.per_view {
        assert_eq!(r.psnr, 99.0, "view {} not at the sentinel", r.name);
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("99.00"));
}

#[test]
fn train_matches_loop_zero_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    std::fs::create_dir_all(dir.path().join("ca")).unwrap();
    std::fs::create_dir_all(dir.path().join("cb")).unwrap();
    let cfg_a = write_config(&dir.path().join("ca"), &out_a);
    let cfg_b = write_config(&dir.path().join("cb"), &out_b);
    run_ok(bin().args(["train", "--config", cfg_a.to_str().unwrap()]));
    run_ok(bin().args(["loop", "--config", cfg_b.to_str().unwrap(), "--loops", "0"]));
    for file in ["final.ckpt", "history.json", "loop_0/cloud.ckpt", "loop_0/metrics.jsonl"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between train and loop --loops 0");
    }
}

/// Fixture with one normal point, one high-error point, one pseudo-only
/// point, and one single-view point; three 16x16 views on the x axis.
fn depth_fixture(dir: &Path) {
    let intr = CameraIntrinsics::new(20.0, 20.0, 8.0, 8.0, 16, 16).unwrap();
    let image = |name: &str, tvec: [f64; 3], keypoints: Vec<(f64, f64, i64)>| SfmImage {
        name: name.into(),
        camera_id: 1,
        qvec: [1.0, 0.0, 0.0, 0.0],
        tvec,
        keypoints,
    };
    let point = |id: u64, xyz: [f64; 3], err: f64, track: Vec<(u64, usize)>| SfmPoint3D {
        id,
        xyz: Vector3::from(xyz),
        rgb: [100, 110, 120],
        reproj_error: err,
        track,
    };
    let mut model = SfmModel::default();
    model.cameras.insert(1, intr);
    model.images.insert(
        1,
        image("a.png", [0.0, 0.0, 0.0], vec![(8.0, 8.0, 1), (9.0, 8.0, 2), (8.0, 7.0, 4)]),
    );
    model
        .images
        .insert(2, image("b.png", [-0.2, 0.0, 0.0], vec![(6.0, 8.0, 1), (7.0, 8.0, 2)]));
    model.images.insert(3, image("pseudo_p.png", [0.2, 0.0, 0.0], vec![(9.0, 9.0, 3)]));
    model.points.insert(1, point(1, [0.0, 0.0, 2.0], 0.5, vec![(1, 0), (2, 0)]));
    model.points.insert(2, point(2, [0.1, 0.0, 2.0], 2.5, vec![(1, 1), (2, 1)]));
    model.points.insert(3, point(3, [-0.1, 0.1, 2.0], 0.5, vec![(3, 0)]));
    model.points.insert(4, point(4, [0.0, -0.1, 2.0], 0.5, vec![(1, 2)]));
    model.training_image_ids.extend([1, 2]);
    model.pseudo_image_ids.insert(3);
    model.validate().unwrap();
    serialize_colmap_text(&model, dir).unwrap();
}

#[test]
fn depth_filter_flags_control_what_projects() {
    let dir = TempDir::new().unwrap();
    let model_dir = dir.path().join("model");
    std::fs::create_dir_all(&model_dir).unwrap();
    depth_fixture(&model_dir);
    let run_depth = |out: &str, flags: &[&str]| {
        let out_dir = dir.path().join(out);
        let mut c = bin();
        c.args([
            "depth",
            "--colmap-dir",
            model_dir.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        c.args(flags);
        run_ok(&mut c);
        out_dir
    };
    let at = |dir: &Path, name: &str, x: usize, y: usize| -> f64 {
        read_pfm(&dir.join(name), false).unwrap().get(x, y)
    };

    let default = run_depth("default", &[]);
    // The normal point lands in both training views at depth 2.
    assert_eq!(at(&default, "a.pfm", 8, 8), 2.0);
    assert_eq!(at(&default, "b.pfm", 6, 8), 2.0);
    // High reprojection error: excluded everywhere.
    assert_eq!(at(&default, "a.pfm", 9, 8), 0.0);
    // Pseudo-only point: removed, its view's map is empty.
    let pseudo_map = read_pfm(&default.join("pseudo_p.pfm"), false).unwrap();
    assert!(pseudo_map.data.iter().all(|v| *v == 0.0));
    // Single-view point: present where tracked, absent elsewhere.
    assert_eq!(at(&default, "a.pfm", 8, 7), 2.0);
    assert_eq!(at(&default, "b.pfm", 6, 7), 0.0);

    let no2 = run_depth("no2", &["--no-filter2"]);
    assert_eq!(at(&no2, "pseudo_p.pfm", 9, 9), 2.0);

    let no1 = run_depth("no1", &["--no-filter1"]);
    assert_eq!(at(&no1, "a.pfm", 9, 8), 2.0);

    // Without the track rule the single-view point projects into the
    // other training view as well.
    let no3 = run_depth("no3", &["--no-filter3"]);
    assert_eq!(at(&no3, "b.pfm", 6, 7), 2.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    std::fs::create_dir_all(dir.path().join("ca")).unwrap();
    std::fs::create_dir_all(dir.path().join("cb")).unwrap();
    let cfg_a = write_config(&dir.path().join("ca"), &out_a);
    let cfg_b = write_config(&dir.path().join("cb"), &out_b);
    let mut one = bin();
    one.env("LOOPSPLAT_THREADS", "1");
    run_ok(one.args(["train", "--config", cfg_a.to_str().unwrap()]));
    let mut four = bin();
    four.env("LOOPSPLAT_THREADS", "4");
    run_ok(four.args(["train", "--config", cfg_b.to_str().unwrap()]));
    assert_eq!(
        std::fs::read(out_a.join("final.ckpt")).unwrap(),
        std::fs::read(out_b.join("final.ckpt")).unwrap()
    );
}
