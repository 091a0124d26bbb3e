//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line. Run with `--nocapture` to see every line; on failure
//! the offending line and detail surface in the panic message.

use std::path::Path;
use std::time::Instant;

use loopsplat::core::{Camera, CameraIntrinsics, DepthMap, Gaussian, ImageBuffer};
use loopsplat::densify::{sfs_select, sfs_split, DensifyConfig};
use loopsplat::harness::{
    default_rig, gen_rig, gen_scene, mono_depth_sim, MonoMode, RigKind, SceneKind,
    SimulatedMonoProvider, SyntheticSfmProvider,
};
use loopsplat::losses::{
    opacity_regularization_grad_coeff, photometric_backward, sparse_depth_l1_backward,
    total_loss, windowed_pearson_backward, windowed_pearson_loss, LossWeights, PearsonReduce,
    ViewKind,
};
use loopsplat::pgi::{run_pgi, PgiConfig, PgiTrainingView};
use loopsplat::raster::{backward, project_gaussian, render, GaussianGrad};
use loopsplat::sfm::{
    filter_match_error, filter_pseudo_only, init_gaussians_from_points, parse_colmap_text,
    project_sparse_depth, serialize_colmap_text, SfmImage, SfmModel, SfmPoint3D, SfmProvider,
    SfmView, MATCH_ERROR_TAU,
};
use loopsplat::train::{evaluate, train, TrainConfig, TrainView};
use loopsplat_cli::config::RunConfig;
use loopsplat_cli::dataset::full_dataset;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn criterion(name: &str, ok: bool, detail: &str) {
    println!("acceptance {name}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------- 1

fn nudged(cloud: &[Gaussian], i: usize, k: usize, h: f64) -> Vec<Gaussian> {
    let mut c = cloud.to_vec();
    match k {
        0..=2 => c[i].mu[k] += h,
        3 => c[i].raw_opacity += h,
        4..=6 => c[i].raw_scale[k - 4] += h,
        7..=10 => c[i].rotation[k - 7] += h,
        11..=13 => c[i].color[k - 11] += h,
        _ => unreachable!(),
    }
    c
}

fn grad_component(g: &GaussianGrad, k: usize) -> f64 {
    match k {
        0..=2 => g.d_mu[k],
        3 => g.d_raw_opacity,
        4..=6 => g.d_raw_scale[k - 4],
        7..=10 => g.d_rotation_q[k - 7],
        11..=13 => g.d_color[k - 11],
        _ => unreachable!(),
    }
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let start = Instant::now();
    let scene = gen_scene(SceneKind::BlobField, 8, 12).unwrap();
    let cloud = scene.gt_cloud.clone();
    let cam = gen_rig(RigKind::ForwardArc, 1, 2.5, Vector3::zeros(), 16, 16).unwrap()[0];
    let bg = Vector3::zeros();

    // Ground truth leads the render by a patterned, strictly positive
    // offset, so the L1 residual keeps one sign at every pixel and the
    // finite-difference probe never steps across its kink.
    let clean = render(&cloud, &cam, bg).unwrap();
    let mut gt = clean.color.clone();
    for y in 0..16 {
        for x in 0..16 {
            let off = 0.12 + 0.06 * ((x + y) % 5) as f64 / 5.0;
            let p = 3 * (y * 16 + x);
            for c in 0..3 {
                gt.data[p + c] += off;
            }
        }
    }

    // Depth supervision off the clean render: sparse targets on covered
    // pixels with a stable-signed offset, dense mono as an affine remap.
    let mut sfm = DepthMap::new(16, 16);
    for y in (1..16).step_by(3) {
        for x in (1..16).step_by(3) {
            let p = y * 16 + x;
            if clean.accum_alpha[p] > 0.5 {
                sfm.set(x, y, clean.depth.get(x, y) * 1.05);
            }
        }
    }
    let mono = mono_depth_sim(&clean.depth, 1.3, 0.2, MonoMode::Affine).unwrap();
    let weights = LossWeights {
        lambda_o: 0.0,
        window_len: 8,
        window_stride: 4,
        ..LossWeights::default()
    };
    let loss_of = |c: &[Gaussian]| -> f64 {
        let out = render(c, &cam, bg).unwrap();
        total_loss(&out.color, Some(&gt), &out, Some(&sfm), Some(&mono), &weights, ViewKind::Training)
            .unwrap()
            .total
    };

    // Analytic gradient assembled the way the trainer does it.
    let out = render(&cloud, &cam, bg).unwrap();
    let grad_color = photometric_backward(&out.color, &gt, &weights, 1.0).unwrap();
    let g_sparse = sparse_depth_l1_backward(&out.depth, &sfm).unwrap();
    let g_pearson = windowed_pearson_backward(
        &out.depth,
        &mono,
        weights.window_len,
        weights.window_stride,
        weights.pearson_reduce,
        weights.lambda_p,
    )
    .unwrap();
    let grad_depth: Vec<f64> = g_sparse
        .iter()
        .zip(&g_pearson)
        .map(|(s, p)| weights.lambda_d * s + p)
        .collect();
    let coeff = opacity_regularization_grad_coeff(&out, weights.lambda_o);
    let back = backward(&cloud, &cam, bg, &grad_color, &grad_depth, coeff).unwrap();

    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut worst_at = (0usize, 0usize);
    let mut checked = 0usize;
    for i in 0..cloud.len() {
        for k in 0..14 {
            let lp = loss_of(&nudged(&cloud, i, k, h));
            let lm = loss_of(&nudged(&cloud, i, k, -h));
            let fd = (lp - lm) / (2.0 * h);
            if fd.abs() <= 1e-8 {
                continue;
            }
            checked += 1;
            let rel = (grad_component(&back.grads[i], k) - fd).abs() / fd.abs();
            if rel > worst {
                worst = rel;
                worst_at = (i, k);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst < 1e-3 && checked > 50 && elapsed < 60.0;
    criterion(
        "01 gradient-correctness",
        ok,
        &format!(
            "worst relative error {worst:.3e} at gaussian {} param {} over {checked} checks in {elapsed:.1}s",
            worst_at.0, worst_at.1
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_blending_conserves_weight() {
    let mut worst_low = 1.0f64;
    let mut worst_high = 1.0f64;
    for seed in 0..100u64 {
        let scene = gen_scene(SceneKind::BlobField, 12, seed).unwrap();
        let cams = default_rig();
        let cam = &cams[(seed as usize) % cams.len()];
        let out = render(&scene.gt_cloud, cam, Vector3::zeros()).unwrap();
        for p in 0..out.accum_alpha.len() {
            let s = out.accum_alpha[p] + out.transmittance[p];
            worst_low = worst_low.min(s);
            worst_high = worst_high.max(s);
        }
    }
    let ok = worst_low >= 1.0 - 1e-4 && worst_high <= 1.0 + 1e-6;
    criterion(
        "02 blending-conservation",
        ok,
        &format!("weight + transmittance spanned [{worst_low:.9}, {worst_high:.9}]"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_pearson_affine_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut fill = |d: &mut DepthMap| {
        for v in &mut d.data {
            *v = rng.gen_range(1.0..5.0);
        }
    };
    let mut x = DepthMap::new(64, 64);
    let mut y = DepthMap::new(64, 64);
    fill(&mut x);
    fill(&mut y);
    let base = windowed_pearson_loss(&x, &y, 32, 4, PearsonReduce::Mean).unwrap();

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = rng.gen_range(0.5..3.0);
        let b = rng.gen_range(-0.5..0.5);
        let mut scaled = y.clone();
        for v in &mut scaled.data {
            *v = a * *v + b;
        }
        let l = windowed_pearson_loss(&x, &scaled, 32, 4, PearsonReduce::Mean).unwrap();
        worst = worst.max((l - base).abs());
    }
    criterion(
        "03 pearson-affine-invariance",
        worst < 1e-9,
        &format!("largest deviation {worst:.3e} over 50 affine draws"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_overfit_reaches_thirty_db() {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (mean_psnr, elapsed) = pool.install(|| {
        let scene = gen_scene(SceneKind::BlobField, 50, 4).unwrap();
        let cams = default_rig();
        let bg = Vector3::zeros();
        let views: Vec<SfmView> = cams
            .iter()
            .enumerate()
            .map(|(i, c)| SfmView {
                image_id: i as u64 + 1,
                name: format!("view{i}.png"),
                camera: *c,
                kind: ViewKind::Training,
            })
            .collect();
        let provider =
            SyntheticSfmProvider { scene: scene.clone(), noise_px: 0.0, dropout: 0.0, seed: 4 };
        let model = provider.run(&views).unwrap();
        let filtered = filter_pseudo_only(&model);
        let points: Vec<_> = filtered.points.values().cloned().collect();
        let cloud = init_gaussians_from_points(&points).unwrap();

        let train_views: Vec<TrainView> = cams
            .iter()
            .enumerate()
            .map(|(i, c)| TrainView {
                name: format!("view{i}.png"),
                camera: *c,
                kind: ViewKind::Training,
                gt_image: Some(render(&scene.gt_cloud, c, bg).unwrap().color),
                sparse_depth: None,
                mono_depth: None,
            })
            .collect();
        let weights = LossWeights {
            lambda_d: 0.0,
            lambda_p: 0.0,
            lambda_o: 0.0,
            ..LossWeights::default()
        };
        let cfg = TrainConfig { iterations: 2000, ..TrainConfig::default() };
        let extent = loopsplat::harness::scene_extent_from_cameras(&cams);
        let out = train(cloud, &train_views, &cfg, Some(&DensifyConfig::default()), &weights, extent)
            .unwrap();
        let summary = evaluate(&out.cloud, &train_views, bg).unwrap();
        (summary.mean_psnr, start.elapsed().as_secs_f64())
    });
    let ok = mean_psnr >= 30.0 && elapsed < 600.0;
    criterion(
        "04 overfit-sanity",
        ok,
        &format!("mean training PSNR {mean_psnr:.2} dB in {elapsed:.0}s single-threaded"),
    );
}

// ---------------------------------------------------------------- 5

fn ablation_arm(seed: u64, full: bool) -> f64 {
    let scene = gen_scene(SceneKind::BlobField, 60, seed).unwrap();
    let all_cams = gen_rig(RigKind::ForwardArc, 9, 2.5, Vector3::zeros(), 48, 48).unwrap();
    let train_idx = [0usize, 4, 8];
    let bg = Vector3::zeros();
    let mono = SimulatedMonoProvider { mode: MonoMode::Affine, seed: seed ^ 0xa5 };

    let training: Vec<PgiTrainingView> = train_idx
        .iter()
        .enumerate()
        .map(|(n, &i)| {
            let out = render(&scene.gt_cloud, &all_cams[i], bg).unwrap();
            let mono_depth = mono.estimate(n as u64 + 1, &out.depth).unwrap();
            PgiTrainingView {
                image_id: n as u64 + 1,
                name: format!("view{n}.png"),
                camera: all_cams[i],
                gt_image: out.color,
                mono_depth: Some(mono_depth),
            }
        })
        .collect();
    let sfm_views: Vec<SfmView> = training
        .iter()
        .map(|t| SfmView {
            image_id: t.image_id,
            name: t.name.clone(),
            camera: t.camera,
            kind: ViewKind::Training,
        })
        .collect();
    let provider =
        SyntheticSfmProvider { scene: scene.clone(), noise_px: 0.5, dropout: 0.5, seed: seed ^ 0x33 };
    let initial = provider.run(&sfm_views).unwrap();

    let weights = if full {
        LossWeights { window_len: 16, window_stride: 8, ..LossWeights::default() }
    } else {
        LossWeights { lambda_d: 0.0, lambda_p: 0.0, lambda_o: 0.0, ..LossWeights::default() }
    };
    let densify = DensifyConfig {
        start_iter: 300,
        interval: 150,
        sfs_start: if full { 400 } else { usize::MAX / 2 },
        sfs_interval: 300,
        ..DensifyConfig::default()
    };
    let pgi = PgiConfig {
        loops: if full { 1 } else { 0 },
        pseudo_per_view: 4,
        iterations_per_loop: if full { 750 } else { 1500 },
        warm_start: false,
        seed,
        ..PgiConfig::default()
    };
    let tcfg = TrainConfig { seed, ..TrainConfig::default() };
    let state = run_pgi(
        &initial,
        &training,
        &provider,
        &mono,
        &pgi,
        &tcfg,
        Some(&densify),
        &weights,
        None,
    )
    .unwrap();

    let heldout: Vec<TrainView> = (0..all_cams.len())
        .filter(|i| !train_idx.contains(i))
        .map(|i| TrainView {
            name: format!("held{i}.png"),
            camera: all_cams[i],
            kind: ViewKind::Training,
            gt_image: Some(render(&scene.gt_cloud, &all_cams[i], bg).unwrap().color),
            sparse_depth: None,
            mono_depth: None,
        })
        .collect();
    evaluate(&state.cloud, &heldout, bg).unwrap().mean_psnr
}

#[test]
fn criterion_05_ablation_direction() {
    let seeds = [31u64, 32, 33];
    let mut full_sum = 0.0;
    let mut base_sum = 0.0;
    let mut rows = Vec::new();
    for &s in &seeds {
        let f = ablation_arm(s, true);
        let b = ablation_arm(s, false);
        rows.push(format!("seed {s}: full {f:.2} dB vs baseline {b:.2} dB"));
        full_sum += f;
        base_sum += b;
    }
    let full_mean = full_sum / seeds.len() as f64;
    let base_mean = base_sum / seeds.len() as f64;
    criterion(
        "05 ablation-direction",
        full_mean > base_mean,
        &format!(
            "held-out mean {full_mean:.2} dB (full) vs {base_mean:.2} dB (baseline); {}",
            rows.join("; ")
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_progressive_point_growth() {
    // The shipped synthetic defaults; training length does not touch the
    // reconstruction (the provider only reads cameras), so zero-iteration
    // loops measure pure point growth.
    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.resolve();
    cfg.validate().unwrap();
    let ds = full_dataset(&cfg).unwrap();
    let pgi = PgiConfig { loops: 3, iterations_per_loop: 0, ..cfg.pgi };
    let state = run_pgi(
        &ds.inputs.model,
        &ds.training,
        ds.sfm.as_ref(),
        ds.mono.as_ref(),
        &pgi,
        &cfg.train,
        None,
        &cfg.losses,
        None,
    )
    .unwrap();
    let h = &state.point_count_history;
    let monotone = h.windows(2).all(|w| w[0] <= w[1]);
    let ok = h.len() == 4 && h[0] >= 1 && monotone && h[3] >= 2 * h[0];
    criterion(
        "06 pgi-growth",
        ok,
        &format!("point counts per loop {h:?} (need monotone and final >= 2x initial)"),
    );
}

// ---------------------------------------------------------------- 7

/// Two training views on the x axis plus one pseudo view; four points:
/// a normal one, a high-error one, a pseudo-only one, a single-view one.
fn filter_fixture() -> SfmModel {
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
        rgb: [90, 120, 150],
        reproj_error: err,
        track,
    };
    let mut m = SfmModel::default();
    m.cameras.insert(1, intr);
    m.images.insert(
        1,
        image("a.png", [0.0, 0.0, 0.0], vec![(8.0, 8.0, 1), (9.0, 8.0, 2), (8.0, 7.0, 4)]),
    );
    m.images.insert(2, image("b.png", [-0.2, 0.0, 0.0], vec![(6.0, 8.0, 1), (7.0, 8.0, 2)]));
    m.images.insert(3, image("pseudo_p.png", [0.2, 0.0, 0.0], vec![(9.0, 9.0, 3)]));
    m.points.insert(1, point(1, [0.0, 0.0, 2.0], 0.5, vec![(1, 0), (2, 0)]));
    m.points.insert(2, point(2, [0.1, 0.0, 2.0], 2.5, vec![(1, 1), (2, 1)]));
    m.points.insert(3, point(3, [-0.1, 0.1, 2.0], 0.5, vec![(3, 0)]));
    m.points.insert(4, point(4, [0.0, -0.1, 2.0], 0.5, vec![(1, 2)]));
    m.training_image_ids.extend([1, 2]);
    m.pseudo_image_ids.insert(3);
    m.validate().unwrap();
    m
}

#[test]
fn criterion_07_filter_fixture_exactness() {
    let model = filter_fixture();
    let filtered = filter_pseudo_only(&model);
    let eligible = filter_match_error(&filtered, MATCH_ERROR_TAU);
    let points: Vec<_> = filtered.points.values().cloned().collect();
    let cloud = init_gaussians_from_points(&points).unwrap();
    let (d1, _) = project_sparse_depth(&filtered, 1, &eligible).unwrap();
    let (d2, _) = project_sparse_depth(&filtered, 2, &eligible).unwrap();

    let high_err_in_init = cloud.iter().any(|g| g.mu == Vector3::new(0.1, 0.0, 2.0));
    let high_err_not_in_depth = d1.get(9, 8) == 0.0 && d2.get(7, 8) == 0.0;
    let pseudo_only_removed = !filtered.points.contains_key(&3)
        && cloud.iter().all(|g| g.mu != Vector3::new(-0.1, 0.1, 2.0));
    let normal_present = d1.get(8, 8) == 2.0 && d2.get(6, 8) == 2.0;
    let untracked_absent = d1.get(8, 7) == 2.0 && d2.get(6, 7) == 0.0;
    let ok = high_err_in_init
        && high_err_not_in_depth
        && pseudo_only_removed
        && normal_present
        && untracked_absent;
    criterion(
        "07 filter-fixture",
        ok,
        &format!(
            "high-err init {high_err_in_init}, high-err depth-excluded {high_err_not_in_depth}, \
             pseudo-only removed {pseudo_only_removed}, normal present {normal_present}, \
             untracked absent {untracked_absent}"
        ),
    );
}

// ---------------------------------------------------------------- 8

fn max_projected_radius(cloud: &[Gaussian], cams: &[Camera]) -> f64 {
    let mut r = 0.0f64;
    for cam in cams {
        for (i, g) in cloud.iter().enumerate() {
            if let Some(s) = project_gaussian(g, cam, i) {
                r = r.max(s.radius);
            }
        }
    }
    r
}

#[test]
fn criterion_08_sfs_splits_the_blurry_gaussian() {
    let cams = gen_rig(RigKind::ForwardArc, 3, 2.5, Vector3::zeros(), 48, 48).unwrap();
    let bg = Vector3::zeros();
    let small = |mu: [f64; 3], color: [f64; 3]| Gaussian {
        mu: Vector3::from(mu),
        raw_opacity: 2.0,
        raw_scale: Vector3::from_element((0.06f64).ln()),
        rotation: [1.0, 0.0, 0.0, 0.0],
        color: Vector3::from(color),
    };
    let mut gt_cloud = vec![
        small([0.35, 0.35, 0.0], [1.0, 0.1, 0.1]),
        small([-0.35, 0.35, 0.0], [0.1, 1.0, 0.1]),
        small([-0.35, -0.35, 0.0], [0.1, 0.1, 1.0]),
        small([0.35, -0.35, 0.0], [1.0, 1.0, 0.1]),
    ];
    let mut cloud = gt_cloud.clone();
    // One quadrant rendered by an oversized gray blob instead.
    cloud[0] = Gaussian {
        mu: Vector3::new(0.35, 0.35, 0.0),
        raw_opacity: 1.5,
        raw_scale: Vector3::from_element((0.5f64).ln()),
        rotation: [1.0, 0.0, 0.0, 0.0],
        color: Vector3::new(0.5, 0.5, 0.5),
    };
    gt_cloud.truncate(4);

    let gts: Vec<ImageBuffer> =
        cams.iter().map(|c| render(&gt_cloud, c, bg).unwrap().color).collect();
    let renders: Vec<_> = cams.iter().map(|c| render(&cloud, c, bg).unwrap()).collect();
    let selected = sfs_select(&renders, &gts, 0.01).unwrap();

    let before = cloud.len();
    let radius_before = max_projected_radius(&cloud, &cams);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    sfs_split(&mut cloud, &selected, 2, 1.6, &mut rng).unwrap();
    let radius_after = max_projected_radius(&cloud, &cams);

    let ok = selected == vec![0]
        && cloud.len() == before + 1
        && radius_after < radius_before;
    criterion(
        "08 sfs-effect",
        ok,
        &format!(
            "selected {selected:?}, count {before} -> {}, max radius {radius_before:.2} -> {radius_after:.2}",
            cloud.len()
        ),
    );
}

// ---------------------------------------------------------------- 9

const COLMAP_FIXTURE_CAMERAS: &str = "\
# Camera list with one line of data per camera:
#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]
1 PINHOLE 640 480 525.5 526.25 320.0 240.0
2 SIMPLE_PINHOLE 320 240 262.75 160.0 120.0
";

const COLMAP_FIXTURE_IMAGES: &str = "\
# Image list with two lines of data per image:
#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME
#   POINTS2D[] as (X, Y, POINT3D_ID)
1 0.9961946980917455 0.08715574274765817 0.0 0.0 -0.25 1.5e-2 2.0 1 left.png
100.5 200.25 7 320.0 240.0 -1 15.125 99.875 9
2 1.0 0.0 0.0 0.0 0.125 -0.375 1.75 2 right.png
60.0 110.0 7
3 0.7071067811865476 0.0 0.7071067811865476 0.0 0.0 0.0 2.5 1 pseudo_side.png

";

const COLMAP_FIXTURE_POINTS: &str = "\
# 3D point list with one line of data per point:
#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)
7 -0.5 0.25 3.75 200 150 100 0.4375 1 0 2 0
9 1.25e-1 -2.5 4.0 10 20 30 1.75 1 2
";

#[test]
fn criterion_09_parser_roundtrip() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("cameras.txt"), COLMAP_FIXTURE_CAMERAS).unwrap();
    std::fs::write(dir.path().join("images.txt"), COLMAP_FIXTURE_IMAGES).unwrap();
    std::fs::write(dir.path().join("points3D.txt"), COLMAP_FIXTURE_POINTS).unwrap();

    let first = parse_colmap_text(dir.path()).unwrap();
    let out = TempDir::new().unwrap();
    serialize_colmap_text(&first, out.path()).unwrap();
    let second = parse_colmap_text(out.path()).unwrap();

    let counts_ok = first.cameras.len() == 2 && first.images.len() == 3 && first.points.len() == 2;
    let values_ok = first.images[&1].tvec == [-0.25, 1.5e-2, 2.0]
        && first.images[&1].keypoints[2] == (15.125, 99.875, 9)
        && first.points[&7].reproj_error == 0.4375
        && first.points[&9].xyz == Vector3::new(0.125, -2.5, 4.0);
    let ok = counts_ok && values_ok && first == second;
    criterion(
        "09 parser-fidelity",
        ok,
        &format!(
            "counts ok {counts_ok}, values ok {values_ok}, models equal {}",
            first == second
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_cli_loop_determinism() {
    let dir = TempDir::new().unwrap();
    let write_cfg = |tag: &str| {
        let out_dir = dir.path().join(tag);
        let path = dir.path().join(format!("{tag}.json"));
        let text = format!(
            r#"{{
  "scene": {{"kind": "blob_field", "gaussians": 15, "seed": 3}},
  "rig": {{"views": 3, "width": 32, "height": 32}},
  "pgi": {{"loops": 1, "pseudo_per_view": 2, "iterations_per_loop": 120}},
  "losses": {{"window_len": 16, "window_stride": 8}},
  "providers": {{
    "sfm": {{"kind": "synthetic", "noise_px": 0.4, "dropout": 0.5}},
    "mono": {{"kind": "simulator"}}
  }},
  "output_dir": {:?},
  "seed": 11,
  "deterministic": true
}}"#,
            out_dir.to_str().unwrap()
        );
        std::fs::write(&path, text).unwrap();
        (path, out_dir)
    };
    let (cfg_a, out_a) = write_cfg("a");
    let (cfg_b, out_b) = write_cfg("b");
    let run = |cfg: &Path| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_loopsplat"))
            .args(["loop", "--config", cfg.to_str().unwrap()])
            .env("LOOPSPLAT_THREADS", "3")
            .env("RUST_LOG", "warn")
            .output()
            .expect("spawn binary");
        assert!(out.status.success(), "loop failed: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&cfg_a);
    run(&cfg_b);

    let mut all_equal = true;
    let mut detail = Vec::new();
    for file in
        ["loop_0/metrics.jsonl", "loop_1/metrics.jsonl", "loop_0/cloud.ckpt", "loop_1/cloud.ckpt", "final.ckpt"]
    {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        if a != b {
            all_equal = false;
            detail.push(file);
        }
        if a.is_empty() {
            all_equal = false;
            detail.push("empty artifact");
        }
    }
    criterion(
        "10 loop-determinism",
        all_equal,
        &format!("artifacts differing between identical runs: {detail:?}"),
    );
}

// ---------------------------------------------------------------- 11

#[test]
fn criterion_11_defaults_audit() {
    let v = serde_json::to_value(RunConfig::default()).unwrap();
    let checks: Vec<(&str, f64)> = vec![
        ("/pgi/loops", 3.0),
        ("/pgi/pseudo_per_view", 4.0),
        ("/pgi/epsilon", 0.02),
        ("/pgi/delta", 0.1),
        ("/pgi/iterations_per_loop", 10000.0),
        ("/densify/start_iter", 1000.0),
        ("/densify/interval", 200.0),
        ("/densify/grad_threshold", 0.0005),
        ("/losses/window_len", 32.0),
        ("/losses/window_stride", 4.0),
        ("/losses/lambda1", 0.8),
        ("/losses/lambda2", 0.2),
        ("/losses/lambda_o", 0.05),
        ("/losses/lambda_d", 0.005),
        ("/losses/lambda_p", 0.05),
        ("/train/iterations", 10000.0),
    ];
    let mut bad = Vec::new();
    for (ptr, want) in &checks {
        match v.pointer(ptr).and_then(|x| x.as_f64()) {
            Some(got) if got == *want => {}
            got => bad.push(format!("{ptr} = {got:?}, want {want}")),
        }
    }
    criterion("11 defaults-audit", bad.is_empty(), &format!("mismatches: {bad:?}"));
}
