use crate::core::DepthMap;
use crate::losses::PearsonReduce;
use crate::{Error, Result};

/// A window's patch may be nearly flat; below this population variance it
/// is skipped so the correlation stays well conditioned.
const VAR_FLOOR: f64 = 1e-12;
/// Minimum fraction of valid rendered pixels for a window to count.
const VALID_FRACTION: f64 = 0.25;

/// Top-left corners of the sliding windows along one axis: stride walk
/// plus a flush-to-border window when the stride does not land exactly.
/// An axis shorter than the window yields one full-axis window.
fn axis_positions(len: usize, window: usize, stride: usize) -> (usize, Vec<usize>) {
    if len <= window {
        return (len, vec![0]);
    }
    let mut pos = Vec::new();
    let mut p = 0;
    while p + window <= len {
        pos.push(p);
        p += stride;
    }
    let flush = len - window;
    if *pos.last().unwrap() != flush {
        pos.push(flush);
    }
    (window, pos)
}

/// All window rectangles as `(x0, y0, w, h)` in scan order.
pub fn pearson_windows(
    width: usize,
    height: usize,
    window_len: usize,
    stride: usize,
) -> Vec<(usize, usize, usize, usize)> {
    let (ww, xs) = axis_positions(width, window_len, stride);
    let (wh, ys) = axis_positions(height, window_len, stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push((x, y, ww, wh));
        }
    }
    out
}

struct WindowStats {
    n: f64,
    mean_d: f64,
    mean_m: f64,
    var_d: f64,
    var_m: f64,
    cov: f64,
    valid: usize,
}

fn window_stats(
    rendered: &DepthMap,
    mono_vals: &[f64],
    rect: (usize, usize, usize, usize),
) -> WindowStats {
    let (x0, y0, ww, wh) = rect;
    let n = (ww * wh) as f64;
    let mut sum_d = 0.0;
    let mut sum_m = 0.0;
    let mut valid = 0usize;
    for y in y0..y0 + wh {
        for x in x0..x0 + ww {
            let d = rendered.get(x, y);
            sum_d += d;
            sum_m += mono_vals[y * rendered.width + x];
            if d > 0.0 {
                valid += 1;
            }
        }
    }
    let mean_d = sum_d / n;
    let mean_m = sum_m / n;
    let (mut var_d, mut var_m, mut cov) = (0.0, 0.0, 0.0);
    for y in y0..y0 + wh {
        for x in x0..x0 + ww {
            let cd = rendered.get(x, y) - mean_d;
            let cm = mono_vals[y * rendered.width + x] - mean_m;
            var_d += cd * cd;
            var_m += cm * cm;
            cov += cd * cm;
        }
    }
    WindowStats {
        n,
        mean_d,
        mean_m,
        var_d: var_d / n,
        var_m: var_m / n,
        cov: cov / n,
        valid,
    }
}

fn window_contributes(stats: &WindowStats) -> bool {
    stats.var_d >= VAR_FLOOR
        && stats.var_m >= VAR_FLOOR
        && (stats.valid as f64) >= VALID_FRACTION * stats.n
}

/// Monocular values oriented so that larger always means farther;
/// inverse-depth maps are negated.
fn oriented_mono(mono: &DepthMap) -> Vec<f64> {
    if mono.is_inverse {
        mono.data.iter().map(|v| -v).collect()
    } else {
        mono.data.clone()
    }
}

/// Mean (or sum) of `1 - r` over sliding windows, where `r` is the Pearson
/// correlation between the rendered depth patch and the monocular patch.
/// Flat patches and windows with too few valid rendered pixels are
/// skipped. The correlation is scale and shift free in the monocular map,
/// so an affine change of the prediction leaves the loss unchanged.
pub fn windowed_pearson_loss(
    rendered: &DepthMap,
    mono: &DepthMap,
    window_len: usize,
    stride: usize,
    reduce: PearsonReduce,
) -> Result<f64> {
    if rendered.width != mono.width || rendered.height != mono.height {
        return Err(Error::DimensionMismatch(format!(
            "pearson over {}x{} vs {}x{}",
            rendered.width, rendered.height, mono.width, mono.height
        )));
    }
    let mono_vals = oriented_mono(mono);
    let mut sum = 0.0;
    let mut count = 0usize;
    for rect in pearson_windows(rendered.width, rendered.height, window_len, stride) {
        let stats = window_stats(rendered, &mono_vals, rect);
        if !window_contributes(&stats) {
            continue;
        }
        let r = stats.cov / (stats.var_d.sqrt() * stats.var_m.sqrt());
        sum += 1.0 - r;
        count += 1;
    }
    Ok(match reduce {
        PearsonReduce::Mean => {
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        }
        PearsonReduce::Sum => sum,
    })
}

/// Gradient of `upstream * windowed_pearson_loss` w.r.t. the rendered
/// depth values, in depth-buffer layout. The window selection is held
/// fixed (subgradient at selection boundaries).
pub fn windowed_pearson_backward(
    rendered: &DepthMap,
    mono: &DepthMap,
    window_len: usize,
    stride: usize,
    reduce: PearsonReduce,
    upstream: f64,
) -> Result<Vec<f64>> {
    if rendered.width != mono.width || rendered.height != mono.height {
        return Err(Error::DimensionMismatch("pearson backward".into()));
    }
    let mono_vals = oriented_mono(mono);
    let windows = pearson_windows(rendered.width, rendered.height, window_len, stride);
    let contributing: Vec<(usize, usize, usize, usize)> = windows
        .into_iter()
        .filter(|rect| window_contributes(&window_stats(rendered, &mono_vals, *rect)))
        .collect();
    let mut grad = vec![0.0; rendered.data.len()];
    if contributing.is_empty() {
        return Ok(grad);
    }
    let scale = match reduce {
        PearsonReduce::Mean => upstream / contributing.len() as f64,
        PearsonReduce::Sum => upstream,
    };
    for rect in contributing {
        let stats = window_stats(rendered, &mono_vals, rect);
        let sd = stats.var_d.sqrt();
        let sm = stats.var_m.sqrt();
        let r = stats.cov / (sd * sm);
        let (x0, y0, ww, wh) = rect;
        for y in y0..y0 + wh {
            for x in x0..x0 + ww {
                let cd = rendered.get(x, y) - stats.mean_d;
                let cm = mono_vals[y * rendered.width + x] - stats.mean_m;
                // d(1 - r)/dd_p with population statistics.
                let dr = (cm / (sd * sm) - r * cd / (sd * sd)) / stats.n;
                grad[y * rendered.width + x] -= scale * dr;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn map_from_fn(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f64) -> DepthMap {
        let mut d = DepthMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                d.set(x, y, f(x, y));
            }
        }
        d
    }

    fn noise_map(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> DepthMap {
        let mut state = seed;
        map_from_fn(w, h, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            lo + (hi - lo) * ((state >> 33) as f64) / (u32::MAX as f64 * 2.0)
        })
    }

    /// Brute-force oracle: enumerate window corners by stepping the stride
    /// and anchoring an extra flush window, then compute r with the plain
    /// two-pass formula per window.
    fn pearson_oracle(rendered: &DepthMap, mono: &DepthMap, wl: usize, stride: usize) -> f64 {
        let corners = |len: usize| -> Vec<usize> {
            if len <= wl {
                return vec![0];
            }
            let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|p| p + wl <= len).collect();
            if v.last() != Some(&(len - wl)) {
                v.push(len - wl);
            }
            v
        };
        let mvals: Vec<f64> = if mono.is_inverse {
            mono.data.iter().map(|v| -v).collect()
        } else {
            mono.data.clone()
        };
        let (mut sum, mut count) = (0.0, 0usize);
        for &y0 in &corners(rendered.height) {
            for &x0 in &corners(rendered.width) {
                let (ww, wh) = (wl.min(rendered.width), wl.min(rendered.height));
                let mut d = Vec::new();
                let mut m = Vec::new();
                let mut valid = 0;
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        let dv = rendered.get(x, y);
                        if dv > 0.0 {
                            valid += 1;
                        }
                        d.push(dv);
                        m.push(mvals[y * rendered.width + x]);
                    }
                }
                let n = d.len() as f64;
                let md = d.iter().sum::<f64>() / n;
                let mm = m.iter().sum::<f64>() / n;
                let vd = d.iter().map(|v| (v - md) * (v - md)).sum::<f64>() / n;
                let vm = m.iter().map(|v| (v - mm) * (v - mm)).sum::<f64>() / n;
                let cov = d
                    .iter()
                    .zip(&m)
                    .map(|(a, b)| (a - md) * (b - mm))
                    .sum::<f64>()
                    / n;
                if vd < 1e-12 || vm < 1e-12 || (valid as f64) < 0.25 * n {
                    continue;
                }
                sum += 1.0 - cov / (vd.sqrt() * vm.sqrt());
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    #[test]
    fn identical_maps_score_zero() {
        let d = noise_map(40, 40, 17, 1.0, 3.0);
        let loss = windowed_pearson_loss(&d, &d, 32, 4, PearsonReduce::Mean).unwrap();
        assert_relative_eq!(loss, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn affine_mono_is_invariant() {
        let d = noise_map(48, 48, 5, 0.5, 4.0);
        let mono = noise_map(48, 48, 9, 0.5, 4.0);
        let base = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Mean).unwrap();
        let mut scaled = mono.clone();
        for v in &mut scaled.data {
            *v = 2.0 * *v + 5.0;
        }
        let shifted = windowed_pearson_loss(&d, &scaled, 32, 4, PearsonReduce::Mean).unwrap();
        assert!((base - shifted).abs() < 1e-9, "{} vs {}", base, shifted);
    }

    #[test]
    fn window_grid_64_is_9_by_9() {
        let wins = pearson_windows(64, 64, 32, 4);
        assert_eq!(wins.len(), 81);
        assert_eq!(wins[0], (0, 0, 32, 32));
        assert_eq!(wins[80], (32, 32, 32, 32));
    }

    #[test]
    fn flush_window_added_when_stride_misses() {
        // 70 px, window 32, stride 12: walk 0,12,24,36 then flush 38.
        let (_, xs) = super::axis_positions(70, 32, 12);
        assert_eq!(xs, vec![0, 12, 24, 36, 38]);
    }

    #[test]
    fn small_image_uses_single_full_window() {
        let wins = pearson_windows(20, 20, 32, 4);
        assert_eq!(wins, vec![(0, 0, 20, 20)]);
    }

    #[test]
    fn matches_bruteforce_oracle() {
        let d = noise_map(64, 64, 31, 1.0, 5.0);
        let mono = noise_map(64, 64, 77, 0.2, 2.0);
        let got = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Mean).unwrap();
        let want = pearson_oracle(&d, &mono, 32, 4);
        assert_relative_eq!(got, want, epsilon = 1e-12);
        assert!(got > 0.0 && got < 2.0);
    }

    #[test]
    fn inverse_mono_is_negated() {
        let d = map_from_fn(8, 8, |x, _| 1.0 + x as f64);
        // Inverse-depth prediction: decreases where true depth grows.
        let mut mono = map_from_fn(8, 8, |x, _| 1.0 / (1.0 + x as f64));
        mono.is_inverse = true;
        let loss = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Mean).unwrap();
        // Negated inverse depth correlates positively with true depth;
        // the relation is monotone but curved, so r is ~0.84, not 1.
        assert!(loss < 0.25, "loss {}", loss);
        mono.is_inverse = false;
        let wrong = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Mean).unwrap();
        assert!(wrong > 1.75, "loss {}", wrong);
    }

    #[test]
    fn flat_and_hole_windows_are_skipped() {
        // Constant rendered depth: every window is flat, loss must be 0.
        let flat = map_from_fn(40, 40, |_, _| 2.0);
        let mono = noise_map(40, 40, 3, 0.0, 1.0);
        assert_eq!(
            windowed_pearson_loss(&flat, &mono, 32, 4, PearsonReduce::Mean).unwrap(),
            0.0
        );
        // Mostly-invalid rendered map: valid fraction under 25%.
        let holes = map_from_fn(40, 40, |x, y| if x < 8 && y < 8 { 1.0 + (x + y) as f64 } else { 0.0 });
        assert_eq!(
            windowed_pearson_loss(&holes, &mono, 32, 4, PearsonReduce::Mean).unwrap(),
            0.0
        );
    }

    #[test]
    fn sum_reduce_scales_with_window_count() {
        let d = noise_map(64, 64, 13, 1.0, 2.0);
        let mono = noise_map(64, 64, 14, 1.0, 2.0);
        let mean = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Mean).unwrap();
        let sum = windowed_pearson_loss(&d, &mono, 32, 4, PearsonReduce::Sum).unwrap();
        assert_relative_eq!(sum, mean * 81.0, epsilon = 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = noise_map(24, 24, 41, 1.0, 4.0);
        let mono = noise_map(24, 24, 42, 0.5, 2.0);
        let grad =
            windowed_pearson_backward(&d, &mono, 16, 8, PearsonReduce::Mean, 1.0).unwrap();
        let h = 1e-6;
        for p in (0..d.data.len()).step_by(11) {
            let mut dp = d.clone();
            dp.data[p] += h;
            let mut dm = d.clone();
            dm.data[p] -= h;
            let fd = (windowed_pearson_loss(&dp, &mono, 16, 8, PearsonReduce::Mean).unwrap()
                - windowed_pearson_loss(&dm, &mono, 16, 8, PearsonReduce::Mean).unwrap())
                / (2.0 * h);
            assert!(
                (grad[p] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                "pixel {}: analytic {} vs fd {}",
                p,
                grad[p],
                fd
            );
        }
    }
}
