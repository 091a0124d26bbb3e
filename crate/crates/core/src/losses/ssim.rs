use crate::core::ImageBuffer;
use crate::{Error, Result};

const WINDOW: usize = 11;
const HALF: i64 = 5;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - HALF as f64;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable blur with per-pixel border renormalization. Renormalizing
/// each 1D pass equals renormalizing the full 2D window because the valid
/// region at a border is a rectangle and the kernel is an outer product.
fn blur_renorm(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0;
            let mut den = 0.0;
            for t in -HALF..=HALF {
                let xx = x as i64 + t;
                if xx < 0 || xx >= w as i64 {
                    continue;
                }
                let kv = k[(t + HALF) as usize];
                num += kv * plane[y * w + xx as usize];
                den += kv;
            }
            tmp[y * w + x] = num / den;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0;
            let mut den = 0.0;
            for t in -HALF..=HALF {
                let yy = y as i64 + t;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                let kv = k[(t + HALF) as usize];
                num += kv * tmp[yy as usize * w + x];
                den += kv;
            }
            out[y * w + x] = num / den;
        }
    }
    out
}

/// Zero-padded separable blur without renormalization; with a symmetric
/// kernel this is the adjoint of the unnormalized window sum.
fn blur_plain(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0;
            for t in -HALF..=HALF {
                let xx = x as i64 + t;
                if xx < 0 || xx >= w as i64 {
                    continue;
                }
                num += k[(t + HALF) as usize] * plane[y * w + xx as usize];
            }
            tmp[y * w + x] = num;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0;
            for t in -HALF..=HALF {
                let yy = y as i64 + t;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                num += k[(t + HALF) as usize] * tmp[yy as usize * w + x];
            }
            out[y * w + x] = num;
        }
    }
    out
}

/// Per-pixel total window weight, the product of the two 1D partial sums.
fn weight_plane(w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let axis = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|i| {
                let mut s = 0.0;
                for t in -HALF..=HALF {
                    let ii = i as i64 + t;
                    if ii >= 0 && ii < len as i64 {
                        s += k[(t + HALF) as usize];
                    }
                }
                s
            })
            .collect()
    };
    let wx = axis(w);
    let wy = axis(h);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = wx[x] * wy[y];
        }
    }
    out
}

fn check_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "SSIM over {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, dynamic range 1, averaged over pixels and
/// channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    let k = kernel();
    let mut total = 0.0;
    for c in 0..3 {
        let x = a.channel_plane(c);
        let y = b.channel_plane(c);
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let xx: Vec<f64> = x.iter().map(|p| p * p).collect();
        let yy: Vec<f64> = y.iter().map(|p| p * p).collect();
        let mu_x = blur_renorm(&x, w, h, &k);
        let mu_y = blur_renorm(&y, w, h, &k);
        let s_xx = blur_renorm(&xx, w, h, &k);
        let s_yy = blur_renorm(&yy, w, h, &k);
        let s_xy = blur_renorm(&xy, w, h, &k);
        for p in 0..w * h {
            let var_x = s_xx[p] - mu_x[p] * mu_x[p];
            let var_y = s_yy[p] - mu_y[p] * mu_y[p];
            let cov = s_xy[p] - mu_x[p] * mu_y[p];
            let a1 = 2.0 * mu_x[p] * mu_y[p] + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = mu_x[p] * mu_x[p] + mu_y[p] * mu_y[p] + C1;
            let b2 = var_x + var_y + C2;
            total += (a1 * a2) / (b1 * b2);
        }
    }
    Ok(total / (3.0 * (w * h) as f64))
}

/// Gradient of `upstream * ssim(a, b)` with respect to `a`, in the image's
/// interleaved layout.
pub fn ssim_backward(a: &ImageBuffer, b: &ImageBuffer, upstream: f64) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    let k = kernel();
    let weight = weight_plane(w, h, &k);
    let scale = upstream / (3.0 * (w * h) as f64);
    let mut grad = vec![0.0; 3 * w * h];

    for c in 0..3 {
        let x = a.channel_plane(c);
        let y = b.channel_plane(c);
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let xx: Vec<f64> = x.iter().map(|p| p * p).collect();
        let yy: Vec<f64> = y.iter().map(|p| p * p).collect();
        let mu_x = blur_renorm(&x, w, h, &k);
        let mu_y = blur_renorm(&y, w, h, &k);
        let s_xx = blur_renorm(&xx, w, h, &k);
        let s_yy = blur_renorm(&yy, w, h, &k);
        let s_xy = blur_renorm(&xy, w, h, &k);

        // Per-pixel partials of S w.r.t. the blurred statistics of `a`,
        // pre-divided by the window weight for the adjoint pass.
        let mut g_mu = vec![0.0; w * h];
        let mut g_sxx = vec![0.0; w * h];
        let mut g_sxy = vec![0.0; w * h];
        for p in 0..w * h {
            let var_x = s_xx[p] - mu_x[p] * mu_x[p];
            let var_y = s_yy[p] - mu_y[p] * mu_y[p];
            let cov = s_xy[p] - mu_x[p] * mu_y[p];
            let a1 = 2.0 * mu_x[p] * mu_y[p] + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = mu_x[p] * mu_x[p] + mu_y[p] * mu_y[p] + C1;
            let b2 = var_x + var_y + C2;
            let s = (a1 * a2) / (b1 * b2);
            let d_mu = 2.0 * mu_y[p] * (a2 - a1) / (b1 * b2)
                - 2.0 * mu_x[p] * s * (1.0 / b1 - 1.0 / b2);
            let d_sxx = -s / b2;
            let d_sxy = 2.0 * a1 / (b1 * b2);
            g_mu[p] = scale * d_mu / weight[p];
            g_sxx[p] = scale * d_sxx / weight[p];
            g_sxy[p] = scale * d_sxy / weight[p];
        }
        let back_mu = blur_plain(&g_mu, w, h, &k);
        let back_sxx = blur_plain(&g_sxx, w, h, &k);
        let back_sxy = blur_plain(&g_sxy, w, h, &k);
        for p in 0..w * h {
            grad[3 * p + c] = back_mu[p] + back_sxx[p] * 2.0 * x[p] + back_sxy[p] * y[p];
        }
    }
    Ok(grad)
}
