use crate::core::ImageBuffer;
use crate::losses::ssim::{ssim, ssim_backward};
use crate::losses::LossWeights;
use crate::Result;

/// Color supervision: `lambda1 * mean|pred - gt| + lambda2 * (1 - SSIM)/2`.
pub fn photometric_loss(pred: &ImageBuffer, gt: &ImageBuffer, weights: &LossWeights) -> Result<f64> {
    let l1 = pred.mean_l1(gt)?;
    let dssim = (1.0 - ssim(pred, gt)?) / 2.0;
    Ok(weights.lambda1 * l1 + weights.lambda2 * dssim)
}

/// Gradient of `upstream * photometric_loss` w.r.t. `pred`, interleaved
/// RGB layout. The L1 term uses the sign subgradient (0 at exact ties).
pub fn photometric_backward(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    weights: &LossWeights,
    upstream: f64,
) -> Result<Vec<f64>> {
    let mut grad = ssim_backward(pred, gt, -0.5 * weights.lambda2 * upstream)?;
    let n = pred.data.len() as f64;
    let l1_coeff = upstream * weights.lambda1 / n;
    for (g, (p, t)) in grad.iter_mut().zip(pred.data.iter().zip(&gt.data)) {
        *g += l1_coeff * (p - t).signum();
    }
    Ok(grad)
}
