//! Flat Adam over the cloud's 14 parameters per Gaussian, with moment
//! remapping so optimizer state follows clone/split/prune mutations.


use crate::core::Gaussian;
use crate::raster::GaussianGrad;

/// Parameters per Gaussian: mu(3) raw_opacity(1) raw_scale(3)
/// rotation_q(4) color(3).
pub(crate) const PARAMS_PER_GAUSSIAN: usize = 14;

/// Learning-rate group of each flat slot: 0 position, 1 opacity, 2 scale,
/// 3 rotation, 4 color.
pub(crate) const LR_GROUP: [usize; PARAMS_PER_GAUSSIAN] =
    [0, 0, 0, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4];

#[derive(Debug, Clone)]
pub(crate) struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Global step count; kept across densification like reference
    /// implementations keep their optimizer step.
    pub t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            m: vec![0.0; n * PARAMS_PER_GAUSSIAN],
            v: vec![0.0; n * PARAMS_PER_GAUSSIAN],
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn gaussians(&self) -> usize {
        self.m.len() / PARAMS_PER_GAUSSIAN
    }

    /// Rebuild moments after a cloud mutation: surviving Gaussians carry
    /// their rows, new ones start from zero.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let mut m = vec![0.0; origin.len() * PARAMS_PER_GAUSSIAN];
        let mut v = vec![0.0; origin.len() * PARAMS_PER_GAUSSIAN];
        for (new_i, o) in origin.iter().enumerate() {
            if let Some(old_i) = o {
                let src = old_i * PARAMS_PER_GAUSSIAN;
                let dst = new_i * PARAMS_PER_GAUSSIAN;
                m[dst..dst + PARAMS_PER_GAUSSIAN]
                    .copy_from_slice(&self.m[src..src + PARAMS_PER_GAUSSIAN]);
                v[dst..dst + PARAMS_PER_GAUSSIAN]
                    .copy_from_slice(&self.v[src..src + PARAMS_PER_GAUSSIAN]);
            }
        }
        self.m = m;
        self.v = v;
    }

    /// One update over the whole cloud. `lrs` holds the current learning
    /// rate per group in `LR_GROUP` order.
    pub fn step(&mut self, cloud: &mut [Gaussian], grads: &[GaussianGrad], lrs: &[f64; 5]) {
        assert_eq!(cloud.len(), grads.len());
        assert_eq!(cloud.len() * PARAMS_PER_GAUSSIAN, self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (g, gr)) in cloud.iter_mut().zip(grads).enumerate() {
            let base = i * PARAMS_PER_GAUSSIAN;
            for k in 0..PARAMS_PER_GAUSSIAN {
                let grad = flat_grad(gr, k);
                let m = &mut self.m[base + k];
                let v = &mut self.v[base + k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                let update = lrs[LR_GROUP[k]] * m_hat / (v_hat.sqrt() + self.epsilon);
                *flat_param_mut(g, k) -= update;
            }
        }
    }
}

#[cfg(test)]
pub(crate) fn flat_param(g: &Gaussian, k: usize) -> f64 {
    match k {
        0..=2 => g.mu[k],
        3 => g.raw_opacity,
        4..=6 => g.raw_scale[k - 4],
        7..=10 => g.rotation[k - 7],
        11..=13 => g.color[k - 11],
        _ => unreachable!(),
    }
}

fn flat_param_mut(g: &mut Gaussian, k: usize) -> &mut f64 {
    match k {
        0..=2 => &mut g.mu[k],
        3 => &mut g.raw_opacity,
        4..=6 => &mut g.raw_scale[k - 4],
        7..=10 => &mut g.rotation[k - 7],
        11..=13 => &mut g.color[k - 11],
        _ => unreachable!(),
    }
}

fn flat_grad(gr: &GaussianGrad, k: usize) -> f64 {
    match k {
        0..=2 => gr.d_mu[k],
        3 => gr.d_raw_opacity,
        4..=6 => gr.d_raw_scale[k - 4],
        7..=10 => gr.d_rotation_q[k - 7],
        11..=13 => gr.d_color[k - 11],
        _ => unreachable!(),
    }
}

#[cfg(test)]
use nalgebra::Vector3;

/// Zero-valued gradient record, for exercising single-slot updates.
#[cfg(test)]
pub(crate) fn zero_grad() -> GaussianGrad {
    GaussianGrad {
        d_mu: Vector3::zeros(),
        d_raw_opacity: 0.0,
        d_raw_scale: Vector3::zeros(),
        d_rotation_q: [0.0; 4],
        d_color: Vector3::zeros(),
        d_mean2d: nalgebra::Vector2::zeros(),
    }
}
