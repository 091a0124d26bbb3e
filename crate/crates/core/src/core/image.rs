use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major RGB image, values in linear `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` values, pixel-interleaved.
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} needs {} values, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    /// Constant-color image.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = ImageBuffer::new(width, height);
        for p in 0..width * height {
            img.data[3 * p..3 * p + 3].copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// One channel as a contiguous plane, for window statistics.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        debug_assert!(c < 3);
        (0..self.width * self.height)
            .map(|p| self.data[3 * p + c])
            .collect()
    }

    pub fn mean_l1(&self, other: &ImageBuffer) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "L1 over {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let n = self.data.len() as f64;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / n)
    }
}

/// Single-channel depth image. Zero marks invalid (no data) pixels.
///
/// `is_inverse` flags monocular predictions made in inverse-depth space;
/// the window correlation loss negates such maps before comparing so that
/// the expected correlation sign is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub is_inverse: bool,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0.0; width * height],
            is_inverse: false,
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>, is_inverse: bool) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "depth map {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(DepthMap {
            width,
            height,
            data,
            is_inverse,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}
