//! Image file formats: binary PPM for color, PFM for depth.

mod pfm;
mod ppm;

pub use pfm::{read_pfm, write_pfm};
pub use ppm::{read_ppm, write_ppm};
