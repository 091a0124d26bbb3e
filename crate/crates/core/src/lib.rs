//! Sparse-input Gaussian splatting on the CPU.
//!
//! The crate contains a differentiable splatting renderer together with the
//! three strategies that make it usable from a handful of input views:
//!
//! - a loop that renders pseudo views near the training cameras, feeds them
//!   back through structure-from-motion and re-initializes the point cloud
//!   ([`pgi`]),
//! - depth supervision that combines sparse absolute depth from SfM points
//!   with dense relative monocular depth via window-level Pearson
//!   correlation ([`losses`], [`sfm`]),
//! - error-guided splitting of oversized splats plus a non-maximum opacity
//!   penalty ([`densify`]).
//!
//! Everything is f64 end to end, image sizes are desk scale, and every
//! gradient path is checked against central finite differences. The `book/`
//! directory of the repository walks through the concepts chapter by
//! chapter; its code snippets compile as doctests of this crate.

pub mod core;
pub mod densify;
pub mod harness;
pub mod io;
pub mod losses;
pub mod pgi;
pub mod raster;
pub mod sfm;
pub mod train;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

// Book chapters double as doctests so the guide cannot drift from the API.
macro_rules! book_chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        #[cfg(doctest)]
        pub struct $name;
    };
}

book_chapter!(BookIntroduction, "../../../book/src/introduction.md");
book_chapter!(BookGaussians, "../../../book/src/gaussians.md");
book_chapter!(BookRendering, "../../../book/src/rendering.md");
book_chapter!(BookLosses, "../../../book/src/losses.md");
book_chapter!(BookDepth, "../../../book/src/depth-supervision.md");
book_chapter!(BookLoop, "../../../book/src/progressive-loop.md");
book_chapter!(BookDensify, "../../../book/src/densification.md");
book_chapter!(BookTraining, "../../../book/src/training.md");
book_chapter!(BookCli, "../../../book/src/cli.md");
