//! Frequency-domain perceptual loss (FDPL) for single-image super-resolution.
//!
//! The crate covers the full experimental pipeline on luminance planes:
//!
//! - [`raster`]: PNG I/O and the YCbCr transform
//! - [`degrade`]: bicubic resampling, Gaussian blur and the degradation pipeline
//! - [`dct`]: orthonormal 8×8 DCT-II and blockwise tiling
//! - [`fdpl`]: quantization table, difference matrix, FDPL and MSE losses
//! - [`srcnn`]: a three-layer SRCNN with manual backpropagation and SGD
//! - [`dataset`]: patch extraction, the patch file and shuffled batching
//! - [`metrics`]: PSNR, SSIM and whole-set evaluation

pub mod dataset;
pub mod dct;
pub mod degrade;
pub mod error;
pub mod fdpl;
pub mod metrics;
pub mod raster;
pub mod seed;
pub mod srcnn;

pub use dataset::{PatchCorpus, PatchPair};
pub use dct::{Block8, CoeffBlock, CoeffGrid};
pub use degrade::DegradeConfig;
pub use error::{Error, Result};
pub use fdpl::{DiffMode, FdplLoss, Loss, LossKind, MseLoss, WeightMatrix};
pub use metrics::{EvalReport, EvalSet};
pub use raster::{ImagePlane, RgbImage};
pub use srcnn::{Reduction, SrcnnModel, TrainConfig};
