//! Frequency-domain perceptual loss and the pixel MSE baseline.
//!
//! FDPL compares two planes tile by tile in the 8×8 DCT domain. Each squared
//! coefficient difference is weighted by `d / q`, where `q` is the JPEG
//! luminance quantization table (perceptual importance) and `d` is the mean
//! relative difference between ground-truth and degraded images of a training
//! corpus (which frequencies the degradation destroys). The per-image loss is
//! the mean over tiles of the weighted sums.

mod diff;
mod weights;

pub use diff::{
    compute_diff_matrix, compute_diff_matrix_with, DiffMatrixAccumulator, DiffMode, DiffMatrixStats, DEFAULT_EPSILON, DIFF_FLOOR,
};
pub use weights::{antidiagonal_transpose, jpeg_luminance_qtable, WeightMatrix};

use std::fmt;
use std::str::FromStr;

use crate::dct::{self, Block8, CoeffBlock, BLOCK, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::raster::ImagePlane;

/// A differentiable image loss. `target` is the ground truth.
pub trait Loss: Send + Sync {
    fn loss(&self, target: &ImagePlane, output: &ImagePlane) -> Result<f64>;

    /// Gradient with respect to `output`.
    fn gradient(&self, target: &ImagePlane, output: &ImagePlane) -> Result<ImagePlane>;

    fn loss_and_gradient(
        &self,
        target: &ImagePlane,
        output: &ImagePlane,
    ) -> Result<(f64, ImagePlane)> {
        Ok((self.loss(target, output)?, self.gradient(target, output)?))
    }

    /// Number of terms the loss averages over for a `width`×`height` plane.
    /// Multiplying by it turns the mean into the corresponding sum.
    fn mean_terms(&self, width: usize, height: usize) -> f64;
}

/// Mean over pixels of `(gt − out)²`.
pub fn mse_loss(gt: &ImagePlane, out: &ImagePlane) -> Result<f64> {
    gt.ensure_same_dims(out, "mse_loss")?;
    let sum: f64 = gt
        .as_slice()
        .iter()
        .zip(out.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / gt.len() as f64)
}

/// `−2 (gt − out) / N`.
pub fn mse_gradient(gt: &ImagePlane, out: &ImagePlane) -> Result<ImagePlane> {
    gt.ensure_same_dims(out, "mse_gradient")?;
    let n = gt.len() as f64;
    let data = gt
        .as_slice()
        .iter()
        .zip(out.as_slice())
        .map(|(a, b)| -2.0 * (a - b) / n)
        .collect();
    ImagePlane::from_vec(gt.width(), gt.height(), data)
}

/// Combined per-frequency weight `(1 ⊘ q) ⊙ d`.
pub fn fdpl_weights(q: &WeightMatrix, d: &WeightMatrix) -> WeightMatrix {
    q.reciprocal().hadamard(d)
}

/// Coefficient differences `C_gt − C_out` of tile (`bi`, `bj`).
fn tile_coeff_diff(gt: &ImagePlane, out: &ImagePlane, bi: usize, bj: usize) -> CoeffBlock {
    let a = dct::read_tile(gt, bi, bj);
    let b = dct::read_tile(out, bi, bj);
    dct::dct2_8x8(&Block8(std::array::from_fn(|i| a.0[i] - b.0[i])))
}

fn fdpl_pass(
    gt: &ImagePlane,
    out: &ImagePlane,
    weights: &WeightMatrix,
    want_gradient: bool,
) -> Result<(f64, Option<ImagePlane>)> {
    gt.ensure_same_dims(out, "fdpl")?;
    dct::ensure_tileable(gt)?;
    let (bw, bh) = (gt.width() / BLOCK, gt.height() / BLOCK);
    let num_blocks = (bw * bh) as f64;
    let w = weights.values();
    let mut grad = want_gradient.then(|| ImagePlane::new(gt.width(), gt.height()));
    let mut total = 0.0;
    for bi in 0..bh {
        for bj in 0..bw {
            let delta = tile_coeff_diff(gt, out, bi, bj);
            let mut block_sum = 0.0;
            for i in 0..BLOCK_LEN {
                block_sum += delta.0[i] * delta.0[i] * w[i];
            }
            total += block_sum;
            if let Some(g) = grad.as_mut() {
                let coeff_grad =
                    CoeffBlock(std::array::from_fn(|i| -2.0 / num_blocks * delta.0[i] * w[i]));
                // The orthonormal DCT's adjoint is its inverse.
                dct::write_tile(g, bi, bj, &dct::idct2_8x8(&coeff_grad));
            }
        }
    }
    Ok((total / num_blocks, grad))
}

/// `(1/B) Σ_blocks Σ_{j,k} (C_gt − C_out)² · d / q`.
pub fn fdpl_loss(
    gt: &ImagePlane,
    out: &ImagePlane,
    q: &WeightMatrix,
    d: &WeightMatrix,
) -> Result<f64> {
    Ok(fdpl_pass(gt, out, &fdpl_weights(q, d), false)?.0)
}

/// Gradient of [`fdpl_loss`] with respect to `out`.
pub fn fdpl_gradient(
    gt: &ImagePlane,
    out: &ImagePlane,
    q: &WeightMatrix,
    d: &WeightMatrix,
) -> Result<ImagePlane> {
    Ok(fdpl_pass(gt, out, &fdpl_weights(q, d), true)?
        .1
        .expect("gradient requested"))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MseLoss;

impl Loss for MseLoss {
    fn loss(&self, target: &ImagePlane, output: &ImagePlane) -> Result<f64> {
        mse_loss(target, output)
    }

    fn gradient(&self, target: &ImagePlane, output: &ImagePlane) -> Result<ImagePlane> {
        mse_gradient(target, output)
    }

    fn mean_terms(&self, width: usize, height: usize) -> f64 {
        (width * height) as f64
    }
}

/// FDPL with precomputed combined weights.
#[derive(Clone, Debug, PartialEq)]
pub struct FdplLoss {
    weights: WeightMatrix,
}

impl FdplLoss {
    pub fn new(q: &WeightMatrix, d: &WeightMatrix) -> Self {
        FdplLoss {
            weights: fdpl_weights(q, d),
        }
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }
}

impl Loss for FdplLoss {
    fn loss(&self, target: &ImagePlane, output: &ImagePlane) -> Result<f64> {
        Ok(fdpl_pass(target, output, &self.weights, false)?.0)
    }

    fn gradient(&self, target: &ImagePlane, output: &ImagePlane) -> Result<ImagePlane> {
        Ok(self.loss_and_gradient(target, output)?.1)
    }

    fn mean_terms(&self, width: usize, height: usize) -> f64 {
        ((width / BLOCK) * (height / BLOCK)) as f64
    }

    fn loss_and_gradient(
        &self,
        target: &ImagePlane,
        output: &ImagePlane,
    ) -> Result<(f64, ImagePlane)> {
        let (loss, grad) = fdpl_pass(target, output, &self.weights, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }
}

/// Which training objective to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Fdpl,
    /// FDPL with the quantization table reflected across its anti-diagonal.
    FdplAt,
}

impl LossKind {
    pub fn needs_diff_matrix(self) -> bool {
        !matches!(self, LossKind::Mse)
    }

    /// Builds the loss. `d` is required for the FDPL variants.
    pub fn build(self, d: Option<&WeightMatrix>) -> Result<Box<dyn Loss>> {
        let q = jpeg_luminance_qtable();
        match (self, d) {
            (LossKind::Mse, _) => Ok(Box::new(MseLoss)),
            (LossKind::Fdpl, Some(d)) => Ok(Box::new(FdplLoss::new(&q, d))),
            (LossKind::FdplAt, Some(d)) => {
                Ok(Box::new(FdplLoss::new(&antidiagonal_transpose(&q), d)))
            }
            (kind, None) => Err(Error::InvalidInput(format!(
                "loss {kind} requires a difference matrix"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Fdpl => "fdpl",
            LossKind::FdplAt => "fdpl-at",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "fdpl" => Ok(LossKind::Fdpl),
            "fdpl-at" | "fdpl_at" => Ok(LossKind::FdplAt),
            other => Err(Error::InvalidInput(format!(
                "unknown loss {other:?}; expected mse, fdpl or fdpl-at"
            ))),
        }
    }
}
