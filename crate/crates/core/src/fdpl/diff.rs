use crate::dct::{self, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::fdpl::WeightMatrix;
use crate::raster::ImagePlane;

/// Default guard added to `|C_gt|` in the relative difference denominator.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Lower bound applied to every entry of the normalized matrix.
pub const DIFF_FLOOR: f64 = 1e-6;

/// How per-tile relative differences are combined into one matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiffMode {
    /// `Σ|C_gt − C_deg| / Σ(|C_gt| + ε)` over all tiles, per frequency.
    /// Tiles with large coefficients carry proportionally more weight, so
    /// nearly-empty tiles cannot dominate a frequency.
    #[default]
    Pooled,
    /// Mean over tiles of `|C_gt − C_deg| / (|C_gt| + ε)`.
    PerTile,
}

impl std::fmt::Display for DiffMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiffMode::Pooled => "pooled",
            DiffMode::PerTile => "per-tile",
        })
    }
}

impl std::str::FromStr for DiffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" => Ok(DiffMode::Pooled),
            "per-tile" | "per_tile" | "pertile" => Ok(DiffMode::PerTile),
            other => Err(Error::InvalidInput(format!(
                "unknown difference mode '{other}' (expected pooled or per-tile)"
            ))),
        }
    }
}

/// Result of accumulating per-frequency relative differences over a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMatrixStats {
    /// Normalized to mean 1 and floored at [`DIFF_FLOOR`].
    pub d: WeightMatrix,
    /// Mean relative difference before normalization and flooring.
    pub raw: [f64; BLOCK_LEN],
    pub num_blocks: u64,
    pub epsilon: f64,
    pub mode: DiffMode,
}

impl DiffMatrixStats {
    pub fn header_comments(&self) -> Vec<String> {
        vec![
            "mean relative DCT difference matrix (rows: vertical frequency)".to_string(),
            format!("num_blocks = {}", self.num_blocks),
            format!("epsilon = {}", self.epsilon),
            format!("mode = {}", self.mode),
        ]
    }
}

/// Sequential fold over aligned (ground truth, degraded) tile pairs.
#[derive(Clone, Debug)]
pub struct DiffMatrixAccumulator {
    /// Per-tile mode: running sum of ratios. Pooled mode: numerator sums.
    sums: [f64; BLOCK_LEN],
    /// Pooled mode only: denominator sums.
    denoms: [f64; BLOCK_LEN],
    num_blocks: u64,
    epsilon: f64,
    mode: DiffMode,
}

impl DiffMatrixAccumulator {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_mode(epsilon, DiffMode::default())
    }

    pub fn with_mode(epsilon: f64, mode: DiffMode) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(DiffMatrixAccumulator {
            sums: [0.0; BLOCK_LEN],
            denoms: [0.0; BLOCK_LEN],
            num_blocks: 0,
            epsilon,
            mode,
        })
    }

    pub fn add_pair(&mut self, ground_truth: &ImagePlane, degraded: &ImagePlane) -> Result<()> {
        ground_truth.ensure_same_dims(degraded, "difference matrix pair")?;
        let gt = dct::blockwise_dct(ground_truth)?;
        let deg = dct::blockwise_dct(degraded)?;
        for (g, d) in gt.blocks.iter().zip(&deg.blocks) {
            for i in 0..BLOCK_LEN {
                let num = (g.0[i] - d.0[i]).abs();
                let den = g.0[i].abs() + self.epsilon;
                match self.mode {
                    DiffMode::PerTile => self.sums[i] += num / den,
                    DiffMode::Pooled => {
                        self.sums[i] += num;
                        self.denoms[i] += den;
                    }
                }
            }
            self.num_blocks += 1;
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> u64 {
        self.num_blocks
    }

    pub fn finish(self) -> Result<DiffMatrixStats> {
        if self.num_blocks == 0 {
            return Err(Error::Empty("no blocks accumulated for the difference matrix".into()));
        }
        let n = self.num_blocks as f64;
        let raw: [f64; BLOCK_LEN] = match self.mode {
            DiffMode::PerTile => self.sums.map(|s| s / n),
            DiffMode::Pooled => std::array::from_fn(|i| self.sums[i] / self.denoms[i]),
        };
        let mean = raw.iter().sum::<f64>() / BLOCK_LEN as f64;
        let scale = if mean > 0.0 { 1.0 / mean } else { 1.0 };
        let d = WeightMatrix::new(raw.map(|v| (v * scale).max(DIFF_FLOOR)))?;
        Ok(DiffMatrixStats {
            d,
            raw,
            num_blocks: self.num_blocks,
            epsilon: self.epsilon,
            mode: self.mode,
        })
    }
}

/// Relative per-frequency difference between `|C_gt − C_deg|` and
/// `|C_gt| + ε` over every aligned 8×8 tile of every pair, in input order.
pub fn compute_diff_matrix<'a, I>(pairs: I, epsilon: f64) -> Result<DiffMatrixStats>
where
    I: IntoIterator<Item = (&'a ImagePlane, &'a ImagePlane)>,
{
    compute_diff_matrix_with(pairs, epsilon, DiffMode::default())
}

pub fn compute_diff_matrix_with<'a, I>(pairs: I, epsilon: f64, mode: DiffMode) -> Result<DiffMatrixStats>
where
    I: IntoIterator<Item = (&'a ImagePlane, &'a ImagePlane)>,
{
    let mut acc = DiffMatrixAccumulator::with_mode(epsilon, mode)?;
    for (gt, deg) in pairs {
        acc.add_pair(gt, deg)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::{dct2_8x8, Block8};

    #[test]
    fn identical_pairs_give_zero_raw_matrix() {
        let p = ImagePlane::from_fn(16, 16, |r, c| ((r * 3 + c * 5) % 11) as f64 / 11.0);
        let stats = compute_diff_matrix([(&p, &p)], DEFAULT_EPSILON).unwrap();
        assert_eq!(stats.raw, [0.0; 64]);
        assert_eq!(stats.num_blocks, 4);
        assert!(stats.d.values().iter().all(|&v| v == DIFF_FLOOR));
    }

    #[test]
    fn single_block_matches_scalar_computation() {
        let gt = ImagePlane::from_fn(8, 8, |r, c| (r as f64 * 0.1 + c as f64 * 0.03).sin().abs());
        let deg = ImagePlane::from_fn(8, 8, |r, c| gt.get(r, c) * 0.8 + 0.05 * ((r + c) % 2) as f64);
        let eps = 0.01;
        for mode in [DiffMode::Pooled, DiffMode::PerTile] {
            let stats = compute_diff_matrix_with([(&gt, &deg)], eps, mode).unwrap();
            check_single_block(&stats, &gt, &deg, eps);
        }
    }

    fn check_single_block(stats: &DiffMatrixStats, gt: &ImagePlane, deg: &ImagePlane, eps: f64) {

        let to_block = |p: &ImagePlane| Block8(std::array::from_fn(|i| p.get(i / 8, i % 8)));
        let (cg, cd) = (dct2_8x8(&to_block(gt)), dct2_8x8(&to_block(deg)));
        let raw: Vec<f64> = (0..64).map(|i| (cg.0[i] - cd.0[i]).abs() / (cg.0[i].abs() + eps)).collect();
        let mean = raw.iter().sum::<f64>() / 64.0;
        for i in 0..64 {
            assert!((stats.raw[i] - raw[i]).abs() < 1e-12);
            assert!((stats.d.values()[i] - (raw[i] / mean).max(DIFF_FLOOR)).abs() < 1e-12);
        }
        let d_mean = stats.d.values().iter().sum::<f64>() / 64.0;
        assert!((d_mean - 1.0).abs() < 1e-4);
    }

    #[test]
    fn modes_weight_tiles_differently() {
        // Left tile: tiny coefficients with a small absolute error.
        // Right tile: large coefficients with an equally small relative error.
        let gt = ImagePlane::from_fn(16, 8, |r, c| if c < 8 { 0.001 * ((r + c) % 2) as f64 } else { 0.9 * ((r + c) % 2) as f64 });
        let deg = ImagePlane::from_fn(16, 8, |r, c| if c < 8 { 0.0 } else { gt.get(r, c) * 0.99 });
        let eps = 1e-3;
        let pooled = compute_diff_matrix_with([(&gt, &deg)], eps, DiffMode::Pooled).unwrap();
        let tiled = compute_diff_matrix_with([(&gt, &deg)], eps, DiffMode::PerTile).unwrap();

        let grid_g = crate::dct::blockwise_dct(&gt).unwrap();
        let grid_d = crate::dct::blockwise_dct(&deg).unwrap();
        for i in 0..64 {
            let (mut num, mut den, mut ratio) = (0.0, 0.0, 0.0);
            for b in 0..2 {
                let (g, d) = (grid_g.blocks[b].0[i], grid_d.blocks[b].0[i]);
                num += (g - d).abs();
                den += g.abs() + eps;
                ratio += (g - d).abs() / (g.abs() + eps);
            }
            assert!((pooled.raw[i] - num / den).abs() < 1e-12);
            assert!((tiled.raw[i] - ratio / 2.0).abs() < 1e-12);
        }
        assert_ne!(pooled.raw, tiled.raw);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("pooled".parse::<DiffMode>().unwrap(), DiffMode::Pooled);
        assert_eq!("per-tile".parse::<DiffMode>().unwrap(), DiffMode::PerTile);
        assert_eq!(DiffMode::PerTile.to_string(), "per-tile");
        assert!("median".parse::<DiffMode>().is_err());
    }

    #[test]
    fn errors() {
        let empty: [(&ImagePlane, &ImagePlane); 0] = [];
        assert!(matches!(compute_diff_matrix(empty, 1e-3), Err(Error::Empty(_))));
        let a = ImagePlane::new(8, 8);
        let b = ImagePlane::new(16, 8);
        assert!(matches!(compute_diff_matrix([(&a, &b)], 1e-3), Err(Error::DimensionMismatch(_))));
        assert!(compute_diff_matrix([(&a, &a)], 0.0).is_err());
        let odd = ImagePlane::new(10, 8);
        assert!(compute_diff_matrix([(&odd, &odd)], 1e-3).is_err());
    }
}
