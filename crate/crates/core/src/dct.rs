//! Orthonormal 8×8 DCT-II and blockwise tiling of image planes.
//!
//! Coefficient `(j, k)` holds vertical frequency `j` (rows) and horizontal
//! frequency `k` (columns); `(0, 0)` is the DC term.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::raster::ImagePlane;

/// Block edge length.
pub const BLOCK: usize = 8;

/// Number of samples in a block.
pub const BLOCK_LEN: usize = BLOCK * BLOCK;

/// 8×8 samples in the pixel basis, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block8(pub [f64; BLOCK_LEN]);

/// 8×8 coefficients in the frequency basis, row-major by `(j, k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffBlock(pub [f64; BLOCK_LEN]);

impl Block8 {
    pub fn zeros() -> Self {
        Block8([0.0; BLOCK_LEN])
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.0[m * BLOCK + n]
    }
}

impl CoeffBlock {
    pub fn zeros() -> Self {
        CoeffBlock([0.0; BLOCK_LEN])
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.0[j * BLOCK + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        self.0[j * BLOCK + k] = v;
    }
}

/// `basis[j][m] = α(j) cos(π j (m + ½) / 8)`; rows are orthonormal.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; BLOCK]; BLOCK];
        for (j, row) in b.iter_mut().enumerate() {
            let alpha = if j == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (m, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * (std::f64::consts::PI * j as f64 * (m as f64 + 0.5) / BLOCK as f64).cos();
            }
        }
        b
    })
}

/// Forward transform: `C = A · X · Aᵀ`.
pub fn dct2_8x8(block: &Block8) -> CoeffBlock {
    let a = basis();
    let x = &block.0;
    // tmp = X · Aᵀ, i.e. transform each row.
    let mut tmp = [0.0; BLOCK_LEN];
    for m in 0..BLOCK {
        for k in 0..BLOCK {
            let mut acc = 0.0;
            for n in 0..BLOCK {
                acc += x[m * BLOCK + n] * a[k][n];
            }
            tmp[m * BLOCK + k] = acc;
        }
    }
    let mut out = [0.0; BLOCK_LEN];
    for j in 0..BLOCK {
        for k in 0..BLOCK {
            let mut acc = 0.0;
            for m in 0..BLOCK {
                acc += a[j][m] * tmp[m * BLOCK + k];
            }
            out[j * BLOCK + k] = acc;
        }
    }
    CoeffBlock(out)
}

/// Inverse transform: `X = Aᵀ · C · A`.
pub fn idct2_8x8(coeffs: &CoeffBlock) -> Block8 {
    let a = basis();
    let c = &coeffs.0;
    let mut tmp = [0.0; BLOCK_LEN];
    for j in 0..BLOCK {
        for n in 0..BLOCK {
            let mut acc = 0.0;
            for k in 0..BLOCK {
                acc += c[j * BLOCK + k] * a[k][n];
            }
            tmp[j * BLOCK + n] = acc;
        }
    }
    let mut out = [0.0; BLOCK_LEN];
    for m in 0..BLOCK {
        for n in 0..BLOCK {
            let mut acc = 0.0;
            for j in 0..BLOCK {
                acc += a[j][m] * tmp[j * BLOCK + n];
            }
            out[m * BLOCK + n] = acc;
        }
    }
    Block8(out)
}

/// DCT coefficients of every non-overlapping 8×8 tile of a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffGrid {
    pub blocks_w: usize,
    pub blocks_h: usize,
    /// Row-major over tiles.
    pub blocks: Vec<CoeffBlock>,
}

impl CoeffGrid {
    pub fn block(&self, bi: usize, bj: usize) -> &CoeffBlock {
        &self.blocks[bi * self.blocks_w + bj]
    }
}

pub(crate) fn ensure_tileable(plane: &ImagePlane) -> Result<()> {
    let (w, h) = plane.dims();
    if w % BLOCK != 0 || h % BLOCK != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{w}x{h} plane is not divisible into {BLOCK}x{BLOCK} blocks"
        )));
    }
    Ok(())
}

/// Copies tile (`bi`, `bj`) out of a plane whose dims are multiples of 8.
pub(crate) fn read_tile(plane: &ImagePlane, bi: usize, bj: usize) -> Block8 {
    let mut b = [0.0; BLOCK_LEN];
    for m in 0..BLOCK {
        let row = plane.row(bi * BLOCK + m);
        b[m * BLOCK..(m + 1) * BLOCK].copy_from_slice(&row[bj * BLOCK..(bj + 1) * BLOCK]);
    }
    Block8(b)
}

pub(crate) fn write_tile(plane: &mut ImagePlane, bi: usize, bj: usize, block: &Block8) {
    let w = plane.width();
    let data = plane.as_mut_slice();
    for m in 0..BLOCK {
        let start = (bi * BLOCK + m) * w + bj * BLOCK;
        data[start..start + BLOCK].copy_from_slice(&block.0[m * BLOCK..(m + 1) * BLOCK]);
    }
}

/// Forward DCT over all tiles in row-major order.
pub fn blockwise_dct(plane: &ImagePlane) -> Result<CoeffGrid> {
    ensure_tileable(plane)?;
    let (blocks_w, blocks_h) = (plane.width() / BLOCK, plane.height() / BLOCK);
    let mut blocks = Vec::with_capacity(blocks_w * blocks_h);
    for bi in 0..blocks_h {
        for bj in 0..blocks_w {
            blocks.push(dct2_8x8(&read_tile(plane, bi, bj)));
        }
    }
    Ok(CoeffGrid {
        blocks_w,
        blocks_h,
        blocks,
    })
}

/// Inverse of [`blockwise_dct`].
pub fn blockwise_idct(grid: &CoeffGrid) -> ImagePlane {
    let mut plane = ImagePlane::new(grid.blocks_w * BLOCK, grid.blocks_h * BLOCK);
    for bi in 0..grid.blocks_h {
        for bj in 0..grid.blocks_w {
            write_tile(&mut plane, bi, bj, &idct2_8x8(grid.block(bi, bj)));
        }
    }
    plane
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn alpha(t: usize) -> f64 {
        if t == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        }
    }

    /// Direct quadruple-loop evaluation of the definition.
    fn naive_dct(x: &Block8) -> CoeffBlock {
        let mut out = CoeffBlock::zeros();
        for j in 0..8 {
            for k in 0..8 {
                let mut s = 0.0;
                for m in 0..8 {
                    for n in 0..8 {
                        s += x.get(m, n)
                            * (PI * j as f64 * (m as f64 + 0.5) / 8.0).cos()
                            * (PI * k as f64 * (n as f64 + 0.5) / 8.0).cos();
                    }
                }
                out.set(j, k, alpha(j) * alpha(k) * s);
            }
        }
        out
    }

    fn naive_idct(c: &CoeffBlock) -> Block8 {
        let mut out = Block8::zeros();
        for m in 0..8 {
            for n in 0..8 {
                let mut s = 0.0;
                for j in 0..8 {
                    for k in 0..8 {
                        s += alpha(j)
                            * alpha(k)
                            * c.get(j, k)
                            * (PI * j as f64 * (m as f64 + 0.5) / 8.0).cos()
                            * (PI * k as f64 * (n as f64 + 0.5) / 8.0).cos();
                    }
                }
                out.0[m * 8 + n] = s;
            }
        }
        out
    }

    fn random_block(rng: &mut impl Rng) -> Block8 {
        Block8(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_block_has_only_dc() {
        let c = dct2_8x8(&Block8([0.25; 64]));
        assert!((c.get(0, 0) - 8.0 * 0.25).abs() < 1e-12);
        assert!(c.0[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(dct2_8x8(&Block8::zeros()), CoeffBlock::zeros());
    }

    #[test]
    fn dc_only_inverse_is_constant() {
        let mut c = CoeffBlock::zeros();
        c.set(0, 0, 8.0);
        let x = idct2_8x8(&c);
        assert!(x.0.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = random_block(&mut rng);
            assert!(max_diff(&dct2_8x8(&x).0, &naive_dct(&x).0) < 1e-9);
            let c = CoeffBlock(random_block(&mut rng).0);
            assert!(max_diff(&idct2_8x8(&c).0, &naive_idct(&c).0) < 1e-9);
        }
    }

    #[test]
    fn tiling_arithmetic_and_order() {
        let plane = ImagePlane::from_fn(16, 8, |r, c| (r * 16 + c) as f64 / 128.0);
        let grid = blockwise_dct(&plane).unwrap();
        assert_eq!((grid.blocks_w, grid.blocks_h, grid.blocks.len()), (2, 1, 2));
        assert_eq!(grid.blocks[1], dct2_8x8(&read_tile(&plane, 0, 1)));
        assert!(blockwise_dct(&ImagePlane::new(12, 8)).is_err());
    }

    #[test]
    fn repeated_tile_gives_identical_blocks() {
        let plane = ImagePlane::from_fn(24, 16, |r, c| ((r % 8) * 3 + (c % 8) * 5) as f64 / 60.0);
        let grid = blockwise_dct(&plane).unwrap();
        assert!(grid.blocks.iter().all(|b| *b == grid.blocks[0]));
    }

    #[test]
    fn blockwise_matches_independent_tiles_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plane = ImagePlane::from_fn(32, 24, |_, _| rng.random());
        let grid = blockwise_dct(&plane).unwrap();
        for bi in 0..3 {
            for bj in 0..4 {
                let mut tile = Block8::zeros();
                for m in 0..8 {
                    for n in 0..8 {
                        tile.0[m * 8 + n] = plane.get(bi * 8 + m, bj * 8 + n);
                    }
                }
                assert!(max_diff(&grid.block(bi, bj).0, &naive_dct(&tile).0) < 1e-9);
            }
        }
        let energy_px: f64 = plane.as_slice().iter().map(|v| v * v).sum();
        let energy_c: f64 = grid.blocks.iter().flat_map(|b| b.0).map(|v| v * v).sum();
        assert!((energy_px - energy_c).abs() / energy_px < 1e-6);
        assert!(max_diff(blockwise_idct(&grid).as_slice(), plane.as_slice()) < 1e-9);
    }

    proptest! {
        #[test]
        fn linear_orthonormal_and_invertible(
            xs in prop::array::uniform32(-4.0f64..4.0),
            ys in prop::array::uniform32(-4.0f64..4.0),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            // Expand 32 samples to 64 by mirroring to keep the strategy small.
            let x = Block8(std::array::from_fn(|i| xs[i % 32] * if i < 32 { 1.0 } else { -0.5 }));
            let y = Block8(std::array::from_fn(|i| ys[(i * 7) % 32]));
            let combo = Block8(std::array::from_fn(|i| a * x.0[i] + b * y.0[i]));
            let lhs = dct2_8x8(&combo);
            let (cx, cy) = (dct2_8x8(&x), dct2_8x8(&y));
            for i in 0..64 {
                prop_assert!((lhs.0[i] - (a * cx.0[i] + b * cy.0[i])).abs() < 1e-9);
            }

            let nx: f64 = x.0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nc: f64 = cx.0.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((nx - nc).abs() <= 1e-9 * nx.max(1e-300));

            prop_assert!(max_diff(&idct2_8x8(&cx).0, &x.0) < 1e-9);
            let as_coeffs = CoeffBlock(y.0);
            prop_assert!(max_diff(&dct2_8x8(&idct2_8x8(&as_coeffs)).0, &y.0) < 1e-9);
        }
    }
}
