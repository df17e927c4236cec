//! Resampling, blur and the low-resolution degradation pipeline.

use crate::dct::BLOCK;
use crate::error::{Error, Result};
use crate::raster::ImagePlane;

/// Parameters of the degradation pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeConfig {
    pub scale: usize,
    pub blur_sigma: f64,
    pub blur_kernel_radius: usize,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            scale: 3,
            blur_sigma: 1.0,
            blur_kernel_radius: 2,
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::InvalidInput(format!("scale must be >= 2, got {}", self.scale)));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "blur sigma must be > 0, got {}",
                self.blur_sigma
            )));
        }
        if self.blur_kernel_radius < 1 {
            return Err(Error::InvalidInput("blur kernel radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Ground-truth dimensions must be a multiple of this value: both the
    /// scale factor and the DCT block size divide it.
    pub fn crop_multiple(&self) -> usize {
        lcm(self.scale, BLOCK)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Keys cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Four taps per output coordinate: (first source index before clamping,
/// weights). Uses half-pixel-center mapping.
fn cubic_taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = in_len as f64 / out_len as f64;
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for t in 0..4 {
                let offset = t as f64 - 1.0;
                w[t] = cubic_kernel(frac - offset);
                idx[t] = (base as isize + t as isize - 1).clamp(0, last) as usize;
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resampling to exactly `out_w`×`out_h`, replicating the
/// border.
pub fn bicubic_resize(plane: &ImagePlane, out_w: usize, out_h: usize) -> Result<ImagePlane> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidInput(format!(
            "output size must be >= 1, got {out_w}x{out_h}"
        )));
    }
    let (in_w, in_h) = plane.dims();
    if (in_w, in_h) == (out_w, out_h) {
        return Ok(plane.clone());
    }

    let col_taps = cubic_taps(in_w, out_w);
    let mut horizontal = vec![0.0; out_w * in_h];
    for row in 0..in_h {
        let src = plane.row(row);
        let dst = &mut horizontal[row * out_w..(row + 1) * out_w];
        for (d, (idx, w)) in dst.iter_mut().zip(&col_taps) {
            *d = w[0] * src[idx[0]] + w[1] * src[idx[1]] + w[2] * src[idx[2]] + w[3] * src[idx[3]];
        }
    }

    let row_taps = cubic_taps(in_h, out_h);
    let mut out = vec![0.0; out_w * out_h];
    for (r, (idx, w)) in row_taps.iter().enumerate() {
        let dst = &mut out[r * out_w..(r + 1) * out_w];
        let rows = idx.map(|i| &horizontal[i * out_w..(i + 1) * out_w]);
        for c in 0..out_w {
            dst[c] = w[0] * rows[0][c] + w[1] * rows[1][c] + w[2] * rows[2][c] + w[3] * rows[3][c];
        }
    }
    ImagePlane::from_vec(out_w, out_h, out)
}

/// Normalized Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(plane: &ImagePlane, sigma: f64, radius: usize) -> Result<ImagePlane> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("blur sigma must be > 0, got {sigma}")));
    }
    let taps = gaussian_taps(sigma, radius);
    let (w, h) = plane.dims();
    let r = radius as isize;
    let clamp = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;

    let mut horizontal = vec![0.0; w * h];
    for row in 0..h {
        let src = plane.row(row);
        for col in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                acc += k * src[clamp(col as isize + t as isize - r, w)];
            }
            horizontal[row * w + col] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for (t, &k) in taps.iter().enumerate() {
            let src_row = clamp(row as isize + t as isize - r, h);
            let src = &horizontal[src_row * w..(src_row + 1) * w];
            let dst = &mut out[row * w..(row + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    ImagePlane::from_vec(w, h, out)
}

/// Center crop so both dimensions are multiples of `cfg.crop_multiple()`.
pub fn crop_to_grid(plane: &ImagePlane, cfg: &DegradeConfig) -> Result<ImagePlane> {
    cfg.validate()?;
    let m = cfg.crop_multiple();
    let (w, h) = plane.dims();
    let (cw, ch) = (w / m * m, h / m * m);
    if cw == 0 || ch == 0 {
        return Err(Error::InvalidInput(format!(
            "{w}x{h} image is smaller than the {m}-pixel grid required at scale {}",
            cfg.scale
        )));
    }
    plane.crop((h - ch) / 2, (w - cw) / 2, cw, ch)
}

/// Low-resolution simulation: bicubic downsample by the scale factor, blur,
/// bicubic upsample back.
///
/// The input is first center-cropped with [`crop_to_grid`]; the output has
/// the cropped dimensions. Use [`degrade_pair`] to get the matching ground
/// truth as well.
pub fn degrade(plane: &ImagePlane, cfg: &DegradeConfig) -> Result<ImagePlane> {
    Ok(degrade_pair(plane, cfg)?.1)
}

/// `(cropped ground truth, degraded)`.
pub fn degrade_pair(plane: &ImagePlane, cfg: &DegradeConfig) -> Result<(ImagePlane, ImagePlane)> {
    let gt = crop_to_grid(plane, cfg)?;
    let (w, h) = gt.dims();
    let small = bicubic_resize(&gt, w / cfg.scale, h / cfg.scale)?;
    let blurred = gaussian_blur(&small, cfg.blur_sigma, cfg.blur_kernel_radius)?;
    let degraded = bicubic_resize(&blurred, w, h)?;
    Ok((gt, degraded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct per-pixel evaluation of the 2-D bicubic kernel, without the
    /// separable two-pass structure.
    fn bicubic_oracle(plane: &ImagePlane, out_w: usize, out_h: usize) -> ImagePlane {
        let (in_w, in_h) = plane.dims();
        ImagePlane::from_fn(out_w, out_h, |r, c| {
            let sy = (r as f64 + 0.5) * in_h as f64 / out_h as f64 - 0.5;
            let sx = (c as f64 + 0.5) * in_w as f64 / out_w as f64 - 0.5;
            let (by, bx) = (sy.floor() as isize, sx.floor() as isize);
            let mut acc = 0.0;
            for yy in by - 1..=by + 2 {
                for xx in bx - 1..=bx + 2 {
                    let w = cubic_kernel(sy - yy as f64) * cubic_kernel(sx - xx as f64);
                    let py = yy.clamp(0, in_h as isize - 1) as usize;
                    let px = xx.clamp(0, in_w as isize - 1) as usize;
                    acc += w * plane.get(py, px);
                }
            }
            acc
        })
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        for i in 0..20 {
            let f = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|t| cubic_kernel(f - t as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_downsample_matches_direct_kernel() {
        let ramp = ImagePlane::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0);
        let fast = bicubic_resize(&ramp, 2, 2).unwrap();
        let slow = bicubic_oracle(&ramp, 2, 2);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // Sample (0,0) maps to source (0.5,0.5): the kernel reduces to the
        // midpoint of the four central samples, which for a ramp also picks
        // up clamped edge taps.
        let expected = {
            let w = [cubic_kernel(1.5), cubic_kernel(0.5), cubic_kernel(0.5), cubic_kernel(1.5)];
            let idx = [0usize, 0, 1, 2];
            let mut acc = 0.0;
            for (wy, &iy) in w.iter().zip(&idx) {
                for (wx, &ix) in w.iter().zip(&idx) {
                    acc += wy * wx * ramp.get(iy, ix);
                }
            }
            acc
        };
        assert!((fast.get(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_resize_is_exact() {
        let p = ImagePlane::from_fn(5, 7, |r, c| (r as f64 * 0.13 + c as f64 * 0.07).sin());
        assert_eq!(bicubic_resize(&p, 5, 7).unwrap(), p);
    }

    #[test]
    fn gaussian_taps_definition() {
        let taps = gaussian_taps(1.0, 2);
        assert_eq!(taps.len(), 5);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (i, t) in taps.iter().enumerate() {
            let k = i as f64 - 2.0;
            assert!((t / taps[2] - (-k * k / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_outer_product() {
        let mut p = ImagePlane::new(15, 15);
        p.set(7, 7, 1.0);
        let out = gaussian_blur(&p, 1.0, 2).unwrap();
        let taps = gaussian_taps(1.0, 2);
        for r in 0..15 {
            for c in 0..15 {
                let (dr, dc) = (r as isize - 7, c as isize - 7);
                let expected = if dr.abs() <= 2 && dc.abs() <= 2 {
                    taps[(dr + 2) as usize] * taps[(dc + 2) as usize]
                } else {
                    0.0
                };
                assert!((out.get(r, c) - expected).abs() < 1e-15);
            }
        }
        assert!((out.get(7, 7) - taps[2] * taps[2]).abs() < 1e-15);
    }

    #[test]
    fn crop_rule_arithmetic() {
        let cfg = DegradeConfig::default();
        assert_eq!(cfg.crop_multiple(), 24);
        let p = ImagePlane::filled(100, 100, 0.3);
        let (gt, deg) = degrade_pair(&p, &cfg).unwrap();
        assert_eq!(gt.dims(), (96, 96));
        assert_eq!(deg.dims(), (96, 96));

        let cfg4 = DegradeConfig { scale: 4, ..cfg };
        assert_eq!(cfg4.crop_multiple(), 8);
        assert_eq!(crop_to_grid(&ImagePlane::new(50, 33), &cfg4).unwrap().dims(), (48, 32));
    }

    #[test]
    fn crop_is_centered() {
        let p = ImagePlane::from_fn(27, 30, |r, c| (r * 100 + c) as f64);
        let cropped = crop_to_grid(&p, &DegradeConfig::default()).unwrap();
        assert_eq!(cropped.dims(), (24, 24));
        assert_eq!(cropped.get(0, 0), p.get(3, 1));
    }

    #[test]
    fn too_small_and_bad_config_are_errors() {
        let cfg = DegradeConfig::default();
        assert!(degrade(&ImagePlane::new(20, 50), &cfg).is_err());
        let bad = DegradeConfig { scale: 1, ..cfg };
        assert!(degrade(&ImagePlane::new(48, 48), &bad).is_err());
        assert!(gaussian_blur(&ImagePlane::new(4, 4), 0.0, 2).is_err());
        assert!(bicubic_resize(&ImagePlane::new(4, 4), 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn constants_survive_every_stage(v in 0.0f64..1.0, w in 24usize..80, h in 24usize..80) {
            let p = ImagePlane::filled(w, h, v);
            let cfg = DegradeConfig::default();
            for out in [
                bicubic_resize(&p, w / 3 + 1, h * 2).unwrap(),
                gaussian_blur(&p, 1.3, 3).unwrap(),
                degrade(&p, &cfg).unwrap(),
            ] {
                for s in out.as_slice() {
                    prop_assert!((s - v).abs() < 1e-9);
                }
            }
            let deg = degrade(&p, &cfg).unwrap();
            prop_assert_eq!(deg.width() % 24, 0);
            prop_assert_eq!(deg.height() % 24, 0);
        }

        #[test]
        fn separable_resize_matches_direct_oracle(
            seed in any::<u64>(), w in 1usize..9, h in 1usize..9, ow in 1usize..12, oh in 1usize..12,
        ) {
            let mut s = seed;
            let p = ImagePlane::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            });
            let fast = bicubic_resize(&p, ow, oh).unwrap();
            let slow = bicubic_oracle(&p, ow, oh);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
