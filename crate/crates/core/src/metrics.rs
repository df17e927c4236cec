//! PSNR, SSIM and whole-set evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{list_pngs, load_training_pair};
use crate::degrade::{bicubic_resize, DegradeConfig};
use crate::error::{Error, Result};
use crate::raster::{rgb_to_ycbcr, ycbcr_to_rgb, ImagePlane, RgbImage};
use crate::srcnn::SrcnnModel;

/// Peak signal value of a `[0, 1]` plane.
pub const PEAK: f64 = 1.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `10 log10(peak² / mse)`; `+∞` for identical planes.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.ensure_same_dims(b, "psnr")?;
    let mse = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Normalized 2-D Gaussian window, row-major.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mean SSIM over every position where the 11×11 window fits.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.ensure_same_dims(b, "ssim")?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let win = ssim_window();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                let row = (y + wy) * w + x;
                let wrow = &win[wy * SSIM_WINDOW..(wy + 1) * SSIM_WINDOW];
                for (wx, &g) in wrow.iter().enumerate() {
                    let (p, q) = (xa[row + wx], xb[row + wx]);
                    ma += g * p;
                    mb += g * q;
                    saa += g * p * p;
                    sbb += g * q * q;
                    sab += g * p * q;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    Ok(total / (ow * oh) as f64)
}

/// Something that maps a degraded (pre-upsampled) plane to a restored one.
pub trait Upscaler: Sync {
    fn restore(&self, degraded: &ImagePlane) -> ImagePlane;
}

impl Upscaler for SrcnnModel {
    fn restore(&self, degraded: &ImagePlane) -> ImagePlane {
        self.predict(degraded)
    }
}

/// The degraded input itself: the bicubic baseline.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bicubic;

impl Upscaler for Bicubic {
    fn restore(&self, degraded: &ImagePlane) -> ImagePlane {
        degraded.clone()
    }
}

/// Upsamples a color image by `scale`: all channels are bicubic-resized in
/// YCbCr, then the luminance is passed through `model`.
pub fn upscale_rgb(model: &dyn Upscaler, image: &RgbImage, scale: usize) -> Result<RgbImage> {
    if scale == 0 {
        return Err(Error::InvalidInput("scale must be >= 1".into()));
    }
    let (w, h) = (image.width() * scale, image.height() * scale);
    let (y, cb, cr) = rgb_to_ycbcr(image);
    let y = model.restore(&bicubic_resize(&y, w, h)?).clamped();
    ycbcr_to_rgb(&y, &bicubic_resize(&cb, w, h)?, &bicubic_resize(&cr, w, h)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ImageScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<ImageScore>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / n;
        let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
        EvalReport {
            rows,
            mean_psnr,
            mean_ssim,
        }
    }

    /// `image,psnr,ssim` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,psnr,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.name, fmt_value(r.psnr), fmt_value(r.ssim));
        }
        let _ = writeln!(s, "mean,{},{}", fmt_value(self.mean_psnr), fmt_value(self.mean_ssim));
        s
    }

    /// Aligned plain-text table with the same values as [`to_csv`](Self::to_csv).
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain([5, 4])
            .max()
            .unwrap_or(5);
        let mut s = format!("{:<width$}  {:>10}  {:>8}\n", "image", "psnr", "ssim");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>10}  {:>8}", r.name, fmt_value(r.psnr), fmt_value(r.ssim));
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>8}",
            "mean",
            fmt_value(self.mean_psnr),
            fmt_value(self.mean_ssim)
        );
        s
    }
}

/// Ground-truth images prepared once (luminance, cropped, degraded) so a
/// model can be scored repeatedly during training.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub items: Vec<EvalItem>,
}

#[derive(Clone, Debug)]
pub struct EvalItem {
    pub name: String,
    pub ground_truth: ImagePlane,
    pub degraded: ImagePlane,
}

impl EvalSet {
    pub fn from_dir(dir: impl AsRef<Path>, cfg: &DegradeConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let files = list_pngs(dir)?;
        if files.is_empty() {
            return Err(Error::Empty(format!("no PNG files in {}", dir.display())));
        }
        let items = files
            .iter()
            .map(|path| {
                let (ground_truth, degraded) = load_training_pair(path, cfg)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(EvalItem {
                    name,
                    ground_truth,
                    degraded,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalSet { items })
    }

    /// Scores `model` on every item. Outputs are clamped to `[0, 1]` before
    /// scoring, matching what would be written to disk.
    pub fn evaluate(&self, model: &dyn Upscaler) -> Result<EvalReport> {
        let rows = self
            .items
            .par_iter()
            .map(|item| {
                let out = model.restore(&item.degraded).clamped();
                Ok(ImageScore {
                    name: item.name.clone(),
                    psnr: psnr(&item.ground_truth, &out)?,
                    ssim: ssim(&item.ground_truth, &out)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport::from_rows(rows))
    }
}

/// Loads, degrades and scores every PNG in `gt_dir`.
pub fn evaluate_set(
    model: &dyn Upscaler,
    gt_dir: impl AsRef<Path>,
    cfg: &DegradeConfig,
) -> Result<EvalReport> {
    EvalSet::from_dir(gt_dir, cfg)?.evaluate(model)
}
