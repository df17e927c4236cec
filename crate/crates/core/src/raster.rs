//! Image containers, PNG I/O and the YCbCr transform.
//!
//! All processing happens on [`ImagePlane`]s holding real-valued samples in a
//! nominal `[0, 1]` range. Conversion to 8-bit happens only at file
//! boundaries.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageEncoder, ImageReader};

use crate::error::{Error, Result};

/// A single-channel 2-D grid of samples, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    /// Zero-filled plane.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "plane dimensions must be >= 1");
        ImagePlane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "plane dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("plane contains non-finite samples".into()));
        }
        Ok(ImagePlane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut plane = Self::new(width, height);
        for row in 0..height {
            for col in 0..width {
                plane.data[row * width + col] = f(row, col);
            }
        }
        plane
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Copy of the `width`×`height` window whose top-left corner is at
    /// (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::InvalidInput(format!(
                "crop {width}x{height} at ({top},{left}) outside {}x{} plane",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for row in top..top + height {
            data.extend_from_slice(&self.row(row)[left..left + width]);
        }
        Ok(ImagePlane {
            width,
            height,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ImagePlane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub(crate) fn ensure_same_dims(&self, other: &ImagePlane, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// An RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("channel value outside [0, 1]".into()));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        self.pixels[row * self.width + col]
    }
}

/// Reads an 8-bit PNG. Grayscale images are replicated to three channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let decode_err = |msg: String| Error::Decode {
        path: path.to_path_buf(),
        msg,
    };
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(decode_err("not a PNG file".into()));
    }
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let rgb = match decoded {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => decoded.to_rgb8(),
        DynamicImage::ImageRgb8(img) => img,
        DynamicImage::ImageRgba8(_) => decoded.to_rgb8(),
        other => {
            return Err(decode_err(format!(
                "unsupported color type {:?}; expected 8-bit RGB or grayscale",
                other.color()
            )))
        }
    };
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| p.0.map(|c| f64::from(c) / 255.0))
        .collect();
    RgbImage::new(w as usize, h as usize, pixels)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, width: usize, height: usize, bytes: &[u8], color: ColorType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    encoder
        .write_image(bytes, width as u32, height as u32, color.into())
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })
}

/// Writes an 8-bit grayscale PNG; samples are clamped to `[0, 1]` and
/// quantized with `round(v * 255)`.
pub fn save_image(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = plane.as_slice().iter().map(|&v| to_u8(v)).collect();
    write_png(path.as_ref(), plane.width, plane.height, &bytes, ColorType::L8)
}

/// Writes an 8-bit RGB PNG.
pub fn save_rgb_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.pixels.iter().flatten().map(|&v| to_u8(v)).collect();
    write_png(path.as_ref(), img.width, img.height, &bytes, ColorType::Rgb8)
}

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// Full-range BT.601 (JPEG) transform. Chroma planes are offset by 0.5.
pub fn rgb_to_ycbcr(img: &RgbImage) -> (ImagePlane, ImagePlane, ImagePlane) {
    let n = img.pixels.len();
    let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &[r, g, b] in &img.pixels {
        let luma = KR * r + KG * g + KB * b;
        y.push(luma);
        cb.push(0.5 + (b - luma) / (2.0 * (1.0 - KB)));
        cr.push(0.5 + (r - luma) / (2.0 * (1.0 - KR)));
    }
    let plane = |data| ImagePlane {
        width: img.width,
        height: img.height,
        data,
    };
    (plane(y), plane(cb), plane(cr))
}

/// Inverse of [`rgb_to_ycbcr`]. Channels are clamped to `[0, 1]`, which is a
/// no-op for planes produced by the forward transform.
pub fn ycbcr_to_rgb(y: &ImagePlane, cb: &ImagePlane, cr: &ImagePlane) -> Result<RgbImage> {
    y.ensure_same_dims(cb, "ycbcr_to_rgb (y vs cb)")?;
    y.ensure_same_dims(cr, "ycbcr_to_rgb (y vs cr)")?;
    let pixels = y
        .data
        .iter()
        .zip(&cb.data)
        .zip(&cr.data)
        .map(|((&luma, &cb), &cr)| {
            let r = luma + 2.0 * (1.0 - KR) * (cr - 0.5);
            let b = luma + 2.0 * (1.0 - KB) * (cb - 0.5);
            let g = (luma - KR * r - KB * b) / KG;
            [r, g, b].map(|c| c.clamp(0.0, 1.0))
        })
        .collect();
    RgbImage::new(y.width, y.height, pixels)
}

/// Luminance plane of a PNG file.
pub fn load_luminance(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let img = load_image(path)?;
    Ok(rgb_to_ycbcr(&img).0)
}
