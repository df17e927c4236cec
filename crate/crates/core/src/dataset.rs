//! Training pairs: patch extraction, the packed patch file, the manifest and
//! shuffled batching.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::degrade::{degrade_pair, DegradeConfig};
use crate::error::{Error, Result};
use crate::raster::{load_luminance, ImagePlane};
use crate::seed::epoch_seed;

/// Patch edge length.
pub const PATCH_SIZE: usize = 32;

/// Distance between neighbouring patch origins.
pub const PATCH_STRIDE: usize = 13;

pub const PATCH_FILE_MAGIC: &[u8; 8] = b"FDPLPAT1";
pub const PATCH_FILE_NAME: &str = "patches.bin";
pub const MANIFEST_FILE_NAME: &str = "manifest.txt";

const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE;

/// A degraded input patch and its ground-truth target, cut from the same
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub input: ImagePlane,
    pub target: ImagePlane,
}

/// Number of window positions along one axis.
pub fn positions_along(len: usize, size: usize, stride: usize) -> usize {
    if len < size {
        0
    } else {
        (len - size) / stride + 1
    }
}

/// Closed-form patch count for a `width`×`height` plane.
pub fn patch_count(width: usize, height: usize, size: usize, stride: usize) -> usize {
    positions_along(width, size, stride) * positions_along(height, size, stride)
}

/// Row-major `(row, col)` origins of every window that fits entirely.
pub fn patch_origins(width: usize, height: usize, size: usize, stride: usize) -> Vec<(usize, usize)> {
    let rows = positions_along(height, size, stride);
    let cols = positions_along(width, size, stride);
    (0..rows)
        .flat_map(|a| (0..cols).map(move |b| (a * stride, b * stride)))
        .collect()
}

/// Cuts aligned windows out of a degraded/ground-truth pair. The degraded
/// window becomes the input, the ground-truth window the target.
pub fn extract_patches(
    gt: &ImagePlane,
    degraded: &ImagePlane,
    size: usize,
    stride: usize,
) -> Result<Vec<PatchPair>> {
    gt.ensure_same_dims(degraded, "extract_patches")?;
    if stride == 0 {
        return Err(Error::InvalidInput("patch stride must be >= 1".into()));
    }
    let (w, h) = gt.dims();
    if w < size || h < size {
        return Err(Error::InvalidInput(format!(
            "{w}x{h} image is smaller than a {size}x{size} patch"
        )));
    }
    patch_origins(w, h, size, stride)
        .into_iter()
        .map(|(r, c)| {
            Ok(PatchPair {
                input: degraded.crop(r, c, size, size)?,
                target: gt.crop(r, c, size, size)?,
            })
        })
        .collect()
}

/// In-memory 32×32 patch pairs stored at `f32` precision, the precision of
/// the patch file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchCorpus {
    inputs: Vec<f32>,
    targets: Vec<f32>,
}

impl PatchCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a PatchPair>) -> Result<Self> {
        let mut corpus = Self::new();
        for p in pairs {
            corpus.push(p)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, pair: &PatchPair) -> Result<()> {
        for plane in [&pair.input, &pair.target] {
            if plane.dims() != (PATCH_SIZE, PATCH_SIZE) {
                return Err(Error::DimensionMismatch(format!(
                    "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
                    plane.width(),
                    plane.height()
                )));
            }
        }
        self.inputs.extend(pair.input.as_slice().iter().map(|&v| v as f32));
        self.targets.extend(pair.target.as_slice().iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / PATCH_LEN
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn pair(&self, index: usize) -> PatchPair {
        let span = index * PATCH_LEN..(index + 1) * PATCH_LEN;
        let plane = |src: &[f32]| {
            let data = src[span.clone()].iter().map(|&v| f64::from(v)).collect();
            ImagePlane::from_vec(PATCH_SIZE, PATCH_SIZE, data).expect("patch samples are finite")
        };
        PatchPair {
            input: plane(&self.inputs),
            target: plane(&self.targets),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = PatchFileWriter::create(path)?;
        for i in 0..self.len() {
            writer.write_pair(&self.pair(i))?;
        }
        writer.finish()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let bad = |msg: String| Error::Decode {
            path: path.to_path_buf(),
            msg,
        };
        let mut bytes = Vec::new();
        File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
        let rest = bytes
            .strip_prefix(PATCH_FILE_MAGIC.as_slice())
            .ok_or_else(|| bad("bad patch file magic".into()))?;
        if rest.len() < 4 {
            return Err(bad("truncated patch file header".into()));
        }
        let count = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let body = &rest[4..];
        let expected = count * 2 * PATCH_LEN * 4;
        if body.len() != expected {
            return Err(bad(format!(
                "{count} pairs need {expected} bytes, found {}",
                body.len()
            )));
        }
        let mut corpus = PatchCorpus {
            inputs: Vec::with_capacity(count * PATCH_LEN),
            targets: Vec::with_capacity(count * PATCH_LEN),
        };
        for pair in body.chunks_exact(2 * PATCH_LEN * 4) {
            let (input, target) = pair.split_at(PATCH_LEN * 4);
            for (src, dst) in [(input, &mut corpus.inputs), (target, &mut corpus.targets)] {
                for c in src.chunks_exact(4) {
                    let v = f32::from_le_bytes(c.try_into().unwrap());
                    if !v.is_finite() {
                        return Err(bad("non-finite sample".into()));
                    }
                    dst.push(v);
                }
            }
        }
        Ok(corpus)
    }
}

/// Streams pairs into a patch file, fixing up the count on
/// [`finish`](Self::finish).
pub struct PatchFileWriter {
    path: PathBuf,
    out: BufWriter<File>,
    count: u64,
}

impl PatchFileWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(PATCH_FILE_MAGIC)
            .and_then(|_| out.write_all(&0u32.to_le_bytes()))
            .map_err(|e| Error::io(&path, e))?;
        Ok(PatchFileWriter {
            path,
            out,
            count: 0,
        })
    }

    pub fn write_pair(&mut self, pair: &PatchPair) -> Result<()> {
        if pair.input.dims() != (PATCH_SIZE, PATCH_SIZE) || pair.target.dims() != (PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::DimensionMismatch("patch pair must be 32x32".into()));
        }
        for plane in [&pair.input, &pair.target] {
            for &v in plane.as_slice() {
                self.out
                    .write_all(&(v as f32).to_le_bytes())
                    .map_err(|e| Error::io(&self.path, e))?;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        let count = u32::try_from(self.count)
            .map_err(|_| Error::InvalidInput("patch count exceeds u32".into()))?;
        let io = |e| Error::io(&self.path, e);
        self.out.flush().map_err(io)?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(PATCH_FILE_MAGIC.len() as u64)).map_err(io)?;
        file.write_all(&count.to_le_bytes()).map_err(io)?;
        file.flush().map_err(io)?;
        Ok(self.count)
    }
}

/// Where each stored pair came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub source: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: DegradeConfig,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# fdpl patch manifest\n# seed = {}\n# scale = {}\n# blur_sigma = {}\n# blur_kernel_radius = {}\n# patch_size = {PATCH_SIZE}\n# stride = {PATCH_STRIDE}\n# pairs = {}\n",
            self.seed,
            self.config.scale,
            self.config.blur_sigma,
            self.config.blur_kernel_radius,
            self.entries.len()
        );
        for e in &self.entries {
            s.push_str(&format!("{} {} {}\n", e.source, e.row, e.col));
        }
        s
    }

    /// Parses the text form. Source paths may contain spaces; the last two
    /// fields of a line are the origin.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut manifest = CorpusManifest {
            seed: 0,
            config: DegradeConfig::default(),
            entries: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            let bad = || Error::Format(format!("manifest line {}: {line:?}", lineno + 1));
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "seed" => manifest.seed = v.parse().map_err(|_| bad())?,
                        "scale" => manifest.config.scale = v.parse().map_err(|_| bad())?,
                        "blur_sigma" => manifest.config.blur_sigma = v.parse().map_err(|_| bad())?,
                        "blur_kernel_radius" => {
                            manifest.config.blur_kernel_radius = v.parse().map_err(|_| bad())?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.rsplitn(3, ' ');
            let col = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let row = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let source = parts.next().ok_or_else(bad)?.to_string();
            manifest.entries.push(ManifestEntry { source, row, col });
        }
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// PNG files directly inside `dir`, sorted by file name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Luminance of an image, cropped to the grid, with its degraded version.
pub fn load_training_pair(path: &Path, cfg: &DegradeConfig) -> Result<(ImagePlane, ImagePlane)> {
    let y = load_luminance(path)?;
    degrade_pair(&y, cfg)
}

/// Outcome of [`prepare_corpus`].
#[derive(Clone, Debug)]
pub struct PrepareReport {
    pub manifest: CorpusManifest,
    pub patch_file: PathBuf,
    pub manifest_file: PathBuf,
    /// Files that could not be read or were too small, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Degrades every PNG in `image_dir` and writes the patch file and manifest
/// into `out_dir`. Images are processed in file-name order; output order does
/// not depend on the number of worker threads.
pub fn prepare_corpus(
    image_dir: impl AsRef<Path>,
    cfg: &DegradeConfig,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<PrepareReport> {
    cfg.validate()?;
    let image_dir = image_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let files = list_pngs(image_dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!("no PNG files in {}", image_dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let patch_file = out_dir.join(PATCH_FILE_NAME);
    let mut writer = PatchFileWriter::create(&patch_file)?;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();

    let chunk = rayon::current_num_threads().max(1) * 2;
    for group in files.chunks(chunk) {
        let results: Vec<Result<(Vec<(usize, usize)>, Vec<PatchPair>)>> = group
            .par_iter()
            .map(|path| {
                let (gt, deg) = load_training_pair(path, cfg)?;
                let pairs = extract_patches(&gt, &deg, PATCH_SIZE, PATCH_STRIDE)?;
                Ok((patch_origins(gt.width(), gt.height(), PATCH_SIZE, PATCH_STRIDE), pairs))
            })
            .collect();
        for (path, result) in group.iter().zip(results) {
            match result {
                Ok((origins, pairs)) => {
                    let source = path.display().to_string();
                    for ((row, col), pair) in origins.into_iter().zip(&pairs) {
                        writer.write_pair(pair)?;
                        entries.push(ManifestEntry {
                            source: source.clone(),
                            row,
                            col,
                        });
                    }
                }
                Err(e) => skipped.push((path.clone(), e.to_string())),
            }
        }
    }
    writer.finish()?;

    let manifest = CorpusManifest {
        seed,
        config: *cfg,
        entries,
    };
    let manifest_file = out_dir.join(MANIFEST_FILE_NAME);
    std::fs::write(&manifest_file, manifest.to_text()).map_err(|e| Error::io(&manifest_file, e))?;
    Ok(PrepareReport {
        manifest,
        patch_file,
        manifest_file,
        skipped,
    })
}

/// Shuffled order of `len` items for epoch `epoch`.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch));
    order.shuffle(&mut rng);
    order
}

/// Endless stream of index batches. Each epoch is a fresh shuffle of the
/// whole corpus; the last batch of an epoch may be short.
#[derive(Clone, Debug)]
pub struct Batches {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Batches {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        Self::starting_at_epoch(len, batch_size, seed, 0)
    }

    /// Restarts the stream at the beginning of `epoch`.
    pub fn starting_at_epoch(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("cannot batch an empty corpus".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        Ok(Batches {
            len,
            batch_size,
            seed,
            epoch,
            order: epoch_order(len, seed, epoch),
            cursor: 0,
        })
    }

    /// Epoch the next batch belongs to.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

impl Iterator for Batches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.len {
            self.epoch += 1;
            self.order = epoch_order(self.len, self.seed, self.epoch);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.len);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}

/// Batches of pairs drawn from `corpus`.
pub fn batches(
    corpus: &PatchCorpus,
    batch_size: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Vec<PatchPair>> + '_> {
    let idx = Batches::new(corpus.len(), batch_size, seed)?;
    Ok(idx.map(move |b| b.into_iter().map(|i| corpus.pair(i)).collect()))
}

/// Reads a manifest plus patch file pair written by [`prepare_corpus`].
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<(CorpusManifest, PatchCorpus)> {
    let dir = dir.as_ref();
    let manifest = CorpusManifest::load(dir.join(MANIFEST_FILE_NAME))?;
    let corpus = PatchCorpus::load(dir.join(PATCH_FILE_NAME))?;
    if manifest.entries.len() != corpus.len() {
        return Err(Error::Format(format!(
            "manifest lists {} pairs but the patch file holds {}",
            manifest.entries.len(),
            corpus.len()
        )));
    }
    Ok((manifest, corpus))
}
