//! Binary checkpoint: `"SRCNN1"`, then `(out_ch, in_ch, k)` for each layer as
//! little-endian `u32`, then each layer's weights followed by its biases as
//! little-endian `f32`.

use std::path::Path;

use super::{ConvLayer, SrcnnModel, LEARNING_RATES};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SRCNN1";

pub(crate) fn encode(model: &SrcnnModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(6 + 36 + 4 * model.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for l in &model.layers {
        for dim in [l.out_ch, l.in_ch, l.k] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
    }
    for v in model.flatten() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub(crate) fn decode(bytes: &[u8]) -> Result<SrcnnModel> {
    let bad = |msg: &str| Error::Format(format!("checkpoint: {msg}"));
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC.as_slice())
        .ok_or_else(|| bad("bad magic"))?;
    if rest.len() < 36 {
        return Err(bad("truncated header"));
    }
    let (header, mut payload) = rest.split_at(36);
    let dims: Vec<usize> = header
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();

    let mut layers = Vec::with_capacity(3);
    for (l, d) in dims.chunks_exact(3).enumerate() {
        let (out_ch, in_ch, k) = (d[0], d[1], d[2]);
        if out_ch == 0 || in_ch == 0 || k % 2 == 0 || k > 63 {
            return Err(bad(&format!("invalid dimensions for layer {}", l + 1)));
        }
        layers.push((out_ch, in_ch, k));
    }
    let chain_ok = layers[0].1 == 1
        && layers[1].1 == layers[0].0
        && layers[2].1 == layers[1].0
        && layers[2].0 == 1;
    if !chain_ok {
        return Err(bad("layer channel counts do not chain 1 -> n1 -> n2 -> 1"));
    }

    let expected: usize = layers.iter().map(|(o, i, k)| o * i * k * k + o).sum();
    if payload.len() != 4 * expected {
        return Err(bad(&format!(
            "expected {} parameter bytes, found {}",
            4 * expected,
            payload.len()
        )));
    }

    let mut take = |n: usize| -> Result<Vec<f64>> {
        let (head, tail) = payload.split_at(4 * n);
        payload = tail;
        head.chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(f64::from(v))
                } else {
                    Err(bad("non-finite parameter"))
                }
            })
            .collect()
    };

    let mut built = Vec::with_capacity(3);
    for (l, &(out_ch, in_ch, k)) in layers.iter().enumerate() {
        let weights = take(out_ch * in_ch * k * k)?;
        let bias = take(out_ch)?;
        built.push(ConvLayer {
            in_ch,
            out_ch,
            k,
            weights,
            bias,
            learning_rate: LEARNING_RATES[l],
        });
    }
    let layers: [ConvLayer; 3] = built.try_into().expect("three layers");
    Ok(SrcnnModel { layers })
}

pub fn save_checkpoint(model: &SrcnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SrcnnModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
