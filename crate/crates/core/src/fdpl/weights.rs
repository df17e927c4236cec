use std::fmt::Write as _;
use std::path::Path;

use crate::dct::{BLOCK, BLOCK_LEN};
use crate::error::{Error, Result};

/// A strictly positive 8×8 per-frequency weight, row-major by `(j, k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightMatrix([f64; BLOCK_LEN]);

/// Annex K luminance quantization table of the JPEG standard.
const JPEG_LUMA_Q: [u16; BLOCK_LEN] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

impl WeightMatrix {
    pub fn new(values: [f64; BLOCK_LEN]) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weight matrix entries must be finite and > 0, found {bad}"
            )));
        }
        Ok(WeightMatrix(values))
    }

    pub fn ones() -> Self {
        WeightMatrix([1.0; BLOCK_LEN])
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.0[j * BLOCK + k]
    }

    pub fn values(&self) -> &[f64; BLOCK_LEN] {
        &self.0
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &WeightMatrix) -> WeightMatrix {
        WeightMatrix(std::array::from_fn(|i| self.0[i] * other.0[i]))
    }

    /// Element-wise reciprocal.
    pub fn reciprocal(&self) -> WeightMatrix {
        WeightMatrix(self.0.map(|v| 1.0 / v))
    }

    pub fn scaled(&self, c: f64) -> Result<WeightMatrix> {
        WeightMatrix::new(self.0.map(|v| v * c))
    }

    /// Renders the 8-line text format, preceded by `#` comment lines.
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        for row in self.0.chunks(BLOCK) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Parses 8 rows of 8 whitespace-separated decimals. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(BLOCK_LEN);
        let mut rows = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Format(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != BLOCK {
                return Err(Error::Format(format!(
                    "line {}: expected {BLOCK} values, found {}",
                    lineno + 1,
                    row.len()
                )));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != BLOCK {
            return Err(Error::Format(format!("expected {BLOCK} rows, found {rows}")));
        }
        let arr: [f64; BLOCK_LEN] = values.try_into().expect("64 values");
        WeightMatrix::new(arr).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text(comments)).map_err(|e| Error::io(path, e))
    }
}

/// The JPEG luminance quantization table.
pub fn jpeg_luminance_qtable() -> WeightMatrix {
    WeightMatrix(JPEG_LUMA_Q.map(f64::from))
}

/// Reflection across the anti-diagonal: `out[j][k] = w[7 - k][7 - j]`.
pub fn antidiagonal_transpose(w: &WeightMatrix) -> WeightMatrix {
    let n = BLOCK - 1;
    WeightMatrix(std::array::from_fn(|i| {
        let (j, k) = (i / BLOCK, i % BLOCK);
        w.get(n - k, n - j)
    }))
}
