//! Same-padded 2-D convolution on channel-major feature maps.

/// `channels × height × width`, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Output positions `p` with `0 <= p + offset < len`.
#[inline]
fn valid_range(offset: isize, len: usize) -> std::ops::Range<usize> {
    let start = (-offset).max(0) as usize;
    let end = (len as isize - offset).clamp(0, len as isize) as usize;
    start..end.max(start)
}

/// Convolution parameters: `weights[o][i][ky][kx]`, `bias[o]`.
pub(crate) struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
}

impl ConvShape {
    #[inline]
    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.k + ky) * self.k + kx
    }
}

/// Upper bound on the number of output pixels unrolled at once, which keeps
/// the column buffer small on large images.
const BAND_PIXELS: usize = 2048;

fn band_rows(width: usize) -> usize {
    (BAND_PIXELS / width.max(1)).max(1)
}

/// Unrolls rows `r0..r1` of the zero-padded input into a
/// `(in_ch·k·k) × ((r1−r0)·w)` matrix whose row order matches the weights.
fn im2col(shape: &ConvShape, input: &Tensor, r0: usize, r1: usize, cols: &mut Vec<f64>) {
    let (h, w) = (input.height, input.width);
    let n = (r1 - r0) * w;
    let pad = (shape.k / 2) as isize;
    cols.clear();
    cols.resize(shape.in_ch * shape.k * shape.k * n, 0.0);
    let mut row = 0;
    for i in 0..shape.in_ch {
        let src = input.channel(i);
        for ky in 0..shape.k {
            let dy = ky as isize - pad;
            let rows = valid_range(dy, h);
            for kx in 0..shape.k {
                let dx = kx as isize - pad;
                let xs = valid_range(dx, w);
                let dst = &mut cols[row * n..(row + 1) * n];
                row += 1;
                if xs.is_empty() {
                    continue;
                }
                for y in r0.max(rows.start)..r1.min(rows.end) {
                    let sy = (y as isize + dy) as usize;
                    let d0 = (y - r0) * w;
                    let s0 = sy * w + (xs.start as isize + dx) as usize;
                    dst[d0 + xs.start..d0 + xs.end].copy_from_slice(&src[s0..s0 + xs.len()]);
                }
            }
        }
    }
}

/// Scatter-adds a column matrix produced for rows `r0..r1` back into `grad`.
fn col2im_add(shape: &ConvShape, cols: &[f64], r0: usize, r1: usize, grad: &mut Tensor) {
    let (h, w) = (grad.height, grad.width);
    let n = (r1 - r0) * w;
    let pad = (shape.k / 2) as isize;
    let mut row = 0;
    for i in 0..shape.in_ch {
        let dst = grad.channel_mut(i);
        for ky in 0..shape.k {
            let dy = ky as isize - pad;
            let rows = valid_range(dy, h);
            for kx in 0..shape.k {
                let dx = kx as isize - pad;
                let xs = valid_range(dx, w);
                let src = &cols[row * n..(row + 1) * n];
                row += 1;
                if xs.is_empty() {
                    continue;
                }
                for y in r0.max(rows.start)..r1.min(rows.end) {
                    let sy = (y as isize + dy) as usize;
                    let c0 = (y - r0) * w;
                    let d0 = sy * w + (xs.start as isize + dx) as usize;
                    for (dv, sv) in dst[d0..d0 + xs.len()].iter_mut().zip(&src[c0 + xs.start..c0 + xs.end]) {
                        *dv += sv;
                    }
                }
            }
        }
    }
}

/// `C = alpha·A·B + beta·C` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    // Bounds of the last element touched in each operand.
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the assertions above keep every access inside the slices, and
    // `c` is a unique borrow that does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Below this many output channels the unrolled matrix costs more than it
/// saves and the direct loops are used instead.
const GEMM_MIN_OUT: usize = 8;

/// Cross-correlation with zero padding `k / 2`, plus bias.
pub(crate) fn forward(shape: &ConvShape, weights: &[f64], bias: &[f64], input: &Tensor) -> Tensor {
    if shape.out_ch >= GEMM_MIN_OUT {
        forward_gemm(shape, weights, bias, input)
    } else {
        forward_direct(shape, weights, bias, input)
    }
}

/// Accumulates parameter gradients for `grad_out` (gradient w.r.t. the
/// pre-activation output) and optionally returns the input gradient.
pub(crate) fn backward(
    shape: &ConvShape,
    weights: &[f64],
    input: &Tensor,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Tensor> {
    if shape.out_ch >= GEMM_MIN_OUT {
        backward_gemm(shape, weights, input, grad_out, grad_w, grad_b, want_input)
    } else {
        backward_direct(shape, weights, input, grad_out, grad_w, grad_b, want_input)
    }
}

fn forward_direct(shape: &ConvShape, weights: &[f64], bias: &[f64], input: &Tensor) -> Tensor {
    let (h, w) = (input.height, input.width);
    let pad = (shape.k / 2) as isize;
    let mut out = Tensor::zeros(shape.out_ch, h, w);
    for o in 0..shape.out_ch {
        let dst = out.channel_mut(o);
        dst.fill(bias[o]);
        for i in 0..shape.in_ch {
            let src = input.channel(i);
            for ky in 0..shape.k {
                let dy = ky as isize - pad;
                let rows = valid_range(dy, h);
                for kx in 0..shape.k {
                    let dx = kx as isize - pad;
                    let cols = valid_range(dx, w);
                    let wt = weights[shape.w_index(o, i, ky, kx)];
                    if wt == 0.0 || cols.is_empty() {
                        continue;
                    }
                    for y in rows.clone() {
                        let sy = (y as isize + dy) as usize;
                        let d = &mut dst[y * w + cols.start..y * w + cols.end];
                        let s0 = sy * w + (cols.start as isize + dx) as usize;
                        let s = &src[s0..s0 + d.len()];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += wt * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

fn backward_direct(
    shape: &ConvShape,
    weights: &[f64],
    input: &Tensor,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Tensor> {
    let (h, w) = (input.height, input.width);
    let pad = (shape.k / 2) as isize;
    let mut grad_in = want_input.then(|| Tensor::zeros(shape.in_ch, h, w));
    for o in 0..shape.out_ch {
        let go = grad_out.channel(o);
        grad_b[o] += go.iter().sum::<f64>();
        for i in 0..shape.in_ch {
            let src = input.channel(i);
            for ky in 0..shape.k {
                let dy = ky as isize - pad;
                let rows = valid_range(dy, h);
                for kx in 0..shape.k {
                    let dx = kx as isize - pad;
                    let cols = valid_range(dx, w);
                    if cols.is_empty() {
                        continue;
                    }
                    let widx = shape.w_index(o, i, ky, kx);
                    let mut acc = 0.0;
                    for y in rows.clone() {
                        let sy = (y as isize + dy) as usize;
                        let g = &go[y * w + cols.start..y * w + cols.end];
                        let s0 = sy * w + (cols.start as isize + dx) as usize;
                        let s = &src[s0..s0 + g.len()];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_w[widx] += acc;

                    if let Some(gi) = grad_in.as_mut() {
                        let wt = weights[widx];
                        if wt == 0.0 {
                            continue;
                        }
                        let gi = gi.channel_mut(i);
                        for y in rows.clone() {
                            let sy = (y as isize + dy) as usize;
                            let g = &go[y * w + cols.start..y * w + cols.end];
                            let s0 = sy * w + (cols.start as isize + dx) as usize;
                            let d = &mut gi[s0..s0 + g.len()];
                            for (dv, gv) in d.iter_mut().zip(g) {
                                *dv += wt * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

fn forward_gemm(shape: &ConvShape, weights: &[f64], bias: &[f64], input: &Tensor) -> Tensor {
    let (h, w) = (input.height, input.width);
    let hw = h * w;
    let kk = shape.in_ch * shape.k * shape.k;
    let mut out = Tensor::zeros(shape.out_ch, h, w);
    let mut cols = Vec::new();
    let step = band_rows(w);
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + step).min(h);
        let n = (r1 - r0) * w;
        im2col(shape, input, r0, r1, &mut cols);
        gemm(
            shape.out_ch,
            kk,
            n,
            weights,
            (kk, 1),
            &cols,
            (n, 1),
            0.0,
            &mut out.data[r0 * w..],
            (hw, 1),
        );
        r0 = r1;
    }
    for (o, &b) in bias.iter().enumerate() {
        out.channel_mut(o).iter_mut().for_each(|v| *v += b);
    }
    out
}

fn backward_gemm(
    shape: &ConvShape,
    weights: &[f64],
    input: &Tensor,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input: bool,
) -> Option<Tensor> {
    let (h, w) = (input.height, input.width);
    let hw = h * w;
    let kk = shape.in_ch * shape.k * shape.k;
    for (o, gb) in grad_b.iter_mut().enumerate() {
        *gb += grad_out.channel(o).iter().sum::<f64>();
    }
    let mut grad_in = want_input.then(|| Tensor::zeros(shape.in_ch, h, w));
    let (mut cols, mut gcols) = (Vec::new(), Vec::new());
    let step = band_rows(w);
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + step).min(h);
        let n = (r1 - r0) * w;
        let go = &grad_out.data[r0 * w..];
        im2col(shape, input, r0, r1, &mut cols);
        // grad_w (out × kk) += grad_out (out × n) · colsᵀ (n × kk)
        gemm(shape.out_ch, n, kk, go, (hw, 1), &cols, (1, n), 1.0, grad_w, (kk, 1));
        if let Some(gi) = grad_in.as_mut() {
            // gcols (kk × n) = weightsᵀ (kk × out) · grad_out (out × n)
            gcols.clear();
            gcols.resize(kk * n, 0.0);
            gemm(kk, shape.out_ch, n, weights, (1, kk), go, (hw, 1), 0.0, &mut gcols, (n, 1));
            col2im_add(shape, &gcols, r0, r1, gi);
        }
        r0 = r1;
    }
    grad_in
}
