//! Three-layer SRCNN with hand-written backpropagation and per-layer SGD.
//!
//! Layers are 9×9 (1→64), 1×1 (64→32) and 5×5 (32→1) convolutions with ReLU
//! after the first two. Every layer is zero-padded so spatial dimensions are
//! preserved end to end, which keeps outputs aligned with the 8×8 DCT grid of
//! the target.
//!
//! Parameters live in `f64` but are kept representable as `f32` after
//! initialization, every SGD step and loading, so checkpoints round-trip
//! bit-exactly.

mod checkpoint;
mod conv;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use conv::Tensor;
pub use train::{batch_gradients, train, LogRow, Reduction, TrainConfig, TrainLog};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::raster::ImagePlane;
use conv::ConvShape;

/// Learning rates of the three layers.
pub const LEARNING_RATES: [f64; 3] = [1e-4, 1e-4, 1e-5];

/// Filter counts of the two hidden layers.
pub const WIDTHS: (usize, usize) = (64, 32);

/// Kernel sizes of the three layers.
pub const KERNELS: [usize; 3] = [9, 1, 5];

#[inline]
fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    /// `[out][in][ky][kx]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub learning_rate: f64,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize, learning_rate: f64) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        ConvLayer {
            in_ch,
            out_ch,
            k,
            weights: vec![0.0; out_ch * in_ch * k * k],
            bias: vec![0.0; out_ch],
            learning_rate,
        }
    }

    fn shape(&self) -> ConvShape {
        ConvShape {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            k: self.k,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.k + ky) * self.k + kx
    }

    pub fn forward(&self, input: &Tensor) -> Tensor {
        conv::forward(&self.shape(), &self.weights, &self.bias, input)
    }
}

/// Weight initialization scheme. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian(f64),
    /// `U(−1/√fan_in, 1/√fan_in)`, the default of common deep learning
    /// frameworks for convolution layers.
    FanInUniform,
}

/// Standard deviation of the default Gaussian initialization.
pub const INIT_STD: f64 = 0.001;

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian(INIT_STD)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrcnnModel {
    pub layers: [ConvLayer; 3],
}

/// Activations recorded by [`SrcnnModel::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Tensor,
    pre1: Tensor,
    post1: Tensor,
    pre2: Tensor,
    post2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients for every layer, plus the optional input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: [LayerGrad; 3],
    pub input: Option<ImagePlane>,
}

impl Gradients {
    pub fn zeros_like(model: &SrcnnModel) -> Self {
        Gradients {
            layers: std::array::from_fn(|l| LayerGrad {
                weights: vec![0.0; model.layers[l].weights.len()],
                bias: vec![0.0; model.layers[l].bias.len()],
            }),
            input: None,
        }
    }

    /// Adds the parameter gradients of `other`; input gradients are dropped.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        self.input = None;
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= c);
            l.bias.iter_mut().for_each(|x| *x *= c);
        }
        if let Some(g) = self.input.as_mut() {
            g.as_mut_slice().iter_mut().for_each(|x| *x *= c);
        }
    }

    /// Flattened parameter gradients in checkpoint order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

fn relu(t: &Tensor) -> Tensor {
    Tensor {
        data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*t
    }
}

/// Zeroes gradient entries whose pre-activation was not strictly positive.
fn relu_gate(grad: &mut Tensor, pre: &Tensor) {
    for (g, &z) in grad.data.iter_mut().zip(&pre.data) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

fn plane_to_tensor(plane: &ImagePlane) -> Tensor {
    Tensor {
        channels: 1,
        height: plane.height(),
        width: plane.width(),
        data: plane.as_slice().to_vec(),
    }
}

fn tensor_to_plane(t: Tensor) -> ImagePlane {
    ImagePlane::from_vec(t.width, t.height, t.data).expect("finite single-channel tensor")
}

impl SrcnnModel {
    /// Standard architecture with [`Init::default`] weights.
    pub fn new(seed: u64) -> Self {
        Self::with_widths(WIDTHS.0, WIDTHS.1, Init::default(), seed)
    }

    /// Architecture with custom hidden widths; kernels stay 9-1-5.
    pub fn with_widths(n1: usize, n2: usize, init: Init, seed: u64) -> Self {
        let mut model = Self::zeros(n1, n2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            match init {
                Init::Gaussian(std) => {
                    let dist = Normal::new(0.0, std).expect("valid standard deviation");
                    for w in &mut layer.weights {
                        *w = to_f32_precision(dist.sample(&mut rng));
                    }
                }
                Init::FanInUniform => {
                    let bound = 1.0 / ((layer.in_ch * layer.k * layer.k) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
                    for w in &mut layer.weights {
                        *w = to_f32_precision(dist.sample(&mut rng));
                    }
                }
            }
        }
        model
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        SrcnnModel {
            layers: [
                ConvLayer::zeros(1, n1, KERNELS[0], LEARNING_RATES[0]),
                ConvLayer::zeros(n1, n2, KERNELS[1], LEARNING_RATES[1]),
                ConvLayer::zeros(n2, 1, KERNELS[2], LEARNING_RATES[2]),
            ],
        }
    }

    /// Delta kernels routing the input through channel 0 of every layer;
    /// the output equals the input wherever the input is non-negative.
    pub fn pass_through(n1: usize, n2: usize) -> Self {
        let mut model = Self::zeros(n1, n2);
        for layer in &mut model.layers {
            let c = layer.k / 2;
            let idx = layer.weight_index(0, 0, c, c);
            layer.weights[idx] = 1.0;
        }
        model
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.layers[0].out_ch, self.layers[1].out_ch)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::num_params).sum()
    }

    pub fn forward(&self, input: &ImagePlane) -> (ImagePlane, ForwardCache) {
        let x = plane_to_tensor(input);
        let pre1 = self.layers[0].forward(&x);
        let post1 = relu(&pre1);
        let pre2 = self.layers[1].forward(&post1);
        let post2 = relu(&pre2);
        let out = self.layers[2].forward(&post2);
        let cache = ForwardCache {
            input: x,
            pre1,
            post1,
            pre2,
            post2,
        };
        (tensor_to_plane(out), cache)
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: &ImagePlane) -> ImagePlane {
        let x = plane_to_tensor(input);
        let h1 = relu(&self.layers[0].forward(&x));
        let h2 = relu(&self.layers[1].forward(&h1));
        tensor_to_plane(self.layers[2].forward(&h2))
    }

    /// Backpropagates `grad_output` (∂loss/∂output) through the network.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &ImagePlane,
        want_input_grad: bool,
    ) -> Result<Gradients> {
        let [l1, l2, l3] = &self.layers;
        let consistent = cache.pre1.channels == l1.out_ch
            && cache.pre2.channels == l2.out_ch
            && l2.in_ch == l1.out_ch
            && l3.in_ch == l2.out_ch
            && (cache.input.width, cache.input.height) == grad_output.dims();
        if !consistent {
            return Err(Error::DimensionMismatch(
                "forward cache does not match this model or gradient".into(),
            ));
        }

        let mut grads = Gradients::zeros_like(self);
        let [g1, g2, g3] = &mut grads.layers;
        let grad_out = plane_to_tensor(grad_output);

        let mut d2 = conv::backward(
            &l3.shape(),
            &l3.weights,
            &cache.post2,
            &grad_out,
            &mut g3.weights,
            &mut g3.bias,
            true,
        )
        .expect("input gradient requested");
        relu_gate(&mut d2, &cache.pre2);

        let mut d1 = conv::backward(
            &l2.shape(),
            &l2.weights,
            &cache.post1,
            &d2,
            &mut g2.weights,
            &mut g2.bias,
            true,
        )
        .expect("input gradient requested");
        relu_gate(&mut d1, &cache.pre1);

        let d0 = conv::backward(
            &l1.shape(),
            &l1.weights,
            &cache.input,
            &d1,
            &mut g1.weights,
            &mut g1.bias,
            want_input_grad,
        );
        grads.input = d0.map(tensor_to_plane);
        Ok(grads)
    }

    /// `w ← w − lr · g` per layer, rounding parameters to `f32` precision.
    pub fn sgd_step(&mut self, grads: &Gradients) -> Result<()> {
        for (layer, g) in self.layers.iter().zip(&grads.layers) {
            if layer.weights.len() != g.weights.len() || layer.bias.len() != g.bias.len() {
                return Err(Error::DimensionMismatch(
                    "gradient shapes do not match the model".into(),
                ));
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            let lr = layer.learning_rate;
            for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                *w = to_f32_precision(*w - lr * d);
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                *b = to_f32_precision(*b - lr * d);
            }
        }
        Ok(())
    }

    /// All parameters in checkpoint order (per layer: weights then biases).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    /// Mutable reference to the `index`-th parameter in [`flatten`](Self::flatten) order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}
