//! Differentiable building blocks with hand-written forward and backward
//! passes: the spline-initialized velocity layer, slow-fusion 3d convolution
//! and its transpose, local response normalization, fully connected layers,
//! and the two loss heads.
//!
//! Batch activations are rank-5 tensors `[batch, time, channels, height,
//! width]`; fully connected layers flatten everything after the batch axis.
//! Every layer caches its forward inputs and refuses `backward` without a
//! preceding `forward`.

mod conv;
mod fc;
mod loss;
mod lrn;
mod velocity;

pub use conv::{Conv3dLayer, ConvSpec, Deconv3dLayer};
pub use fc::FcLayer;
pub use loss::{euclidean_loss, softmax_cross_entropy, softmax_probabilities, LossNorm};
pub use lrn::{LrnLayer, LrnSpec};
pub use velocity::VelocityLayer;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Nonlinearity applied inside a layer's forward pass. Reconstruction and
/// pre-softmax outputs stay linear; everything else uses ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, preact: &mut Tensor) {
        if self == Activation::Relu {
            for v in preact.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Learnable weights and biases with same-shaped gradient accumulators.
///
/// Gradient buffers are allocated on first use so that construction-only
/// paths (shape checks at paper scale) do not pay double memory; once
/// allocated they always mirror the parameter shapes. They accumulate across
/// `backward` calls and are cleared only by the explicit [`zero_grads`]
/// operation.
///
/// [`zero_grads`]: LayerParams::zero_grads
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub weights: Tensor,
    pub biases: Tensor,
    weight_grads: Option<Tensor>,
    bias_grads: Option<Tensor>,
}

impl LayerParams {
    pub fn new(weights: Tensor, biases: Tensor) -> Self {
        LayerParams {
            weights,
            biases,
            weight_grads: None,
            bias_grads: None,
        }
    }

    pub fn zero_grads(&mut self) {
        match &mut self.weight_grads {
            Some(g) => g.fill(0.0),
            None => self.weight_grads = Some(Tensor::zeros(self.weights.dims())),
        }
        match &mut self.bias_grads {
            Some(g) => g.fill(0.0),
            None => self.bias_grads = Some(Tensor::zeros(self.biases.dims())),
        }
    }

    pub fn weight_grads(&self) -> &Tensor {
        self.weight_grads
            .as_ref()
            .expect("gradients read before any zero_grads/backward")
    }

    pub fn bias_grads(&self) -> &Tensor {
        self.bias_grads
            .as_ref()
            .expect("gradients read before any zero_grads/backward")
    }

    pub(crate) fn weight_grads_mut(&mut self) -> &mut Tensor {
        self.weight_grads
            .get_or_insert_with(|| Tensor::zeros(self.weights.dims()))
    }

    pub(crate) fn bias_grads_mut(&mut self) -> &mut Tensor {
        self.bias_grads
            .get_or_insert_with(|| Tensor::zeros(self.biases.dims()))
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Zero-mean Gaussian weight init (Box-Muller over the supplied rng).
pub fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        return sigma * r * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

pub fn gaussian_tensor(rng: &mut impl Rng, dims: &[usize], sigma: f64) -> Tensor {
    let mut t = Tensor::zeros(dims);
    for v in t.data_mut() {
        *v = gaussian(rng, sigma);
    }
    t
}

/// Common interface over all parameterized and parameter-free layers.
pub trait Layer {
    fn name(&self) -> &str;

    /// Run the layer and cache whatever the backward pass needs.
    fn forward(&mut self, input: &Tensor) -> Result<Tensor>;

    /// Propagate the upstream gradient to the layer input, accumulating
    /// parameter gradients. Errors if no forward pass is cached.
    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor>;

    /// Output dims for the given input dims (batch axis included), without
    /// running the layer.
    fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn params(&self) -> Option<&LayerParams>;

    fn params_mut(&mut self) -> Option<&mut LayerParams>;

    /// Smallest |pre-activation| seen in the cached forward pass, for tests
    /// that must keep finite-difference probes away from ReLU kinks.
    /// `None` when the layer has no nonlinearity.
    fn min_abs_preactivation(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn require_rank5(dims: &[usize], what: &str) -> Result<()> {
    if dims.len() != 5 {
        return Err(Error::shape(format!(
            "{what} expects [batch, time, channels, height, width], got {dims:?}"
        )));
    }
    Ok(())
}

pub(crate) fn no_cache_err(name: &str) -> Error {
    Error::domain(format!("{name}: backward called without a cached forward"))
}
