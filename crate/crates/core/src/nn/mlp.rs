use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LEAKY_SLOPE: f64 = 0.01;
/// Pre-activations of the exponential head are clamped to `[-30, 30]`.
pub const EXP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Exponential,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::LeakyRelu => {
                if z > T::zero() {
                    z
                } else {
                    z * T::of(LEAKY_SLOPE)
                }
            }
        }
    }

    #[inline]
    fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Activation::Identity, Activation::Relu, Activation::LeakyRelu].get(c as usize).copied()
    }
}

impl OutputActivation {
    /// Returns the activation value and its derivative with respect to `z`.
    #[inline]
    fn apply<T: Real>(self, z: T) -> (T, T) {
        match self {
            OutputActivation::Identity => (z, T::one()),
            OutputActivation::Exponential => {
                let c = T::of(EXP_CLAMP);
                if z > c || z < -c {
                    (z.max(-c).min(c).exp(), T::zero())
                } else {
                    let e = z.exp();
                    (e, e)
                }
            }
            OutputActivation::Sigmoid => {
                let s = T::one() / (T::one() + (-z).exp());
                (s, s * (T::one() - s))
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Exponential => 1,
            OutputActivation::Sigmoid => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [OutputActivation::Identity, OutputActivation::Exponential, OutputActivation::Sigmoid]
            .get(c as usize)
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_width: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
    pub output_width: usize,
}

impl MlpConfig {
    /// Two hidden layers of 16, identity activations, exponential output.
    pub fn envmap(input_width: usize) -> Self {
        Self {
            input_width,
            hidden_layers: 2,
            hidden_width: 16,
            hidden_activation: Activation::Identity,
            output_activation: OutputActivation::Exponential,
            output_width: 3,
        }
    }

    /// Two hidden layers of 16, leaky ReLU, sigmoid output.
    pub fn radiance(input_width: usize, output_width: usize) -> Self {
        Self {
            input_width,
            hidden_layers: 2,
            hidden_width: 16,
            hidden_activation: Activation::LeakyRelu,
            output_activation: OutputActivation::Sigmoid,
            output_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::Config("MLP input and output widths must be >= 1".into()));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        if self.hidden_layers > 64 || self.hidden_width > 4096 {
            return Err(Error::Config("MLP is unreasonably large".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_width];
        widths.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        widths.push(self.output_width);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// A fully-connected network. Parameters are one flat buffer: for each layer
/// the `out x in` row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    config: MlpConfig,
    params: Vec<T>,
    offsets: Vec<usize>,
    shapes: Vec<(usize, usize)>,
    version: u64,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    version: u64,
    /// Input of each layer; the last entry is the network output.
    activations: Vec<Vec<T>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<T>>,
    /// Output activation derivative.
    out_slope: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Which side of zero each pre-activation fell on. Two evaluations with
    /// the same pattern lie on the same smooth piece of a (leaky) ReLU net.
    pub fn sign_pattern(&self) -> Vec<bool> {
        self.pre.iter().flatten().map(|&z| z > T::zero()).collect()
    }
}

fn layer_offsets(cfg: &MlpConfig) -> Vec<usize> {
    let mut offsets = vec![0];
    for (i, o) in cfg.layer_shapes() {
        offsets.push(offsets.last().unwrap() + i * o + o);
    }
    offsets
}

impl<T: Real> Mlp<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(config.parameter_count());
        for (i, o) in config.layer_shapes() {
            let a = (6.0 / (i + o) as f64).sqrt();
            params.extend((0..i * o).map(|_| T::of(rng.gen_range(-a..=a))));
            params.extend(std::iter::repeat(T::zero()).take(o));
        }
        Ok(Self { offsets: layer_offsets(&config), shapes: config.layer_shapes(), config, params, version: 0 })
    }

    pub fn from_params(config: MlpConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.parameter_count() {
            return Err(Error::SizeMismatch(format!(
                "{} MLP parameters for a config needing {}",
                params.len(),
                config.parameter_count()
            )));
        }
        Ok(Self { offsets: layer_offsets(&config), shapes: config.layer_shapes(), config, params, version: 0 })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix and bias of `layer`.
    pub fn layer(&self, layer: usize) -> (&[T], &[T]) {
        let (i, o) = self.shapes[layer];
        let s = self.offsets[layer];
        (&self.params[s..s + i * o], &self.params[s + i * o..s + i * o + o])
    }

    pub fn new_cache(&self) -> ForwardCache<T> {
        let shapes = &self.shapes;
        let mut activations: Vec<Vec<T>> = shapes.iter().map(|&(i, _)| vec![T::zero(); i]).collect();
        activations.push(vec![T::zero(); self.config.output_width]);
        ForwardCache {
            version: self.version,
            activations,
            pre: shapes.iter().map(|&(_, o)| vec![T::zero(); o]).collect(),
            out_slope: vec![T::zero(); self.config.output_width],
        }
    }

    /// Evaluates the network, filling `cache`; returns the output slice.
    pub fn forward<'c>(&self, x: &[T], cache: &'c mut ForwardCache<T>) -> Result<&'c [T]> {
        if x.len() != self.config.input_width {
            return Err(Error::Shape(format!(
                "MLP input of width {}, expected {}",
                x.len(),
                self.config.input_width
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP input".into()));
        }
        if cache.pre.len() != self.shapes.len() {
            *cache = self.new_cache();
        }
        cache.version = self.version;
        cache.activations[0].copy_from_slice(x);
        let shapes = &self.shapes;
        let last = shapes.len() - 1;
        for (l, &(fi, fo)) in shapes.iter().enumerate() {
            let s = self.offsets[l];
            let w = &self.params[s..s + fi * fo];
            let b = &self.params[s + fi * fo..s + fi * fo + fo];
            let (head, tail) = cache.activations.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let pre = &mut cache.pre[l];
            for j in 0..fo {
                let row = &w[j * fi..(j + 1) * fi];
                let mut z = b[j];
                for (&wk, &xk) in row.iter().zip(input.iter()) {
                    z += wk * xk;
                }
                pre[j] = z;
                if l == last {
                    let (y, dy) = self.config.output_activation.apply(z);
                    out[j] = y;
                    cache.out_slope[j] = dy;
                } else {
                    out[j] = self.config.hidden_activation.apply(z);
                }
            }
        }
        Ok(cache.activations.last().unwrap())
    }

    /// Convenience forward without keeping the cache.
    pub fn evaluate(&self, x: &[T]) -> Result<Vec<T>> {
        let mut cache = self.new_cache();
        Ok(self.forward(x, &mut cache)?.to_vec())
    }

    /// Reverse pass for the forward that filled `cache`. Parameter gradients
    /// are added into `grads` (same layout as [`Mlp::params`]); the gradient
    /// with respect to the input is written to `input_grad`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        upstream: &[T],
        grads: &mut [T],
        input_grad: &mut [T],
    ) -> Result<()> {
        if cache.version != self.version || cache.pre.len() != self.shapes.len() {
            return Err(Error::StaleCache("MLP parameters changed since the forward pass".into()));
        }
        if upstream.len() != self.config.output_width
            || grads.len() != self.params.len()
            || input_grad.len() != self.config.input_width
        {
            return Err(Error::Shape("MLP backward buffers do not match the network".into()));
        }
        let shapes = &self.shapes;
        let mut delta: Vec<T> = upstream.iter().zip(&cache.out_slope).map(|(&u, &s)| u * s).collect();
        for l in (0..shapes.len()).rev() {
            let (fi, fo) = shapes[l];
            let s = self.offsets[l];
            let input = &cache.activations[l];
            {
                let (gw, gb) = grads[s..s + fi * fo + fo].split_at_mut(fi * fo);
                for j in 0..fo {
                    let d = delta[j];
                    if d.is_zero() {
                        continue;
                    }
                    gb[j] += d;
                    for (g, &xk) in gw[j * fi..(j + 1) * fi].iter_mut().zip(input.iter()) {
                        *g += d * xk;
                    }
                }
            }
            let w = &self.params[s..s + fi * fo];
            let mut next = vec![T::zero(); fi];
            for j in 0..fo {
                let d = delta[j];
                if d.is_zero() {
                    continue;
                }
                for (n, &wk) in next.iter_mut().zip(&w[j * fi..(j + 1) * fi]) {
                    *n += d * wk;
                }
            }
            if l > 0 {
                let act = self.config.hidden_activation;
                for (n, &z) in next.iter_mut().zip(&cache.pre[l - 1]) {
                    *n *= act.derivative(z);
                }
            }
            delta = next;
        }
        input_grad.copy_from_slice(&delta);
        Ok(())
    }
}
