use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

/// Hidden width multiplier of [`NetworkSpec::default_head`].
pub const DEFAULT_HIDDEN_FACTOR: usize = 4;

impl NetworkSpec {
    pub fn mlp(
        input_width: usize,
        hidden: &[usize],
        hidden_act: Activation,
        output_width: usize,
        output_act: Activation,
    ) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: hidden_act,
            })
            .collect();
        layers.push(LayerSpec {
            width: output_width,
            activation: output_act,
        });
        Self { input_width, layers }
    }

    /// Two rectifier hidden layers of width `4 * input_width`.
    pub fn default_head(input_width: usize, output_width: usize, output_act: Activation) -> Self {
        let hidden = DEFAULT_HIDDEN_FACTOR * input_width;
        Self::mlp(
            input_width,
            &[hidden, hidden],
            Activation::Relu,
            output_width,
            output_act,
        )
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.width)
    }

    /// `(fan_in, fan_out)` of each layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut fan_in = self.input_width;
        self.layers
            .iter()
            .map(|l| {
                let s = (fan_in, l.width);
                fan_in = l.width;
                s
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("a network needs at least one layer".into()));
        }
        if self.input_width == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Weights are stored `fan_in x fan_out` so a batch row multiplies from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Trainable parameters of one network.
///
/// Every mutable borrow bumps `generation`, which invalidates forward caches
/// taken before the mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    layers: Vec<Dense>,
    generation: u64,
}

impl ParamStore {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .shapes()
            .into_iter()
            .map(|(i, o)| Dense {
                weight: Array2::zeros((i, o)),
                bias: Array1::zeros(o),
            })
            .collect();
        Self { layers, generation: 0 }
    }

    /// Zero biases, weights uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut store = Self::zeros(spec);
        for layer in &mut store.layers {
            let (i, o) = layer.weight.dim();
            let limit = (6.0 / (i + o) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        store
    }

    /// Build from explicit layers; shapes are checked against `spec`.
    pub fn from_layers(spec: &NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        let shapes = spec.shapes();
        if shapes.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                context: "layer count",
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for ((i, o), d) in shapes.iter().zip(&layers) {
            if d.weight.dim() != (*i, *o) || d.bias.len() != *o {
                return Err(Error::InvalidParameter(format!(
                    "layer shape {:?}/{} does not match spec ({i}, {o})",
                    d.weight.dim(),
                    d.bias.len()
                )));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Weight then bias of each layer, as flat slices.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|d| {
                [
                    d.weight.as_slice().expect("standard layout"),
                    d.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|d| {
                [
                    d.weight.as_slice_mut().expect("standard layout"),
                    d.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("non-empty network")
    }

    /// Sign pattern of every rectifier pre-activation. Two passes with the
    /// same pattern lie on the same linear piece of the network.
    pub fn relu_pattern(&self, spec: &NetworkSpec) -> Vec<bool> {
        spec.layers
            .iter()
            .zip(&self.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Parameter gradients, shaped like [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|d| {
                [
                    d.weight.as_slice().expect("standard layout"),
                    d.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

pub fn forward(spec: &NetworkSpec, params: &ParamStore, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    if input.ncols() != spec.input_width {
        return Err(Error::DimensionMismatch {
            context: "network input width",
            expected: spec.input_width,
            actual: input.ncols(),
        });
    }
    if params.layers.len() != spec.layers.len() {
        return Err(Error::DimensionMismatch {
            context: "parameter layers",
            expected: spec.layers.len(),
            actual: params.layers.len(),
        });
    }
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut pre = Vec::with_capacity(spec.layers.len());
    let mut post = Vec::with_capacity(spec.layers.len());
    let mut x = input.to_owned();
    for (layer, dense) in spec.layers.iter().zip(&params.layers) {
        let mut z = x.dot(&dense.weight);
        z += &dense.bias;
        let a = z.mapv(|v| layer.activation.apply(v));
        inputs.push(x);
        pre.push(z);
        x = a.clone();
        post.push(a);
    }
    let cache = ForwardCache {
        generation: params.generation,
        inputs,
        pre,
        post,
    };
    Ok((x, cache))
}

fn standard_layout(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Reverse pass. Returns parameter gradients and the gradient with respect
/// to the network input.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParamStore,
    cache: &ForwardCache,
    output_grad: ArrayView2<f64>,
) -> Result<(Gradients, Array2<f64>)> {
    if cache.generation != params.generation || cache.pre.len() != spec.layers.len() {
        return Err(Error::StaleCache {
            cached: cache.generation,
            current: params.generation,
        });
    }
    if output_grad.dim() != cache.output().dim() {
        return Err(Error::DimensionMismatch {
            context: "output gradient",
            expected: cache.output().len(),
            actual: output_grad.len(),
        });
    }
    let mut grads = Vec::with_capacity(spec.layers.len());
    let mut delta = output_grad.to_owned();
    for idx in (0..spec.layers.len()).rev() {
        let act = spec.layers[idx].activation;
        ndarray::Zip::from(&mut delta)
            .and(&cache.pre[idx])
            .and(&cache.post[idx])
            .for_each(|d, &z, &a| *d *= act.derivative(z, a));
        let weight = standard_layout(cache.inputs[idx].t().dot(&delta));
        let bias = delta.sum_axis(Axis(0));
        let next = delta.dot(&params.layers[idx].weight.t());
        grads.push(Dense { weight, bias });
        delta = next;
    }
    grads.reverse();
    Ok((Gradients { layers: grads }, delta))
}

/// A spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParamStore,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = ParamStore::init(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let params = ParamStore::zeros(&spec);
        Ok(Self { spec, params })
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        forward(&self.spec, &self.params, input)
    }

    /// Forward without keeping intermediates.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        backward(&self.spec, &self.params, cache, output_grad)
    }
}
