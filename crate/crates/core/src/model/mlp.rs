//! Per-point MLP classifier with hand-derived reverse-mode gradients.
//!
//! Architecture: `F -> H -> H -> C`, ReLU between layers, row-wise softmax at
//! the output. Losses hand the backward pass their gradient with respect to
//! the logits, which for softmax cross-entropy is the fused `p - onehot`
//! form.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::types::ProbMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            biases: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

impl MlpParams {
    /// He-uniform weights from `seed`, zero biases. `dims` lists layer widths
    /// from input to output.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = rng_from_seed(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let weights = Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-bound..=bound));
                Layer {
                    weights,
                    biases: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim()];
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters in layer order, weights row-major before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("model parameter #{i}"))),
            None => Ok(()),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.biases.scaled_add(scale, &b.biases);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("invalid layer widths {dims:?}")));
    }
    Ok(())
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer: the features, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre_acts: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probs: ProbMatrix,
}

impl ForwardCache {
    /// Pre-activations of the hidden layers, in layer order.
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre_acts
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn forward_cached(params: &MlpParams, features: &Array2<f64>) -> Result<ForwardCache> {
    params.check_finite()?;
    if features.ncols() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} columns, model expects {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre_acts = Vec::with_capacity(last);
    let mut x = features.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = x.dot(&layer.weights.t());
        z += &layer.biases;
        inputs.push(x);
        if li == last {
            x = z;
        } else {
            let a = z.mapv(|v| v.max(0.0));
            pre_acts.push(z);
            x = a;
        }
    }
    let logits = x;
    // Validation rejects rows that drift from 1 by more than 1e-9.
    let probs = ProbMatrix::new(softmax_rows(&logits))?;
    Ok(ForwardCache {
        inputs,
        pre_acts,
        logits,
        probs,
    })
}

pub fn forward(params: &MlpParams, features: &Array2<f64>) -> Result<ProbMatrix> {
    Ok(forward_cached(params, features)?.probs)
}

/// Parameter gradients given `d loss / d logits`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, logit_grad: &Array2<f64>) -> Gradients {
    debug_assert_eq!(logit_grad.dim(), cache.logits.dim());
    let mut grads = params.zeros_like();
    let mut delta = logit_grad.clone();
    for li in (0..params.layers.len()).rev() {
        let input = &cache.inputs[li];
        let g = &mut grads.layers[li];
        g.weights = delta.t().dot(input);
        g.biases = delta.sum_axis(Axis(0));
        if li > 0 {
            let mut upstream = delta.dot(&params.layers[li].weights);
            Zip::from(&mut upstream)
                .and(&cache.pre_acts[li - 1])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = upstream;
        }
    }
    grads
}
