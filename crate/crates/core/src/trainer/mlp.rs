//! Small dense backbone with manual backprop: hidden layers are rectified,
//! the final layer is a linear embedding that feeds the classifier head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::{add_bias_rows, column_sums, matmul_nn, matmul_nt, matmul_tn, Matrix};

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer activations kept from a forward pass for backprop. `inputs[k]`
/// is what layer `k` consumed; `features` is the final embedding.
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pub features: Matrix,
}

pub struct MlpGradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl Mlp {
    /// Uniform `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` init for weights and
    /// biases, deterministic per seed.
    pub fn new(input_dim: usize, widths: &[usize], seed: u64) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidParameter(
                "backbone needs at least one layer".into(),
            ));
        }
        if widths.iter().any(|&w| w < 2) {
            return Err(Error::InvalidParameter(
                "backbone widths must be >= 2".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &out in widths {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut w = Matrix::zeros(out, fan_in);
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            let bias = (0..out).map(|_| rng.gen_range(-bound..bound)).collect();
            layers.push(Dense { w, bias });
            fan_in = out;
        }
        Ok(Self { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().unwrap().w.cols()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn forward(&self, x: &Matrix) -> Result<MlpCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::InvalidParameter(format!(
                "input width {} does not match backbone input {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            inputs.push(current.clone());
            let mut out = matmul_nt(&current, &layer.w);
            add_bias_rows(&mut out, &layer.bias);
            if k != last {
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            current = out;
        }
        Ok(MlpCache {
            inputs,
            features: current,
        })
    }

    /// Backprop from a gradient on the embedding; the input gradient is
    /// dropped (nothing sits below the backbone).
    pub fn backward(&self, cache: &MlpCache, d_features: &Matrix) -> MlpGradients {
        let last = self.layers.len() - 1;
        let mut grads: Vec<Option<(Matrix, Vec<f64>)>> = vec![None; self.layers.len()];
        let mut delta = d_features.clone();
        for k in (0..self.layers.len()).rev() {
            if k != last {
                // rectifier mask: the layer's output is the next layer's
                // input, zero exactly where the unit was inactive
                let activated = &cache.inputs[k + 1];
                for (v, &a) in delta.data_mut().iter_mut().zip(activated.data()) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            let d_w = matmul_tn(&delta, &cache.inputs[k]);
            let d_bias = column_sums(&delta);
            if k > 0 {
                delta = matmul_nn(&delta, &self.layers[k].w);
            }
            grads[k] = Some((d_w, d_bias));
        }
        MlpGradients {
            layers: grads.into_iter().map(|g| g.unwrap()).collect(),
        }
    }

    /// Walks `(parameter, gradient)` pairs layer by layer, weights before
    /// biases.
    pub fn visit_params_mut(
        &mut self,
        grads: &MlpGradients,
        f: &mut dyn FnMut(&mut [f64], &[f64]),
    ) {
        for (layer, (d_w, d_bias)) in self.layers.iter_mut().zip(&grads.layers) {
            f(layer.w.data_mut(), d_w.data());
            f(&mut layer.bias, d_bias);
        }
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &self.layers {
            out.push(layer.w.rows() * layer.w.cols());
            out.push(layer.bias.len());
        }
        out
    }
}
