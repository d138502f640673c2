//! Small dense networks with hand-rolled reverse-mode differentiation.
//!
//! Layers are affine maps with tanh activations between them; the output is
//! either linear (critic) or tanh scaled to a symmetric range (actor). The
//! backward pass returns parameter gradients for a caller-supplied gradient of
//! the objective with respect to the network output, so the same code path
//! serves training and finite-difference verification.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One affine layer; also reused as the gradient container for that layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// Weights, shape (inputs, outputs).
    pub w: Array2<f64>,
    /// Biases, shape (outputs,).
    pub b: Array1<f64>,
}

impl Affine {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    fn xavier(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((inputs, outputs), |_| rng.gen_range(-bound..bound)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Output nonlinearity of the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// `scale * tanh(z)`; output lands in `(-scale, scale)`.
    Tanh { scale: f64 },
    Linear,
}

/// Feed-forward network: affine layers with tanh between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Affine>,
    pub output: OutputActivation,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<Affine>,
}

impl MlpGradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Activations recorded by [`Mlp::forward_cached`] for the backward pass.
pub struct ForwardCache {
    /// Input to each layer (so `inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Final network output.
    output: Array2<f64>,
}

impl Mlp {
    /// Xavier-initialized network over the given layer widths.
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let layers = sizes
            .windows(2)
            .map(|pair| Affine::xavier(pair[0], pair[1], rng))
            .collect();
        Self { layers, output }
    }

    /// All-zero network of the given widths.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|pair| Affine::zeros(pair[0], pair[1]))
            .collect();
        Self { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Affine::param_count).sum()
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).output
    }

    /// Forward pass for a single sample.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&input).row(0).to_vec()
    }

    /// Forward pass that keeps the per-layer inputs for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> ForwardCache {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.w) + &layer.b;
            inputs.push(current);
            if i + 1 < n {
                z.mapv_inplace(f64::tanh);
            } else {
                match self.output {
                    OutputActivation::Tanh { scale } => {
                        z.mapv_inplace(|v| scale * v.tanh());
                    }
                    OutputActivation::Linear => {}
                }
            }
            current = z;
        }
        ForwardCache {
            inputs,
            output: current,
        }
    }

    /// Reverse-mode pass: turns `d objective / d output` into parameter
    /// gradients. No batch averaging happens here; fold any `1/B` into
    /// `grad_output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Array2<f64>) -> MlpGradients {
        let n = self.layers.len();
        let mut grads: Vec<Affine> = self
            .layers
            .iter()
            .map(|l| Affine::zeros(l.w.nrows(), l.w.ncols()))
            .collect();

        // delta starts as d objective / d z_last
        let mut delta = match self.output {
            OutputActivation::Tanh { scale } => {
                // y = scale * tanh(z)  =>  dy/dz = scale * (1 - (y/scale)^2)
                let mut d = grad_output.clone();
                d.zip_mut_with(&cache.output, |g, y| {
                    let t = y / scale;
                    *g *= scale * (1.0 - t * t);
                });
                d
            }
            OutputActivation::Linear => grad_output.clone(),
        };

        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            grads[i].w = input.t().dot(&delta);
            grads[i].b = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].w.t());
                // inputs[i] is the tanh output of layer i-1
                upstream.zip_mut_with(input, |g, a| *g *= 1.0 - a * a);
                delta = upstream;
            }
        }
        MlpGradients { layers: grads }
    }

    pub fn output_of(cache: &ForwardCache) -> &Array2<f64> {
        &cache.output
    }
}

/// Stochastic gradient ascent with classical momentum.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Affine>,
}

impl MomentumSgd {
    pub fn new(like: &Mlp, learning_rate: f64, momentum: f64) -> Self {
        let velocity = like
            .layers
            .iter()
            .map(|l| Affine::zeros(l.w.nrows(), l.w.ncols()))
            .collect();
        Self {
            learning_rate,
            momentum,
            velocity,
        }
    }

    /// One ascent step on a maximized objective.
    pub fn ascend(&mut self, net: &mut Mlp, grads: &MlpGradients) {
        for ((layer, vel), grad) in net
            .layers
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grads.layers.iter())
        {
            vel.w.zip_mut_with(&grad.w, |v, g| *v = self.momentum * *v + g);
            vel.b.zip_mut_with(&grad.b, |v, g| *v = self.momentum * *v + g);
            layer.w.scaled_add(self.learning_rate, &vel.w);
            layer.b.scaled_add(self.learning_rate, &vel.b);
        }
    }
}
