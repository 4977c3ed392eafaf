//! Dense tanh network with a linear output layer. Batches are column-major:
//! one sample per column.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass: the input followed by every hidden
/// layer output. The final (linear) output is returned separately.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// Layer sizes `[input, hidden.., output]`, uniform `±√(1/fan_in)` init
    /// for weights and biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (1.0 / w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *v = rng.gen_range(-bound..bound);
                }
                layer
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Sum of all parameters; a cheap fingerprint.
    pub fn checksum(&self) -> f64 {
        self.params().sum()
    }

    fn affine(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weights * x;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = Self::affine(layer, &a);
            if i < last {
                a.apply(|v| *v = v.tanh());
            }
        }
        a
    }

    pub fn forward_cached(&self, x: DMatrix<f64>) -> (DMatrix<f64>, ForwardCache) {
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x);
        for layer in &self.layers[..last] {
            let mut z = Self::affine(layer, activations.last().expect("non-empty"));
            z.apply(|v| *v = v.tanh());
            activations.push(z);
        }
        let out = Self::affine(&self.layers[last], activations.last().expect("non-empty"));
        (out, ForwardCache { activations })
    }

    /// Accumulates parameter gradients into `grad` given `d_out = ∂L/∂output`
    /// and returns `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, d_out: DMatrix<f64>, grad: &mut Mlp) -> DMatrix<f64> {
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            let g = &mut grad.layers[i];
            g.weights.gemm(1.0, &delta, &input.transpose(), 1.0);
            for col in delta.column_iter() {
                g.bias += col;
            }
            let mut d_input = self.layers[i].weights.tr_mul(&delta);
            if i > 0 {
                d_input.zip_apply(input, |d, a| *d *= 1.0 - a * a);
            }
            delta = d_input;
        }
        delta
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: vec![0.0; params],
            second: vec![0.0; params],
            steps: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &Mlp, scale: f64) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (((p, &g), m), v) in net
            .params_mut()
            .zip(grad.params())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let g = g * scale;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}
