//! Dense per-pixel layers with cached activations for manual backprop.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / input as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((output, input), |_| rng.gen_range(-limit..limit)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Stack of dense layers with ReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Activations kept from a batch forward pass: `inputs[l]` feeds layer `l`.
pub struct MlpTrace {
    pub(crate) inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    pub fn new(widths: &[usize], rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::he_uniform(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output_width()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Single-row evaluation.
    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.bias.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = layer.weight.row(o);
                for (w, xi) in row.iter().zip(&x) {
                    *yo += w * xi;
                }
            }
            if l != last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        x
    }

    /// Rows are samples.
    pub fn forward_batch(&self, input: Array2<f64>) -> MlpTrace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(x);
            x = z;
        }
        MlpTrace { inputs, output: x }
    }

    /// Accumulate parameter gradients for `d_output` (same shape as the traced
    /// output) into `grads`, laid out as in [`Mlp::write_params`].
    pub fn backward(&self, trace: &MlpTrace, d_output: Array2<f64>, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.param_count());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.param_count();
        }
        let mut dz = d_output;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &trace.inputs[l];
            let dw = dz.t().dot(x);
            let db = dz.sum_axis(Axis(0));
            let base = offsets[l];
            let nw = layer.weight.len();
            for (g, d) in grads[base..base + nw].iter_mut().zip(dw.iter()) {
                *g += d;
            }
            for (g, d) in grads[base + nw..base + nw + db.len()].iter_mut().zip(db.iter()) {
                *g += d;
            }
            if l > 0 {
                let mut dx = dz.dot(&layer.weight);
                // ReLU gate: the layer input is a post-activation, so x > 0 iff the gate was open
                ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = dx;
            }
        }
    }

    /// Append parameters: per layer, weight row-major then bias.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
    }

    /// Inverse of [`Mlp::write_params`]; returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = src[at];
                at += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = src[at];
                at += 1;
            }
        }
        at
    }
}
