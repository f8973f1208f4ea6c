//! Fully connected network with ReLU hidden layers, identity output, and
//! hand-written backpropagation over row-major batches.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One affine layer. `weight` is `inputs x outputs`, so a batch `X` maps to
/// `X W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
pub type Gradients = Mlp;

/// Per-layer inputs recorded by a forward pass; `inputs[0]` is the batch.
pub struct ForwardTrace {
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases. With `zero_output` the last
    /// layer starts at zero, so the network outputs zeros.
    pub fn new(sizes: &[usize], zero_output: bool, rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n = net.layers.len();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            if zero_output && i + 1 == n {
                continue;
            }
            let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            layer
                .weight
                .iter_mut()
                .for_each(|w| *w = limit * (2.0 * rng.uniform() - 1.0));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for l in &layers {
            if l.bias.len() != l.outputs() || l.inputs() == 0 || l.outputs() == 0 {
                return Err(Error::Shape("bias length does not match layer outputs".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed input {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in checkpoint order: W0, b0, W1, b1, ...
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight) + &l.bias;
            if i < last {
                h.mapv_inplace(relu);
            }
        }
        Ok(h)
    }

    /// Single-row forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.weight) + &l.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            inputs.push(h);
            h = z;
        }
        Ok(ForwardTrace { inputs, output: h })
    }

    /// Gradients of a scalar loss given `d loss / d output` for the traced batch.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &Array2<f64>) -> Gradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let weight = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&layer.weight.t());
                // Inputs to layer i > 0 are ReLU outputs; zero means inactive.
                upstream.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = upstream;
            }
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        Mlp { layers: grads }
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward_one(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn shapes_chain_and_mismatch_is_rejected() {
        let mut rng = SimRng::new(1);
        let net = Mlp::new(&[6, 5, 4], false, &mut rng).unwrap();
        assert_eq!(net.sizes(), vec![6, 5, 4]);
        assert_eq!(net.param_count(), 6 * 5 + 5 + 5 * 4 + 4);
        assert!(net.forward_one(&[0.0; 5]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::from_layers(vec![Layer::zeros(2, 3), Layer::zeros(4, 1)]).is_err());
    }

    #[test]
    fn hand_computed_forward() {
        let net = Mlp::from_layers(vec![
            Layer {
                weight: array![[1.0, -1.0], [2.0, 0.5]],
                bias: array![0.0, 0.25],
            },
            Layer {
                weight: array![[1.0], [4.0]],
                bias: array![-1.0],
            },
        ])
        .unwrap();
        // hidden = relu([1 + 2, -1 + 0.5 + 0.25]) = [3, 0]; out = 3 - 1.
        assert_eq!(net.forward_one(&[1.0, 1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = SimRng::new(2);
        let net = Mlp::new(&[10, 20, 5], true, &mut rng).unwrap();
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(net.layers()[1].weight.iter().all(|&w| w == 0.0));
    }
}
