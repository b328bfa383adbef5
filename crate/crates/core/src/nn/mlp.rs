//! Fully connected networks with tanh hidden layers and a linear output.
//!
//! Inputs are batches laid out as `(batch, features)`. Weights are stored
//! `(fan_in, fan_out)` so a layer is `x.dot(W) + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Parameter gradients of an [`Mlp`] plus the gradient with respect to its
/// input batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|&g| g == 0.0))
            && self.input.iter().all(|&g| g == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    // Post-activation outputs of every layer, with the input batch first.
    cache: Option<Vec<Array2<f64>>>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "an mlp needs at least an input and output width");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform_in(-limit, limit));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self {
            layers,
            cache: None,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an mlp needs at least an input and output width");
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            layers,
            cache: None,
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::format("mlp", "no layers"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::dims(
                    format!("layer {} input", i + 1),
                    pair[0].fan_out(),
                    pair[1].fan_in(),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::dims(format!("layer {i} bias"), l.fan_out(), l.bias.len()));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("mlp input", self.input_dim(), x.ncols()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>, mut keep: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            if let Some(acts) = keep.as_deref_mut() {
                acts.push(std::mem::replace(&mut h, z));
            } else {
                h = z;
            }
        }
        if let Some(acts) = keep {
            acts.push(h.clone());
        }
        h
    }

    /// Pure evaluation on a batch.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, None))
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Evaluates a batch and keeps the activations for [`Mlp::backward`].
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let out = self.run(x, Some(&mut acts));
        self.cache = Some(acts);
        Ok(out)
    }

    /// Reverse-mode pass for the batch seen by the last `forward_train`.
    /// `out_grad` is dL/d(output) with the output's shape. The cache is
    /// consumed.
    pub fn backward(&mut self, out_grad: ArrayView2<f64>) -> Result<Gradients> {
        let acts = self.cache.take().ok_or(Error::NoCachedForward)?;
        let out = &acts[acts.len() - 1];
        if out_grad.dim() != out.dim() {
            return Err(Error::dims(
                "output gradient",
                out.len(),
                out_grad.len(),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = out_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[i];
            // a single input column makes the product column-major
            let weight = input.t().dot(&delta).as_standard_layout().into_owned();
            let bias = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&layer.weight.t()).as_standard_layout().into_owned();
            if i > 0 {
                // input is tanh output of the previous layer
                back.zip_mut_with(input, |g, &a| *g *= 1.0 - a * a);
            }
            grads.push(Dense { weight, bias });
            delta = back;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    /// Moves every parameter toward `other`: `p = decay * p + (1 - decay) * q`.
    pub fn blend_toward(&mut self, other: &Mlp, decay: f64) -> Result<()> {
        if self.layer_dims() != other.layer_dims() {
            return Err(Error::dims("blended layer count", self.layers.len(), other.layers.len()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.zip_mut_with(&b.weight, |p, &q| *p = decay * *p + (1.0 - decay) * q);
            a.bias.zip_mut_with(&b.bias, |p, &q| *p = decay * *p + (1.0 - decay) * q);
        }
        Ok(())
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Flat view over all parameters in declaration order
    /// (layer 0 weight row-major, layer 0 bias, layer 1 weight, ...).
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_net_outputs_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2]);
        net.layers_mut()[1].bias = array![0.5, -1.5];
        let y = net.forward_one(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = Mlp::from_layers(vec![Dense {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        }])
        .unwrap();
        assert_eq!(net.forward_one(&[0.3, -0.1, 2.0]).unwrap(), vec![0.3, -0.1, 2.0]);
    }

    #[test]
    fn two_three_one_matches_hand_evaluation() {
        let mut rng = Rng::new(11);
        let net = Mlp::new(&[2, 3, 1], &mut rng);
        let x = [0.1, -0.2];
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let mut expected = l1.bias[0];
        for j in 0..3 {
            let pre = x[0] * l0.weight[[0, j]] + x[1] * l0.weight[[1, j]] + l0.bias[j];
            expected += pre.tanh() * l1.weight[[j, 0]];
        }
        let y = net.forward_one(&x).unwrap();
        assert!((y[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(matches!(
            net.forward_one(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = Mlp::zeros(&[2, 2]);
        let g = Array2::zeros((1, 2));
        assert!(matches!(net.backward(g.view()), Err(Error::NoCachedForward)));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(5);
        let mut net = Mlp::new(&[4, 8, 8, 2], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.normal());
        net.forward_train(x.view()).unwrap();
        let g = net.backward(Array2::zeros((5, 2)).view()).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let mut rng = Rng::new(9);
        let net = Mlp::new(&[6, 16, 3], &mut rng);
        let x = Array2::from_shape_fn((7, 6), |_| rng.normal());
        let a = net.forward(x.view()).unwrap();
        let b = net.forward(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn linear_net_squared_loss_matches_normal_equations() {
        // single linear layer, no bias contribution checked separately
        let mut rng = Rng::new(21);
        let n = 12;
        let x = Array2::from_shape_fn((n, 3), |_| rng.normal());
        let y = Array2::from_shape_fn((n, 1), |_| rng.normal());
        let mut net = Mlp::new(&[3, 1], &mut rng);
        let w = net.layers()[0].weight.clone();
        let pred = net.forward_train(x.view()).unwrap();
        // loss = sum((pred - y)^2) / n
        let grad_out = (&pred - &y) * (2.0 / n as f64);
        let g = net.backward(grad_out.view()).unwrap();
        let residual = x.dot(&w) - &y;
        let closed_form = x.t().dot(&residual) * (2.0 / n as f64);
        for (a, b) in g.layers[0].weight.iter().zip(closed_form.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
