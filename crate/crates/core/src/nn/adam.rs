use ndarray::Zip;

use super::mlp::{Dense, Gradients, Mlp};
use crate::error::{Error, Result};

/// Final learning rate as a fraction of the peak.
pub const LR_FLOOR: f64 = 0.1;

/// Half-cosine decay from `lr` to `lr * LR_FLOOR` over `total` iterations.
pub fn cosine_lr(lr: f64, it: usize, total: usize) -> f64 {
    let frac = it as f64 / total.max(1) as f64;
    lr * (LR_FLOOR + (1.0 - LR_FLOOR) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment accumulators for one network.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Dense>,
    second: Vec<Dense>,
    name: String,
}

fn zeros_like(net: &Mlp) -> Vec<Dense> {
    net.layers()
        .iter()
        .map(|l| Dense {
            weight: ndarray::Array2::zeros(l.weight.raw_dim()),
            bias: ndarray::Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

impl OptimState {
    /// `name` prefixes tensor names in error messages.
    pub fn new(net: &Mlp, config: AdamConfig, name: impl Into<String>) -> Self {
        Self {
            config,
            step: 0,
            first: zeros_like(net),
            second: zeros_like(net),
            name: name.into(),
        }
    }

    /// Applies one bias-corrected adaptive-moment update to `net`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.first.len() != net.layers().len() {
            return Err(Error::dims(
                format!("{} layer count", self.name),
                net.layers().len(),
                grads.layers.len(),
            ));
        }
        for (i, (g, p)) in grads.layers.iter().zip(net.layers()).enumerate() {
            if g.weight.dim() != p.weight.dim() {
                return Err(Error::dims(
                    format!("{}.layer{i}.weight", self.name),
                    p.weight.len(),
                    g.weight.len(),
                ));
            }
            if g.bias.dim() != p.bias.dim() {
                return Err(Error::dims(
                    format!("{}.layer{i}.bias", self.name),
                    p.bias.len(),
                    g.bias.len(),
                ));
            }
            if !g.weight.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: format!("{}.layer{i}.weight", self.name),
                });
            }
            if !g.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: format!("{}.layer{i}.bias", self.name),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, m), v), g) in net
            .layers_mut()
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
            .zip(&grads.layers)
        {
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::Rng;
    use ndarray::{Array1, Array2};

    fn grads_for(net: &Mlp, fill: f64) -> Gradients {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| Dense {
                    weight: Array2::from_elem(l.weight.raw_dim(), fill),
                    bias: Array1::from_elem(l.bias.raw_dim(), fill),
                })
                .collect(),
            input: Array2::zeros((1, net.input_dim())),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = Rng::new(1);
        let mut net = Mlp::new(&[3, 5, 2], &mut rng);
        let before = net.clone();
        let mut opt = OptimState::new(&net, AdamConfig::default(), "net");
        let g = grads_for(&net, 0.0);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut rng = Rng::new(2);
        let mut net = Mlp::new(&[2, 2], &mut rng);
        let before = net.clone();
        let mut opt = OptimState::new(&net, AdamConfig::default(), "net");
        let mut g = grads_for(&net, 0.0);
        g.layers[0].weight[[0, 0]] = 2.5;
        g.layers[0].weight[[1, 1]] = -0.01;
        opt.step(&mut net, &g).unwrap();
        let d00 = net.layers()[0].weight[[0, 0]] - before.layers()[0].weight[[0, 0]];
        let d11 = net.layers()[0].weight[[1, 1]] - before.layers()[0].weight[[1, 1]];
        assert!((d00 + 3e-4).abs() < 1e-9);
        assert!((d11 - 3e-4).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut rng = Rng::new(3);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng);
        let mut opt = OptimState::new(&net, AdamConfig::default(), "head");
        let mut g = grads_for(&net, 0.0);
        g.layers[1].bias[0] = f64::NAN;
        match opt.step(&mut net, &g) {
            Err(Error::NonFinite { tensor }) => assert_eq!(tensor, "head.layer1.bias"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(w) = (w - 3)^2 through a 1x1 linear layer with frozen zero bias gradient
        let mut net = Mlp::zeros(&[1, 1]);
        let mut opt = OptimState::new(&net, AdamConfig::with_lr(0.1), "w");
        for _ in 0..100 {
            let w = net.layers()[0].weight[[0, 0]];
            let mut g = grads_for(&net, 0.0);
            g.layers[0].weight[[0, 0]] = 2.0 * (w - 3.0);
            opt.step(&mut net, &g).unwrap();
        }
        let w = net.layers()[0].weight[[0, 0]];
        assert!((w - 3.0).abs() < 0.2, "w = {w}");
    }
}
