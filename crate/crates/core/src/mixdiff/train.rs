//! Denoiser training on windows cut from the offline dataset.
//!
//! The encoder is frozen: every window's representation is computed once
//! from the context the policy would see online at that step.

use ndarray::Array2;

use super::policy::{input_batch, DiffusionPolicy, PolicyConfig, Variant};
use super::window::{broadcast_z, forward_perturb, target_with, WindowSpec};
use crate::dyncore::{Dataset, Trajectory};
use crate::encoder::{ContextWindow, EncoderBundle};
use crate::error::{Error, Result};
use crate::nn::loss::masked_mse;
use crate::nn::{cosine_lr, AdamConfig, OptimState, Rng};
use crate::standardize::Standardizer;

/// Clean training windows with their representations.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub spec: WindowSpec,
    pub x0: Array2<f64>,
    pub z: Array2<f64>,
}

/// Online context at step `t`: the `history` completed steps before `t`,
/// padded at the episode start.
pub fn online_context(traj: &Trajectory, t: usize, history: usize) -> ContextWindow {
    if t == 0 {
        ContextWindow::padding(history, traj.obs_dim, traj.action_dim)
    } else {
        ContextWindow::from_trajectory(traj, t - 1, history)
    }
}

fn fit_norms(dataset: &Dataset) -> (Standardizer, Standardizer) {
    let obs = Standardizer::fit(
        dataset.obs_dim(),
        dataset.iter().flat_map(|(_, _, t)| (0..t.len()).map(move |i| t.obs(i))),
    );
    let action = Standardizer::fit(
        dataset.action_dim(),
        dataset.iter().flat_map(|(_, _, t)| (0..t.len()).map(move |i| t.action(i))),
    );
    (obs, action)
}

/// Every window whose current step `t` leaves room for the future rows.
/// History rows before the episode start are zero padding.
pub fn build_windows(policy: &DiffusionPolicy, encoder: &EncoderBundle, dataset: &Dataset) -> Result<WindowSet> {
    let spec = policy.spec;
    let width = spec.width();
    let mut rows = Vec::new();
    let mut contexts = Vec::new();
    for (_, _, traj) in dataset.iter() {
        if traj.len() < spec.future {
            return Err(Error::EpisodeTooShort {
                len: traj.len(),
                required: spec.future,
            });
        }
        for t in 0..=traj.len() - spec.future {
            let mut x = vec![0.0; spec.len()];
            for r in 0..spec.rows() {
                let Some(step) = (t + r).checked_sub(spec.history) else {
                    continue;
                };
                policy.encode_row(traj.obs(step), traj.action(step), &mut x[r * width..(r + 1) * width]);
            }
            rows.extend(x);
            contexts.push(online_context(traj, t, encoder.history));
        }
    }
    let n = contexts.len();
    let x0 = Array2::from_shape_vec((n, spec.len()), rows).expect("window rows");
    let z = if policy.variant == Variant::Null {
        Array2::zeros((n, policy.z_dim))
    } else {
        encoder.encode_batch(&contexts)?
    };
    Ok(WindowSet { spec, x0, z })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyTrainingLog {
    /// Masked loss of every iteration.
    pub loss: Vec<f64>,
}

impl PolicyTrainingLog {
    /// Mean loss over the iterations `[from, to)`.
    pub fn mean(&self, from: usize, to: usize) -> f64 {
        let s = &self.loss[from.min(self.loss.len())..to.min(self.loss.len())];
        s.iter().sum::<f64>() / s.len().max(1) as f64
    }
}

/// Noise draw and regression target for one window.
pub(crate) struct Draw {
    pub x_k: Vec<f64>,
    pub target: Vec<f64>,
}

/// Perturbed window and the variant's target at level `k`.
pub(crate) fn draw(policy: &DiffusionPolicy, x0: &[f64], bz: &[f64], eps: &[f64], mask: &[f64], k: f64) -> Draw {
    let lambda = policy.effective_lambda();
    let sch = &policy.schedule;
    let x_k = forward_perturb(sch, x0, bz, eps, mask, k, lambda);
    let target_lambda = if policy.variant == Variant::Full { lambda } else { 0.0 };
    let target = target_with(bz, eps, mask, sch.alpha(k), sch.sigma(k), target_lambda);
    Draw { x_k, target }
}

/// Trains a denoiser of the configured variant against a frozen encoder.
pub fn train_policy(
    dataset: &Dataset,
    encoder: &EncoderBundle,
    encoder_hash: &str,
    config: &PolicyConfig,
    seed: u64,
) -> Result<(DiffusionPolicy, PolicyTrainingLog)> {
    config.validate()?;
    if encoder.env != dataset.env {
        return Err(Error::InvalidDomain(format!(
            "encoder trained on {} but dataset is {}",
            encoder.env.name(),
            dataset.env.name()
        )));
    }
    let spec = WindowSpec::new(config.history, config.future, dataset.obs_dim(), dataset.action_dim());
    let (obs_norm, action_norm) = fit_norms(dataset);
    let mut rng = Rng::derive(seed, 1);
    let mut policy = DiffusionPolicy::new(
        spec,
        config,
        encoder.z_dim(),
        obs_norm,
        action_norm,
        encoder_hash.to_string(),
        &mut rng,
    );
    let set = build_windows(&policy, encoder, dataset)?;
    let n = set.x0.nrows();
    if n == 0 {
        return Err(Error::NoAdmissiblePairs("no training windows".into()));
    }
    let mask = spec.mask();
    let weight_row: Vec<f64> = mask.iter().map(|m| 1.0 - m).collect();
    let bs = config.batch_size;
    let weight = Array2::from_shape_fn((bs, spec.len()), |(_, j)| weight_row[j]);
    let bzs: Vec<Vec<f64>> = (0..n)
        .map(|i| broadcast_z(set.z.row(i).as_slice().expect("row"), spec.rows(), &mask))
        .collect::<Result<_>>()?;

    let mut opt = OptimState::new(&policy.denoiser, AdamConfig::with_lr(config.lr), "denoiser");
    let mut ema = policy.denoiser.clone();
    let mut log = PolicyTrainingLog {
        loss: Vec::with_capacity(config.iterations),
    };
    let mut x_k = Array2::zeros((bs, spec.len()));
    let mut target = Array2::zeros((bs, spec.len()));
    let mut z = Array2::zeros((bs, policy.z_dim));
    let mut ks = vec![0.0; bs];
    let mut eps = vec![0.0; spec.len()];
    for it in 0..config.iterations {
        opt.config.lr = cosine_lr(config.lr, it, config.iterations);
        for b in 0..bs {
            let i = rng.below(n);
            let k = rng.uniform();
            rng.fill_normals(&mut eps);
            let d = draw(&policy, set.x0.row(i).as_slice().expect("row"), &bzs[i], &eps, &mask, k);
            x_k.row_mut(b).assign(&ndarray::ArrayView1::from(&d.x_k));
            target.row_mut(b).assign(&ndarray::ArrayView1::from(&d.target));
            z.row_mut(b).assign(&set.z.row(i));
            ks[b] = k;
        }
        let input = input_batch(&policy, &x_k, &ks, &z);
        let out = policy.denoiser.forward_train(input.view())?;
        let (loss, grad) = masked_mse(out.view(), target.view(), weight.view())?;
        if !loss.is_finite() {
            policy.denoiser.clear_cache();
            return Err(Error::Numerical(format!("policy loss is {loss} at iteration {it}")));
        }
        let g = policy.denoiser.backward(grad.view())?;
        opt.step(&mut policy.denoiser, &g)
            .map_err(|e| Error::Numerical(format!("iteration {it}: {e}")))?;
        // bias-corrected warm-up so early weights do not dominate short runs
        let decay = config.ema_decay.min((1.0 + it as f64) / (10.0 + it as f64));
        ema.blend_toward(&policy.denoiser, decay)?;
        log.loss.push(loss);
    }
    policy.denoiser = ema;
    Ok((policy, log))
}
