//! Joint training of the context encoder with both dynamics heads.
//!
//! Each batch encodes the paired contexts, predicts the target transition
//! with the forward head (next-observation increment) and the inverse head
//! (action), and back-propagates
//! `beta_forward * mse_forward + beta_inverse * mse_inverse` through heads
//! and encoder. Domain parameters are never read here.

use ndarray::{concatenate, s, Array2, Axis};

use super::bundle::{EncoderBundle, EncoderConfig, PairBatch};
use super::context::EncoderNorm;
use super::pairs::{build_pairs, ContextPair};
use crate::dyncore::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::nn::loss::mse;
use crate::nn::rng::derive_seed;
use crate::nn::{cosine_lr, AdamConfig, OptimState, Rng};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncoderTrainingLog {
    /// Mean batch loss per epoch on the training split.
    pub train_loss: Vec<f64>,
    /// Total loss per epoch on the validation split.
    pub val_loss: Vec<f64>,
    /// Forward-head MSE per epoch on the validation split, in standardized
    /// increment units.
    pub val_forward_mse: Vec<f64>,
    pub train_episodes: Vec<Vec<usize>>,
    pub val_episodes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLosses {
    pub forward_mse: f64,
    pub inverse_mse: f64,
    pub total: f64,
}

const EVAL_CHUNK: usize = 4096;

/// Loss of `bundle` on a fixed pair set, evaluated without training.
pub fn evaluate_pairs(bundle: &EncoderBundle, ds: &Dataset, pairs: &[ContextPair]) -> Result<PairLosses> {
    let mut fwd_sum = 0.0;
    let mut inv_sum = 0.0;
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let batch = bundle.pair_batch(ds, chunk)?;
        let (fwd, inv) = bundle.predict(&batch)?;
        fwd_sum += mse(fwd.view(), batch.forward_target.view())?.0 * chunk.len() as f64;
        if let Some(inv) = inv {
            inv_sum += mse(inv.view(), batch.inverse_target.view())?.0 * chunk.len() as f64;
        }
    }
    let n = pairs.len().max(1) as f64;
    let forward_mse = fwd_sum / n;
    let inverse_mse = inv_sum / n;
    Ok(PairLosses {
        forward_mse,
        inverse_mse,
        total: bundle.beta_forward * forward_mse + bundle.beta_inverse * inverse_mse,
    })
}

struct Trainer {
    enc: OptimState,
    fwd: OptimState,
    inv: Option<OptimState>,
}

impl Trainer {
    fn set_lr(&mut self, lr: f64) {
        self.enc.config.lr = lr;
        self.fwd.config.lr = lr;
        if let Some(inv) = &mut self.inv {
            inv.config.lr = lr;
        }
    }
}

fn train_step(bundle: &mut EncoderBundle, opt: &mut Trainer, batch: &PairBatch) -> Result<f64> {
    let zd = bundle.z_dim();
    let z = bundle.encoder.forward_train(batch.context.view())?;

    let fwd_in = concatenate![Axis(1), batch.forward_in, z];
    let fwd = bundle.forward_head.forward_train(fwd_in.view())?;
    let (fwd_loss, fwd_grad) = mse(fwd.view(), batch.forward_target.view())?;
    let fwd_grads = bundle
        .forward_head
        .backward((fwd_grad * bundle.beta_forward).view())?;
    let fwd_cols = fwd_in.ncols();
    let mut dz: Array2<f64> = fwd_grads.input.slice(s![.., fwd_cols - zd..]).to_owned();
    let mut loss = bundle.beta_forward * fwd_loss;

    let mut inv_grads = None;
    if let Some(head) = bundle.inverse_head.as_mut() {
        let inv_in = concatenate![Axis(1), batch.inverse_in, z];
        let inv = head.forward_train(inv_in.view())?;
        let (inv_loss, inv_grad) = mse(inv.view(), batch.inverse_target.view())?;
        let g = head.backward((inv_grad * bundle.beta_inverse).view())?;
        dz += &g.input.slice(s![.., inv_in.ncols() - zd..]);
        loss += bundle.beta_inverse * inv_loss;
        inv_grads = Some(g);
    }
    if !loss.is_finite() {
        bundle.encoder.clear_cache();
        return Err(Error::Numerical(format!("encoder loss is {loss}")));
    }

    let enc_grads = bundle.encoder.backward(dz.view())?;
    opt.enc.step(&mut bundle.encoder, &enc_grads)?;
    opt.fwd.step(&mut bundle.forward_head, &fwd_grads)?;
    if let (Some(head), Some(state), Some(g)) = (bundle.inverse_head.as_mut(), opt.inv.as_mut(), inv_grads) {
        state.step(head, &g)?;
    }
    Ok(loss)
}

/// Trains an encoder bundle on `dataset` with the lag rule of `config`.
///
/// Episodes are split per domain into training and validation sets by
/// `config.train_ratio`. Infinite-lag pairings are re-drawn every epoch.
pub fn train_encoder(
    dataset: &Dataset,
    config: &EncoderConfig,
    seed: u64,
) -> Result<(EncoderBundle, EncoderTrainingLog)> {
    let (train_idx, val_idx) = dataset.split_indices(config.train_ratio, derive_seed(seed, 1));
    let train = dataset.select(&train_idx);
    let val = dataset.select(&val_idx);
    let episodes: Vec<&Trajectory> = train.iter().map(|(_, _, t)| t).collect();
    let norm = EncoderNorm::fit(&episodes, config.history);

    let mut init_rng = Rng::derive(seed, 2);
    let mut bundle = EncoderBundle::new(dataset.env, config, norm, &mut init_rng);
    let adam = AdamConfig::with_lr(config.lr);
    let mut opt = Trainer {
        enc: OptimState::new(&bundle.encoder, adam, "encoder"),
        fwd: OptimState::new(&bundle.forward_head, adam, "forward_head"),
        inv: bundle
            .inverse_head
            .as_ref()
            .map(|h| OptimState::new(h, adam, "inverse_head")),
    };

    let has_val = val.trajectory_count() > 0;
    let val_pairs = if has_val {
        build_pairs(&val, config.lag, config.history, derive_seed(seed, 3))?
    } else {
        Vec::new()
    };
    let mut log = EncoderTrainingLog {
        train_episodes: train_idx,
        val_episodes: val_idx,
        ..Default::default()
    };
    let batch_size = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        let mut pairs = build_pairs(&train, config.lag, config.history, derive_seed(seed, 100 + epoch as u64))?;
        Rng::derive(seed, 10_000 + epoch as u64).shuffle(&mut pairs);
        let mut sum = 0.0;
        let mut batches = 0usize;
        let per_epoch = pairs.len().div_ceil(batch_size);
        for (b, chunk) in pairs.chunks(batch_size).enumerate() {
            opt.set_lr(cosine_lr(config.lr, epoch * per_epoch + b, config.epochs * per_epoch));
            let batch = bundle.pair_batch(&train, chunk)?;
            let loss = train_step(&mut bundle, &mut opt, &batch)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {b}: {e}")))?;
            sum += loss;
            batches += 1;
        }
        log.train_loss.push(sum / batches.max(1) as f64);
        if has_val {
            let l = evaluate_pairs(&bundle, &val, &val_pairs)?;
            log.val_loss.push(l.total);
            log.val_forward_mse.push(l.forward_mse);
        }
        log::debug!(
            "encoder epoch {epoch}: train {:.6} val {:?}",
            log.train_loss[epoch],
            log.val_loss.last()
        );
    }
    Ok((bundle, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyncore::{generate_dataset, grid_domains, EnvId, Lag};

    #[test]
    fn loss_decreases_on_push() {
        let ds = generate_dataset(EnvId::Push1D, &grid_domains(EnvId::Push1D, 2), 6, 32, 3).unwrap();
        let cfg = EncoderConfig {
            lag: Lag::Steps(1),
            hidden: vec![16],
            head_hidden: vec![16],
            epochs: 10,
            ..Default::default()
        };
        let (_, log) = train_encoder(&ds, &cfg, 1).unwrap();
        assert_eq!(log.train_loss.len(), 10);
        assert!(log.train_loss[9] < log.train_loss[0], "{:?}", log.train_loss);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = generate_dataset(EnvId::BallDrop, &grid_domains(EnvId::BallDrop, 3), 10, 24, 3).unwrap();
        let cfg = EncoderConfig {
            hidden: vec![8],
            head_hidden: vec![8],
            epochs: 2,
            ..Default::default()
        };
        let (a, la) = train_encoder(&ds, &cfg, 5).unwrap();
        let (b, lb) = train_encoder(&ds, &cfg, 5).unwrap();
        assert!(a.encoder.params().zip(b.encoder.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(la, lb);
    }
}
