use serde::{Deserialize, Serialize};

use crate::dyncore::Trajectory;
use crate::standardize::Standardizer;

/// Where a context was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextOrigin {
    pub domain: usize,
    pub episode: usize,
    pub end_step: usize,
}

/// `history` consecutive (observation, action) rows in raw units. Rows
/// flagged invalid are padding and encode as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub valid: Vec<bool>,
    pub origin: Option<ContextOrigin>,
}

impl ContextWindow {
    pub fn padding(history: usize, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            observations: vec![0.0; history * obs_dim],
            actions: vec![0.0; history * action_dim],
            valid: vec![false; history],
            origin: None,
        }
    }

    /// The `history` rows of `traj` ending at `end` (inclusive). Rows before
    /// the episode start are padding.
    pub fn from_trajectory(traj: &Trajectory, end: usize, history: usize) -> Self {
        let mut w = Self::padding(history, traj.obs_dim, traj.action_dim);
        for k in 0..history {
            let Some(step) = (end + k + 1).checked_sub(history) else {
                continue;
            };
            w.set_row(k, traj.obs(step), traj.action(step));
        }
        w
    }

    pub fn with_origin(mut self, domain: usize, episode: usize, end_step: usize) -> Self {
        self.origin = Some(ContextOrigin {
            domain,
            episode,
            end_step,
        });
        self
    }

    pub fn history(&self) -> usize {
        self.valid.len()
    }

    pub fn set_row(&mut self, k: usize, obs: &[f64], action: &[f64]) {
        self.observations[k * self.obs_dim..(k + 1) * self.obs_dim].copy_from_slice(obs);
        self.actions[k * self.action_dim..(k + 1) * self.action_dim].copy_from_slice(action);
        self.valid[k] = true;
    }

    pub fn obs(&self, k: usize) -> &[f64] {
        &self.observations[k * self.obs_dim..(k + 1) * self.obs_dim]
    }

    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.action_dim..(k + 1) * self.action_dim]
    }

    /// Same rows in reverse time order.
    pub fn reversed(&self) -> Self {
        let h = self.history();
        let mut out = Self::padding(h, self.obs_dim, self.action_dim);
        for k in 0..h {
            if self.valid[k] {
                out.set_row(h - 1 - k, self.obs(k), self.action(k));
            }
        }
        out
    }
}

/// Standardization statistics shared by the encoder and its heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderNorm {
    /// Context observations relative to the context's last valid observation.
    pub context_obs: Standardizer,
    pub obs: Standardizer,
    pub action: Standardizer,
    /// One-step observation increments.
    pub delta: Standardizer,
}

impl EncoderNorm {
    pub fn fit(episodes: &[&Trajectory], history: usize) -> Self {
        let obs_dim = episodes.first().map_or(1, |t| t.obs_dim);
        let action_dim = episodes.first().map_or(0, |t| t.action_dim);
        let obs = Standardizer::fit(obs_dim, episodes.iter().flat_map(|t| (0..t.len()).map(|i| t.obs(i))));
        let action = Standardizer::fit(
            action_dim,
            episodes.iter().flat_map(|t| (0..t.len()).map(|i| t.action(i))),
        );
        let deltas: Vec<Vec<f64>> = episodes
            .iter()
            .flat_map(|t| {
                (0..t.len().saturating_sub(1)).map(move |i| {
                    t.obs(i + 1).iter().zip(t.obs(i)).map(|(a, b)| a - b).collect()
                })
            })
            .collect();
        let delta = Standardizer::fit(obs_dim, deltas.iter().map(Vec::as_slice));
        let relative: Vec<Vec<f64>> = episodes
            .iter()
            .flat_map(|t| {
                (history.saturating_sub(1)..t.len()).flat_map(move |end| {
                    let last = t.obs(end);
                    (end + 1 - history..=end).map(move |i| {
                        t.obs(i).iter().zip(last).map(|(a, b)| a - b).collect::<Vec<f64>>()
                    })
                })
            })
            .collect();
        let context_obs = Standardizer::fit(obs_dim, relative.iter().map(Vec::as_slice));
        Self {
            context_obs,
            obs,
            action,
            delta,
        }
    }

    /// Flattened encoder input: per row, observation relative to the last
    /// valid row then the action, both standardized; padding rows are zero.
    pub fn context_features(&self, ctx: &ContextWindow, out: &mut [f64]) {
        let (od, ad) = (ctx.obs_dim, ctx.action_dim);
        let width = od + ad;
        out.fill(0.0);
        let Some(last) = (0..ctx.history()).rev().find(|&k| ctx.valid[k]) else {
            return;
        };
        let anchor = ctx.obs(last);
        let mut rel = vec![0.0; od];
        for k in 0..ctx.history() {
            if !ctx.valid[k] {
                continue;
            }
            for (j, r) in rel.iter_mut().enumerate() {
                *r = ctx.obs(k)[j] - anchor[j];
            }
            let row = &mut out[k * width..(k + 1) * width];
            self.context_obs.apply_into(&rel, &mut row[..od]);
            self.action.apply_into(ctx.action(k), &mut row[od..]);
        }
    }
}
