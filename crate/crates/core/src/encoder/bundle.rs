use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::context::{ContextWindow, EncoderNorm};
use super::pairs::ContextPair;
use crate::dyncore::{Dataset, EnvId, Lag};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mlp, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub lag: Lag,
    pub history: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; decays on a half cosine over all batches.
    pub lr: f64,
    pub train_ratio: f64,
    pub beta_forward: f64,
    pub beta_inverse: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            lag: Lag::Infinite,
            history: crate::HISTORY_LEN,
            hidden: vec![64, 64],
            head_hidden: vec![64, 64],
            epochs: 10,
            batch_size: 128,
            lr: 3e-4,
            train_ratio: 0.8,
            beta_forward: 1.0,
            beta_inverse: 1.0,
        }
    }
}

/// Context encoder with its forward and inverse dynamics heads.
///
/// * encoder: standardized context -> z, `dim(z) = dim(obs) + dim(action)`
/// * forward head: `(s_t, a_t, z)` -> standardized increment `s_{t+1} - s_t`
/// * inverse head: `(s_t, s_{t+1} - s_t, z)` -> standardized `a_t`; absent
///   for action-free systems
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBundle {
    pub env: EnvId,
    pub history: usize,
    pub lag: Lag,
    pub encoder: Mlp,
    pub forward_head: Mlp,
    pub inverse_head: Option<Mlp>,
    pub norm: EncoderNorm,
    pub beta_forward: f64,
    pub beta_inverse: f64,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Inputs and targets of a batch of pairs, all standardized.
pub(crate) struct PairBatch {
    pub context: Array2<f64>,
    pub forward_in: Array2<f64>,
    pub forward_target: Array2<f64>,
    pub inverse_in: Array2<f64>,
    pub inverse_target: Array2<f64>,
}

impl EncoderBundle {
    pub fn new(env: EnvId, config: &EncoderConfig, norm: EncoderNorm, rng: &mut Rng) -> Self {
        let (od, ad) = (env.obs_dim(), env.action_dim());
        let zd = od + ad;
        let encoder = Mlp::new(&dims(config.history * (od + ad), &config.hidden, zd), rng);
        let forward_head = Mlp::new(&dims(od + ad + zd, &config.head_hidden, od), rng);
        let inverse_head = (ad > 0).then(|| Mlp::new(&dims(2 * od + zd, &config.head_hidden, ad), rng));
        Self {
            env,
            history: config.history,
            lag: config.lag,
            encoder,
            forward_head,
            inverse_head,
            norm,
            beta_forward: config.beta_forward,
            beta_inverse: config.beta_inverse,
        }
    }

    pub fn z_dim(&self) -> usize {
        self.env.obs_dim() + self.env.action_dim()
    }

    pub fn context_dim(&self) -> usize {
        self.history * (self.env.obs_dim() + self.env.action_dim())
    }

    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        let mut nets = vec![("encoder", &self.encoder), ("forward_head", &self.forward_head)];
        if let Some(inv) = &self.inverse_head {
            nets.push(("inverse_head", inv));
        }
        nets
    }

    fn check_context(&self, ctx: &ContextWindow) -> Result<()> {
        if ctx.history() != self.history {
            return Err(Error::dims("context history", self.history, ctx.history()));
        }
        if ctx.obs_dim != self.env.obs_dim() || ctx.action_dim != self.env.action_dim() {
            return Err(Error::dims(
                "context row width",
                self.env.obs_dim() + self.env.action_dim(),
                ctx.obs_dim + ctx.action_dim,
            ));
        }
        Ok(())
    }

    pub(crate) fn context_matrix(&self, contexts: &[&ContextWindow]) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((contexts.len(), self.context_dim()));
        for (i, ctx) in contexts.iter().enumerate() {
            self.check_context(ctx)?;
            let mut row = m.row_mut(i);
            self.norm
                .context_features(ctx, row.as_slice_mut().expect("standard layout"));
        }
        Ok(m)
    }

    pub fn encode(&self, ctx: &ContextWindow) -> Result<Vec<f64>> {
        let x = self.context_matrix(&[ctx])?;
        Ok(self.encoder.forward(x.view())?.into_raw_vec_and_offset().0)
    }

    pub fn encode_batch(&self, contexts: &[ContextWindow]) -> Result<Array2<f64>> {
        let refs: Vec<&ContextWindow> = contexts.iter().collect();
        self.encoder.forward(self.context_matrix(&refs)?.view())
    }

    pub(crate) fn pair_batch(&self, ds: &Dataset, pairs: &[ContextPair]) -> Result<PairBatch> {
        let (od, ad) = (self.env.obs_dim(), self.env.action_dim());
        let n = pairs.len();
        let contexts: Vec<ContextWindow> = pairs
            .iter()
            .map(|p| {
                ContextWindow::from_trajectory(
                    &ds.episodes[p.domain][p.context_episode],
                    p.context_end,
                    self.history,
                )
            })
            .collect();
        let refs: Vec<&ContextWindow> = contexts.iter().collect();
        let context = self.context_matrix(&refs)?;
        let mut forward_in = Array2::zeros((n, od + ad));
        let mut forward_target = Array2::zeros((n, od));
        let mut inverse_in = Array2::zeros((n, 2 * od));
        let mut inverse_target = Array2::zeros((n, ad));
        let mut delta = vec![0.0; od];
        for (i, p) in pairs.iter().enumerate() {
            let traj = &ds.episodes[p.domain][p.target_episode];
            let (s, a, s_next) = (traj.obs(p.t), traj.action(p.t), traj.obs(p.t + 1));
            for k in 0..od {
                delta[k] = s_next[k] - s[k];
            }
            let s_std = self.norm.obs.apply(s);
            let a_std = self.norm.action.apply(a);
            let d_std = self.norm.delta.apply(&delta);
            for k in 0..od {
                forward_in[[i, k]] = s_std[k];
                inverse_in[[i, k]] = s_std[k];
                inverse_in[[i, od + k]] = d_std[k];
                forward_target[[i, k]] = d_std[k];
            }
            for k in 0..ad {
                forward_in[[i, od + k]] = a_std[k];
                inverse_target[[i, k]] = a_std[k];
            }
        }
        Ok(PairBatch {
            context,
            forward_in,
            forward_target,
            inverse_in,
            inverse_target,
        })
    }

    /// Standardized forward and inverse predictions for a batch.
    pub(crate) fn predict(&self, batch: &PairBatch) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let z = self.encoder.forward(batch.context.view())?;
        let fwd = self
            .forward_head
            .forward(ndarray::concatenate![ndarray::Axis(1), batch.forward_in, z].view())?;
        let inv = match &self.inverse_head {
            Some(head) => Some(head.forward(ndarray::concatenate![ndarray::Axis(1), batch.inverse_in, z].view())?),
            None => None,
        };
        Ok((fwd, inv))
    }

    /// Forward-head prediction of the next raw observation.
    pub fn predict_next(&self, ctx: &ContextWindow, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let z = self.encode(ctx)?;
        let mut input = self.norm.obs.apply(obs);
        input.extend(self.norm.action.apply(action));
        input.extend(z);
        let d = self.forward_head.forward_one(&input)?;
        let delta = self.norm.delta.invert(&d);
        Ok(obs.iter().zip(delta).map(|(s, d)| s + d).collect())
    }

    pub fn to_checkpoint(&self, mut metadata: Value) -> Checkpoint {
        metadata["env"] = json!(self.env);
        metadata["history"] = json!(self.history);
        metadata["lag"] = json!(self.lag);
        metadata["norm"] = serde_json::to_value(&self.norm).expect("norm serializes");
        metadata["beta_forward"] = json!(self.beta_forward);
        metadata["beta_inverse"] = json!(self.beta_inverse);
        self.networks()
            .into_iter()
            .fold(Checkpoint::new("encoder", metadata), |ck, (name, net)| ck.with_net(name, net))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.module != "encoder" {
            return Err(Error::format("checkpoint", format!("expected encoder, found {}", ck.module)));
        }
        let meta = &ck.metadata;
        let env: EnvId = meta_field(meta, "env")?;
        let history: usize = meta_field(meta, "history")?;
        let lag: Lag = meta_field(meta, "lag")?;
        let norm: EncoderNorm = meta_field(meta, "norm")?;
        let beta_forward: f64 = meta_field(meta, "beta_forward")?;
        let beta_inverse: f64 = meta_field(meta, "beta_inverse")?;
        let inverse_head = if env.action_dim() > 0 {
            Some(ck.net("inverse_head")?.clone())
        } else {
            None
        };
        let bundle = Self {
            env,
            history,
            lag,
            encoder: ck.net("encoder")?.clone(),
            forward_head: ck.net("forward_head")?.clone(),
            inverse_head,
            norm,
            beta_forward,
            beta_inverse,
        };
        if bundle.encoder.input_dim() != bundle.context_dim() || bundle.encoder.output_dim() != bundle.z_dim() {
            return Err(Error::dims("encoder checkpoint", bundle.context_dim(), bundle.encoder.input_dim()));
        }
        Ok(bundle)
    }
}

/// Typed metadata entry of a checkpoint.
pub(crate) fn meta_field<T: serde::de::DeserializeOwned>(meta: &Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| Error::format("checkpoint", format!("metadata lacks {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::format("checkpoint", format!("{key}: {e}")))
}
