use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::schedule::{time_embedding, NoiseSchedule, TIME_EMBED_DIM};
use super::window::{broadcast_z, ddim_step, WindowSpec};
use crate::encoder::bundle::meta_field;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mlp, Rng};
use crate::standardize::Standardizer;

/// Ablation variants of the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Plain diffusion: no bias, no representation input.
    Null,
    /// Representation concatenated to the denoiser input, no bias.
    Cond,
    /// Biased prior, but the network predicts only the noise part.
    MixedNoPredict,
    /// Biased prior with the composite target.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Null, Variant::Cond, Variant::MixedNoPredict, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Null => "Null",
            Variant::Cond => "Cond",
            Variant::MixedNoPredict => "MixedNoPredict",
            Variant::Full => "Full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn uses_bias(self) -> bool {
        matches!(self, Variant::MixedNoPredict | Variant::Full)
    }

    pub fn takes_z(self) -> bool {
        self == Variant::Cond
    }
}

/// Default sampler bound on standardized clean values.
pub const DEFAULT_CLIP_X0: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub steps: usize,
    pub history: usize,
    pub future: usize,
    /// Bound on the clean-window estimate during sampling, in standardized
    /// units; `None` samples without clipping.
    pub clip_x0: Option<f64>,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    /// Peak learning rate; decays on a half cosine to `lr * LR_FLOOR`.
    pub lr: f64,
    /// Decay of the weight average kept as the final denoiser; 0 keeps the
    /// raw weights.
    pub ema_decay: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            lambda: 0.1,
            steps: 5,
            history: crate::HISTORY_LEN,
            future: crate::FUTURE_LEN,
            clip_x0: Some(DEFAULT_CLIP_X0),
            hidden: vec![128, 128],
            iterations: 20_000,
            batch_size: 64,
            lr: 1e-3,
            ema_decay: 0.999,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("guidance scale must be >= 0, got {}", self.lambda)));
        }
        if self.steps == 0 {
            return Err(Error::Config("inference steps must be >= 1".into()));
        }
        if matches!(self.clip_x0, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip bound must be positive".into()));
        }
        if self.future == 0 {
            return Err(Error::Config("future length must be >= 1".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}

/// A trained denoiser with everything needed to turn a history into an
/// action.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub spec: WindowSpec,
    pub variant: Variant,
    /// Guidance scale as configured; see [`DiffusionPolicy::effective_lambda`].
    pub lambda: f64,
    pub steps: usize,
    pub clip_x0: Option<f64>,
    pub z_dim: usize,
    pub denoiser: Mlp,
    pub obs_norm: Standardizer,
    pub action_norm: Standardizer,
    /// Digest of the frozen encoder checkpoint the policy was trained with.
    pub encoder_hash: String,
    pub schedule: NoiseSchedule,
}

impl DiffusionPolicy {
    pub fn new(
        spec: WindowSpec,
        config: &PolicyConfig,
        z_dim: usize,
        obs_norm: Standardizer,
        action_norm: Standardizer,
        encoder_hash: String,
        rng: &mut Rng,
    ) -> Self {
        let z_in = if config.variant.takes_z() { z_dim } else { 0 };
        let mut dims = vec![spec.len() + TIME_EMBED_DIM + z_in];
        dims.extend_from_slice(&config.hidden);
        dims.push(spec.len());
        Self {
            spec,
            variant: config.variant,
            lambda: config.lambda,
            steps: config.steps,
            clip_x0: config.clip_x0,
            z_dim,
            denoiser: Mlp::new(&dims, rng),
            obs_norm,
            action_norm,
            encoder_hash,
            schedule: NoiseSchedule::default(),
        }
    }

    /// Guidance scale actually applied: zero for variants without bias.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant.uses_bias() {
            self.lambda
        } else {
            0.0
        }
    }

    /// Same network sampled with another guidance scale.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn mask(&self) -> Vec<f64> {
        self.spec.mask()
    }

    pub(crate) fn input_width(&self) -> usize {
        self.denoiser.input_dim()
    }

    /// Writes the denoiser input for one window into `out`.
    pub(crate) fn fill_input(&self, x: &[f64], k: f64, z: &[f64], out: &mut [f64]) {
        let l = self.spec.len();
        out[..l].copy_from_slice(x);
        out[l..l + TIME_EMBED_DIM].copy_from_slice(&time_embedding(k));
        if self.variant.takes_z() {
            out[l + TIME_EMBED_DIM..].copy_from_slice(z);
        }
    }

    /// Composite noise estimate used by the sampler at level `k`. `bz` is
    /// the masked broadcast of `z`.
    pub fn estimate(&self, x: &[f64], k: f64, z: &[f64], bz: &[f64]) -> Result<Vec<f64>> {
        let mut input = vec![0.0; self.input_width()];
        self.fill_input(x, k, z, &mut input);
        let mut out = self.denoiser.forward_one(&input)?;
        if self.variant == Variant::MixedNoPredict {
            let shift = (1.0 - self.schedule.alpha(k)) * self.lambda;
            for (o, b) in out.iter_mut().zip(bz) {
                *o += shift * b;
            }
        }
        Ok(out)
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.z_dim {
            return Err(Error::dims("representation", self.z_dim, z.len()));
        }
        Ok(())
    }

    /// Runs the sampler from the biased prior and returns the clean window.
    ///
    /// `known` supplies the masked entries (standardized history and current
    /// observation); its free entries are ignored. `eps` is the initial
    /// noise, one value per window entry.
    pub fn sample_window(&self, known: &[f64], z: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        let l = self.spec.len();
        if known.len() != l || eps.len() != l {
            return Err(Error::dims("sampler window", l, known.len().min(eps.len())));
        }
        self.check_z(z)?;
        let mask = self.mask();
        let lambda = self.effective_lambda();
        let bz = broadcast_z(z, self.spec.rows(), &mask)?;
        let mut x: Vec<f64> = (0..l)
            .map(|i| if mask[i] == 1.0 { known[i] } else { lambda * bz[i] + eps[i] })
            .collect();
        let grid = NoiseSchedule::sampling_grid(self.steps);
        for w in grid.windows(2) {
            let mut eps_hat = self.estimate(&x, w[0], z, &bz)?;
            if let Some(c) = self.clip_x0 {
                clip_estimate(&mut eps_hat, &x, &mask, self.schedule.alpha(w[0]), c);
            }
            x = ddim_step(&self.schedule, &x, &eps_hat, &mask, w[0], w[1]);
        }
        Ok(x)
    }

    /// Raw-unit action of the current row of a clean window.
    pub fn action_from_window(&self, x0: &[f64]) -> Vec<f64> {
        self.action_norm.invert(&x0[self.spec.current_action()])
    }

    /// Standardized `(obs, action)` row as stored in a window.
    pub fn encode_row(&self, obs: &[f64], action: &[f64], out: &mut [f64]) {
        let od = self.spec.obs_dim;
        self.obs_norm.apply_into(obs, &mut out[..od]);
        self.action_norm.apply_into(action, &mut out[od..]);
    }

    pub fn to_checkpoint(&self, mut metadata: Value) -> Checkpoint {
        metadata["variant"] = json!(self.variant);
        metadata["lambda"] = json!(self.lambda);
        metadata["steps"] = json!(self.steps);
        metadata["clip_x0"] = json!(self.clip_x0);
        metadata["spec"] = json!(self.spec);
        metadata["z_dim"] = json!(self.z_dim);
        metadata["obs_norm"] = json!(self.obs_norm);
        metadata["action_norm"] = json!(self.action_norm);
        metadata["encoder_hash"] = json!(self.encoder_hash);
        metadata["schedule_floor"] = json!(self.schedule.floor);
        Checkpoint::new("policy", metadata).with_net("denoiser", &self.denoiser)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.module != "policy" {
            return Err(Error::format("checkpoint", format!("expected policy, found {}", ck.module)));
        }
        let m = &ck.metadata;
        let policy = Self {
            spec: meta_field(m, "spec")?,
            variant: meta_field(m, "variant")?,
            lambda: meta_field(m, "lambda")?,
            steps: meta_field(m, "steps")?,
            clip_x0: meta_field(m, "clip_x0")?,
            z_dim: meta_field(m, "z_dim")?,
            denoiser: ck.net("denoiser")?.clone(),
            obs_norm: meta_field(m, "obs_norm")?,
            action_norm: meta_field(m, "action_norm")?,
            encoder_hash: meta_field(m, "encoder_hash")?,
            schedule: NoiseSchedule {
                floor: meta_field(m, "schedule_floor")?,
            },
        };
        let z_in = if policy.variant.takes_z() { policy.z_dim } else { 0 };
        let expected = policy.spec.len() + TIME_EMBED_DIM + z_in;
        if policy.denoiser.input_dim() != expected || policy.denoiser.output_dim() != policy.spec.len() {
            return Err(Error::dims("denoiser checkpoint", expected, policy.denoiser.input_dim()));
        }
        Ok(policy)
    }
}

/// Rewrites `eps_hat` so that the implied clean value `(x - eps_hat) / alpha`
/// lies in `[-bound, bound]` on free entries.
pub fn clip_estimate(eps_hat: &mut [f64], x: &[f64], mask: &[f64], alpha: f64, bound: f64) {
    for i in 0..eps_hat.len() {
        if mask[i] == 1.0 {
            continue;
        }
        let x0 = (x[i] - eps_hat[i]) / alpha;
        if x0.abs() > bound {
            eps_hat[i] = x[i] - alpha * x0.clamp(-bound, bound);
        }
    }
}

/// Batch of denoiser inputs for windows `x` at levels `k`.
pub(crate) fn input_batch(policy: &DiffusionPolicy, x: &Array2<f64>, k: &[f64], z: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), policy.input_width()));
    for i in 0..x.nrows() {
        let mut row = out.row_mut(i);
        policy.fill_input(
            x.row(i).as_slice().expect("row"),
            k[i],
            z.row(i).as_slice().expect("row"),
            row.as_slice_mut().expect("row"),
        );
    }
    out
}
