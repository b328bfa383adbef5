//! Experiment configuration file.
//!
//! A TOML document with a master `seed`, an `output_dir` and four blocks:
//!
//! ```toml
//! seed = 0
//! output_dir = "runs/push1d"
//!
//! [env]
//! env = "Push1D"
//! grid_per_axis = 3
//! episodes_per_domain = 20
//! episode_len = 64
//!
//! [encoder]
//! lag = "inf"
//!
//! [policy]
//! variants = ["Null", "Cond", "MixedNoPredict", "Full"]
//!
//! [eval]
//! seeds = 5
//! ```
//!
//! Omitted keys take their defaults; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyncore::dataset::{check_sub_bounds, MIN_EPISODE_LEN};
use crate::dyncore::{grid_domains_within, off_grid_domains_within, DomainSpec, EnvId, Lag};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::mixdiff::{PolicyConfig, Variant};
use crate::nn::rng::derive_seed;
use crate::rollout::{ContextMode, EvalConfig, MASTERY_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvBlock {
    pub env: EnvId,
    pub grid_per_axis: usize,
    /// Sub-box of the physical parameter range; the full range when absent.
    pub bounds: Option<Vec<[f64; 2]>>,
    pub episodes_per_domain: usize,
    pub episode_len: usize,
    /// Held-out domains sampled off the training grid.
    pub ood_domains: usize,
}

impl Default for EnvBlock {
    fn default() -> Self {
        Self {
            env: EnvId::Push1D,
            grid_per_axis: 3,
            bounds: None,
            episodes_per_domain: 20,
            episode_len: 64,
            ood_domains: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderBlock {
    pub lag: Lag,
    pub history: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_ratio: f64,
    pub beta_forward: f64,
    pub beta_inverse: f64,
    /// Lags compared by `probe`.
    pub probe_lags: Vec<Lag>,
    /// Step between consecutive probed context windows.
    pub probe_stride: usize,
}

impl Default for EncoderBlock {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            lag: e.lag,
            history: e.history,
            hidden: e.hidden,
            head_hidden: e.head_hidden,
            epochs: e.epochs,
            batch_size: e.batch_size,
            lr: 1e-3,
            train_ratio: e.train_ratio,
            beta_forward: e.beta_forward,
            beta_inverse: e.beta_inverse,
            probe_lags: vec![Lag::Steps(1), Lag::Steps(4), Lag::Steps(16), Lag::Steps(32), Lag::Infinite],
            probe_stride: 4,
        }
    }
}

impl EncoderBlock {
    pub fn encoder_config(&self, lag: Lag) -> EncoderConfig {
        EncoderConfig {
            lag,
            history: self.history,
            hidden: self.hidden.clone(),
            head_hidden: self.head_hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            train_ratio: self.train_ratio,
            beta_forward: self.beta_forward,
            beta_inverse: self.beta_inverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyBlock {
    /// Variants trained and evaluated side by side.
    pub variants: Vec<Variant>,
    pub lambda: f64,
    pub steps: usize,
    pub history: usize,
    pub future: usize,
    pub clip_x0: Option<f64>,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_decay: f64,
}

impl Default for PolicyBlock {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            variants: Variant::ALL.to_vec(),
            lambda: p.lambda,
            steps: p.steps,
            history: p.history,
            future: p.future,
            clip_x0: p.clip_x0,
            hidden: p.hidden,
            iterations: p.iterations,
            batch_size: p.batch_size,
            lr: p.lr,
            ema_decay: p.ema_decay,
        }
    }
}

impl PolicyBlock {
    pub fn policy_config(&self, variant: Variant) -> PolicyConfig {
        PolicyConfig {
            variant,
            lambda: self.lambda,
            steps: self.steps,
            history: self.history,
            future: self.future,
            clip_x0: self.clip_x0,
            hidden: self.hidden.clone(),
            iterations: self.iterations,
            batch_size: self.batch_size,
            lr: self.lr,
            ema_decay: self.ema_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub episodes_per_domain: usize,
    pub episode_len: usize,
    /// Independent training seeds per model.
    pub seeds: usize,
    pub modes: Vec<ContextMode>,
    pub mastery_threshold: f64,
    /// Guidance scales of `sweep`.
    pub lambdas: Vec<f64>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            episodes_per_domain: e.episodes_per_domain,
            episode_len: e.episode_len,
            seeds: 5,
            modes: vec![ContextMode::ColdStart],
            mastery_threshold: MASTERY_THRESHOLD,
            lambdas: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub env: EnvBlock,
    #[serde(default)]
    pub encoder: EncoderBlock,
    #[serde(default)]
    pub policy: PolicyBlock,
    #[serde(default)]
    pub eval: EvalBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            env: EnvBlock::default(),
            encoder: EncoderBlock::default(),
            policy: PolicyBlock::default(),
            eval: EvalBlock::default(),
        }
    }
}

/// 1-based line of `key` inside `[block]` (or the top level), for
/// diagnostics.
fn line_of(text: &str, block: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let k = line.split('=').next().unwrap_or("").trim();
        if k == key && current.as_deref() == block {
            return Some(i + 1);
        }
    }
    None
}

/// A validation failure tied to one key.
struct Violation {
    block: Option<&'static str>,
    key: &'static str,
    message: String,
}

fn violation(block: Option<&'static str>, key: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        block,
        key,
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if let Err(v) = cfg.check() {
            let place = match (line_of(text, v.block, v.key), v.block) {
                (Some(l), _) => format!("line {l}: "),
                (None, Some(b)) => format!("[{b}] "),
                (None, None) => String::new(),
            };
            return Err(Error::Config(format!("{place}{}: {}", v.key, v.message)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|v| Error::Config(format!("{}{}: {}", v.block.map(|b| format!("[{b}] ")).unwrap_or_default(), v.key, v.message)))
    }

    fn check(&self) -> std::result::Result<(), Violation> {
        let env = Some("env");
        let e = &self.env;
        if e.grid_per_axis == 0 {
            return Err(violation(env, "grid_per_axis", "must be >= 1"));
        }
        check_sub_bounds(self.env.env, &self.bounds()).map_err(|err| violation(env, "bounds", err.to_string()))?;
        if e.episodes_per_domain < 2 {
            return Err(violation(env, "episodes_per_domain", "at least 2 episodes per domain are required"));
        }
        if e.episode_len < MIN_EPISODE_LEN {
            return Err(violation(env, "episode_len", format!("must be >= {MIN_EPISODE_LEN}")));
        }
        let domains = e.grid_per_axis.pow(self.env.env.param_dim() as u32);
        if domains < 2 {
            return Err(violation(env, "grid_per_axis", "at least 2 training domains are required"));
        }

        let enc = Some("encoder");
        let b = &self.encoder;
        let needed = |lag: Lag| match lag {
            Lag::Steps(d) => b.history + d + 1,
            Lag::Infinite => b.history + 1,
        };
        for lag in std::iter::once(b.lag).chain(b.probe_lags.iter().copied()) {
            if e.episode_len < needed(lag) {
                let key = if lag == b.lag { "lag" } else { "probe_lags" };
                return Err(violation(
                    enc,
                    key,
                    format!("lag {} needs episodes of at least {} steps", lag.label(), needed(lag)),
                ));
            }
        }
        if b.history == 0 {
            return Err(violation(enc, "history", "must be >= 1"));
        }
        if b.batch_size == 0 || !(b.lr > 0.0 && b.lr.is_finite()) {
            return Err(violation(enc, "lr", "batch size and learning rate must be positive"));
        }
        if !(b.train_ratio > 0.0 && b.train_ratio < 1.0) {
            return Err(violation(enc, "train_ratio", "must lie in (0, 1)"));
        }
        if !(b.beta_forward >= 0.0 && b.beta_inverse >= 0.0) {
            return Err(violation(enc, "beta_forward", "loss weights must be >= 0"));
        }
        let uses_infinite = b.lag == Lag::Infinite || b.probe_lags.contains(&Lag::Infinite);
        if uses_infinite {
            let n = e.episodes_per_domain;
            let n_train = ((n as f64 * b.train_ratio).round() as usize).clamp(1, n);
            let n_val = n - n_train;
            if n_train < 2 || n_val == 1 {
                return Err(violation(
                    enc,
                    "train_ratio",
                    format!(
                        "splits {n} episodes per domain into {n_train} + {n_val}; the infinite lag needs at least 2 on each side"
                    ),
                ));
            }
        }
        if b.probe_stride == 0 {
            return Err(violation(enc, "probe_stride", "must be >= 1"));
        }

        let pol = Some("policy");
        let p = &self.policy;
        if p.variants.is_empty() {
            return Err(violation(pol, "variants", "list at least one variant"));
        }
        for (i, v) in p.variants.iter().enumerate() {
            if p.variants[..i].contains(v) {
                return Err(violation(pol, "variants", format!("{} listed twice", v.name())));
            }
        }
        self.policy
            .policy_config(Variant::Full)
            .validate()
            .map_err(|err| violation(pol, "lambda", err.to_string()))?;
        if p.history != b.history {
            return Err(violation(pol, "history", format!("must equal the encoder history {}", b.history)));
        }
        if p.history + p.future > e.episode_len {
            return Err(violation(pol, "future", "window longer than the episodes"));
        }

        let ev = Some("eval");
        let x = &self.eval;
        if x.seeds == 0 {
            return Err(violation(ev, "seeds", "must be >= 1"));
        }
        if x.episodes_per_domain == 0 {
            return Err(violation(ev, "episodes_per_domain", "must be >= 1"));
        }
        if x.episode_len < b.history {
            return Err(violation(ev, "episode_len", format!("must be >= the history {}", b.history)));
        }
        if x.modes.is_empty() {
            return Err(violation(ev, "modes", "list at least one context source"));
        }
        if !(x.mastery_threshold.is_finite()) {
            return Err(violation(ev, "mastery_threshold", "must be finite"));
        }
        if x.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(violation(ev, "lambdas", "guidance scales must be >= 0"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match &self.env.bounds {
            Some(b) => b.iter().map(|&[lo, hi]| (lo, hi)).collect(),
            None => self.env.env.bounds(),
        }
    }

    pub fn iid_domains(&self) -> Result<Vec<DomainSpec>> {
        grid_domains_within(self.env.env, &self.bounds(), self.env.grid_per_axis)
    }

    pub fn ood_domains(&self) -> Result<Vec<DomainSpec>> {
        let grid = self.iid_domains()?;
        off_grid_domains_within(self.env.env, &self.bounds(), &grid, self.env.ood_domains, derive_seed(self.seed, 7))
    }

    /// Training seed of model replicate `i`.
    pub fn replicate_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, 1000 + i as u64)
    }

    pub fn eval_config(&self, mode: ContextMode) -> EvalConfig {
        EvalConfig {
            episodes_per_domain: self.eval.episodes_per_domain,
            episode_len: self.eval.episode_len,
            seed: derive_seed(self.seed, 8),
            mode,
            mastery_threshold: self.eval.mastery_threshold,
        }
    }

    /// Hex SHA-256 of the canonical JSON form, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "output_dir = \"out\"\n";

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.env.env, EnvId::Push1D);
        assert_eq!(cfg.iid_domains().unwrap().len(), 9);
        assert_eq!(cfg.ood_domains().unwrap().len(), 5);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = ExperimentConfig::from_toml("output_dir = \"o\"\n[policy]\nlamda = 0.2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lamda") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bounds_violation_points_at_line() {
        let text = "output_dir = \"o\"\n[env]\nenv = \"Push1D\"\nbounds = [[0.1, 2.0], [0.0, 1.0]]\n";
        let msg = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(msg.contains("line 4") && msg.contains("mass"), "{msg}");
    }

    #[test]
    fn lag_strings() {
        let cfg = ExperimentConfig::from_toml("output_dir = \"o\"\n[encoder]\nlag = \"32\"\nprobe_lags = [\"1\", \"inf\"]\n").unwrap();
        assert_eq!(cfg.encoder.lag, Lag::Steps(32));
        assert_eq!(cfg.encoder.probe_lags, vec![Lag::Steps(1), Lag::Infinite]);
        assert!(ExperimentConfig::from_toml("output_dir = \"o\"\n[encoder]\nlag = \"0\"\n").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn inconsistent_history_rejected() {
        let text = "output_dir = \"o\"\n[policy]\nhistory = 8\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }
}
