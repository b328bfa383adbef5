//! Single-episode rollouts with online context collection.

use crate::dyncore::env::{expert_action_push1d, push1d_reward, step_push1d, ExpertGains, PUSH_DT, PUSH_TARGET, PUSH_U_MAX};
use crate::dyncore::{DomainSpec, EnvId, EnvState, Trajectory};
use crate::encoder::{ContextWindow, EncoderBundle};
use crate::error::{Error, Result};
use crate::mixdiff::{online_context, DiffusionPolicy, Variant};
use crate::nn::Rng;

use super::source::ContextSource;

/// What an agent may look at when choosing the action of step `t`.
pub struct StepInput<'a> {
    pub t: usize,
    pub obs: &'a [f64],
    /// Full physical state; only privileged reference agents read it.
    pub state: EnvState,
    /// The completed steps before `t`, zero-padded at the start.
    pub history: &'a ContextWindow,
    /// Representation context chosen by the context source.
    pub context: &'a ContextWindow,
}

pub trait Agent: Sync {
    fn act(&self, input: &StepInput, rng: &mut Rng) -> Result<Vec<f64>>;
}

/// Privileged analytic controller of a Push1D domain.
pub struct ExpertAgent {
    pub mass: f64,
    pub damping: f64,
    pub gains: ExpertGains,
}

impl ExpertAgent {
    pub fn new(domain: &DomainSpec) -> Self {
        Self {
            mass: domain.params[0],
            damping: domain.params[1],
            gains: ExpertGains::default(),
        }
    }
}

impl Agent for ExpertAgent {
    fn act(&self, input: &StepInput, _rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(vec![expert_action_push1d(input.state, self.mass, self.damping, PUSH_TARGET, self.gains)])
    }
}

/// Uniform actions in `[-u_max, u_max]`.
pub struct RandomAgent {
    pub u_max: f64,
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self { u_max: PUSH_U_MAX }
    }
}

impl Agent for RandomAgent {
    fn act(&self, _input: &StepInput, rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(vec![rng.uniform_in(-self.u_max, self.u_max)])
    }
}

/// Diffusion policy with its frozen encoder.
pub struct PolicyAgent<'a> {
    pub policy: &'a DiffusionPolicy,
    pub encoder: &'a EncoderBundle,
}

impl PolicyAgent<'_> {
    /// Standardized window whose masked entries hold the history and the
    /// current observation.
    pub fn known_window(&self, input: &StepInput) -> Vec<f64> {
        let spec = self.policy.spec;
        let w = spec.width();
        let mut x = vec![0.0; spec.len()];
        for r in 0..spec.history {
            if input.history.valid[r] {
                self.policy
                    .encode_row(input.history.obs(r), input.history.action(r), &mut x[r * w..(r + 1) * w]);
            }
        }
        let cur = spec.history * w;
        self.policy
            .obs_norm
            .apply_into(input.obs, &mut x[cur..cur + spec.obs_dim]);
        x
    }
}

impl Agent for PolicyAgent<'_> {
    fn act(&self, input: &StepInput, rng: &mut Rng) -> Result<Vec<f64>> {
        let z = if self.policy.variant == Variant::Null {
            vec![0.0; self.policy.z_dim]
        } else {
            self.encoder.encode(input.context)?
        };
        let known = self.known_window(input);
        let eps = rng.normals(known.len());
        let x0 = self.policy.sample_window(&known, &z, &eps)?;
        Ok(self.policy.action_from_window(&x0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub trajectory: Trajectory,
}

/// Runs one Push1D episode of `len` steps from `init`.
///
/// At step `t` the agent sees the live history of steps `t - history..t`
/// and the context chosen by `source`; its action is clipped to the force
/// limit before the environment step. `seed` drives the agent's noise and
/// the context clip.
#[allow(clippy::too_many_arguments)]
pub fn rollout_episode(
    agent: &dyn Agent,
    domain_index: usize,
    domain: &DomainSpec,
    source: &ContextSource,
    history: usize,
    init: EnvState,
    len: usize,
    seed: u64,
) -> Result<Episode> {
    if domain.env != EnvId::Push1D {
        return Err(Error::InvalidDomain(format!("rollouts need a controllable system, got {}", domain.env.name())));
    }
    if history == 0 {
        return Err(Error::Config("history must be positive".into()));
    }
    let (mass, damping) = (domain.params[0], domain.params[1]);
    let mut rng = Rng::new(seed);
    let clip = source.draw_clip(history, &mut Rng::derive(seed, 1));
    let mut traj = Trajectory::new(domain_index, 1, 1);
    let mut state = init;
    for t in 0..len {
        let obs = state.observation();
        let live = online_context(&traj, t, history);
        let context = source.context(t, history, &live, clip.as_ref());
        let input = StepInput {
            t,
            obs: &obs,
            state,
            history: &live,
            context,
        };
        let action = agent.act(&input, &mut rng)?;
        let u = action
            .first()
            .copied()
            .ok_or_else(|| Error::dims("action", 1, 0))?;
        if !u.is_finite() {
            return Err(Error::NonFinite {
                tensor: format!("action at step {t}"),
            });
        }
        let u = u.clamp(-PUSH_U_MAX, PUSH_U_MAX);
        let next = step_push1d(state, u, mass, damping, PUSH_DT)?;
        traj.push(&obs, &[u], push1d_reward(next.position, u));
        state = next;
    }
    Ok(Episode {
        ret: traj.episode_return(),
        trajectory: traj,
    })
}
