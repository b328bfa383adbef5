//! The two parametric systems and their privileged experts.
//!
//! Both systems expose only position; velocity stays hidden so that short
//! contexts carry instantaneous information the current observation lacks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time step of the falling-ball system, seconds.
pub const BALLDROP_T0: f64 = 1.0;
/// Range of the initial height of a falling ball, metres. Wide enough that a
/// single height says nothing useful about elapsed time or speed.
pub const BALLDROP_Y0: (f64, f64) = (0.0, 1.0e5);
pub const BALLDROP_V0: (f64, f64) = (-1.0, 1.0);
pub const BALLDROP_G_BOUNDS: (f64, f64) = (-2.0, -0.5);

pub const PUSH_DT: f64 = 0.05;
pub const PUSH_TARGET: f64 = 1.0;
pub const PUSH_U_MAX: f64 = 3.0;
pub const PUSH_ACTION_COST: f64 = 0.01;
pub const PUSH_MASS_BOUNDS: (f64, f64) = (0.5, 2.5);
pub const PUSH_DAMPING_BOUNDS: (f64, f64) = (0.0, 2.0);
pub const PUSH_X0: (f64, f64) = (-0.5, 0.5);
pub const PUSH_V0: (f64, f64) = (-0.5, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    BallDrop,
    Push1D,
}

impl EnvId {
    pub fn code(self) -> u32 {
        match self {
            EnvId::BallDrop => 0,
            EnvId::Push1D => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(EnvId::BallDrop),
            1 => Ok(EnvId::Push1D),
            other => Err(Error::format("dataset", format!("unknown env id {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::BallDrop => "BallDrop",
            EnvId::Push1D => "Push1D",
        }
    }

    pub fn obs_dim(self) -> usize {
        1
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvId::BallDrop => 0,
            EnvId::Push1D => 1,
        }
    }

    pub fn param_dim(self) -> usize {
        self.bounds().len()
    }

    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            EnvId::BallDrop => vec![BALLDROP_G_BOUNDS],
            EnvId::Push1D => vec![PUSH_MASS_BOUNDS, PUSH_DAMPING_BOUNDS],
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            EnvId::BallDrop => &["g"],
            EnvId::Push1D => &["mass", "damping"],
        }
    }
}

/// One domain: an environment plus its latent parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub env: EnvId,
    pub params: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl DomainSpec {
    pub fn new(env: EnvId, params: Vec<f64>) -> Result<Self> {
        Self::with_bounds(env, params, env.bounds())
    }

    pub fn with_bounds(env: EnvId, params: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if params.len() != env.param_dim() {
            return Err(Error::dims(
                format!("{} parameters", env.name()),
                env.param_dim(),
                params.len(),
            ));
        }
        if bounds.len() != params.len() {
            return Err(Error::dims("parameter bounds", params.len(), bounds.len()));
        }
        for ((p, (lo, hi)), name) in params.iter().zip(&bounds).zip(env.param_names()) {
            if !(p.is_finite() && lo <= p && p <= hi) {
                return Err(Error::InvalidDomain(format!(
                    "{} {name} = {p} outside [{lo}, {hi}]",
                    env.name()
                )));
            }
        }
        Ok(Self {
            env,
            params,
            bounds,
        })
    }

    pub fn balldrop(g: f64) -> Result<Self> {
        Self::new(EnvId::BallDrop, vec![g])
    }

    pub fn push1d(mass: f64, damping: f64) -> Result<Self> {
        Self::new(EnvId::Push1D, vec![mass, damping])
    }
}

/// Full physical state. The learner only ever sees [`EnvState::observation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub position: f64,
    pub velocity: f64,
}

impl EnvState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    pub fn observation(&self) -> [f64; 1] {
        [self.position]
    }
}

/// Exact free fall over one step of length `t0`.
pub fn step_balldrop(state: EnvState, t0: f64, g: f64) -> EnvState {
    debug_assert!(t0 > 0.0);
    EnvState {
        position: state.position + state.velocity * t0 + 0.5 * g * t0 * t0,
        velocity: state.velocity + g * t0,
    }
}

/// Semi-implicit Euler step of a damped point mass pushed by force `u`.
pub fn step_push1d(state: EnvState, u: f64, mass: f64, damping: f64, dt: f64) -> Result<EnvState> {
    if !(u.abs() <= PUSH_U_MAX) {
        return Err(Error::ActionOutOfRange {
            u,
            u_max: PUSH_U_MAX,
        });
    }
    debug_assert!(mass > 0.0 && damping >= 0.0 && dt > 0.0);
    let velocity = state.velocity + dt * (u - damping * state.velocity) / mass;
    Ok(EnvState {
        position: state.position + dt * velocity,
        velocity,
    })
}

pub fn push1d_reward(next_position: f64, u: f64) -> f64 {
    let err = next_position - PUSH_TARGET;
    -err * err - PUSH_ACTION_COST * u * u
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertGains {
    pub kp: f64,
    pub kd: f64,
    pub u_max: f64,
}

impl Default for ExpertGains {
    fn default() -> Self {
        Self {
            kp: 4.0,
            kd: 3.0,
            u_max: PUSH_U_MAX,
        }
    }
}

/// PD law in acceleration space, scaled by the true mass and with the true
/// damping cancelled, so the action distribution differs per domain.
pub fn expert_action_push1d(state: EnvState, mass: f64, damping: f64, target: f64, gains: ExpertGains) -> f64 {
    let accel = gains.kp * (target - state.position) - gains.kd * state.velocity;
    (mass * accel + damping * state.velocity).clamp(-gains.u_max, gains.u_max)
}

/// Closed form of the free fall after `steps` steps.
pub fn balldrop_closed_form(y0: f64, v0: f64, g: f64, t0: f64, steps: usize) -> f64 {
    let t = steps as f64 * t0;
    y0 + v0 * t + 0.5 * g * t * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balldrop_two_steps() {
        let s1 = step_balldrop(EnvState::new(0.0, 0.0), 1.0, -1.0);
        assert_eq!((s1.position, s1.velocity), (-0.5, -1.0));
        let s2 = step_balldrop(s1, 1.0, -1.0);
        assert_eq!((s2.position, s2.velocity), (-2.0, -2.0));
    }

    #[test]
    fn balldrop_zero_gravity() {
        let s = step_balldrop(EnvState::new(3.0, 0.7), 0.5, 0.0);
        assert_eq!(s.velocity, 0.7);
        assert!((s.position - 3.35).abs() < 1e-15);
    }

    #[test]
    fn balldrop_matches_closed_form() {
        let (y0, v0, g) = (12.5, -0.3, -1.7);
        let mut s = EnvState::new(y0, v0);
        for t in 1..=64 {
            s = step_balldrop(s, BALLDROP_T0, g);
            let exact = balldrop_closed_form(y0, v0, g, BALLDROP_T0, t);
            assert!((s.position - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn push_unit_force() {
        let s = step_push1d(EnvState::new(0.0, 0.0), 1.0, 1.0, 0.0, 0.05).unwrap();
        assert!((s.position - 0.0025).abs() < 1e-15);
        assert!((s.velocity - 0.05).abs() < 1e-15);
    }

    #[test]
    fn push_force_free_keeps_velocity() {
        let s = step_push1d(EnvState::new(0.2, -0.4), 0.0, 1.3, 0.0, 0.05).unwrap();
        assert_eq!(s.velocity, -0.4);
    }

    #[test]
    fn push_damped() {
        let s = step_push1d(EnvState::new(0.0, 1.0), 0.0, 2.0, 2.0, 0.05).unwrap();
        assert!((s.velocity - 0.95).abs() < 1e-15);
        assert!((s.position - 0.0475).abs() < 1e-15);
    }

    #[test]
    fn push_rejects_large_force() {
        assert!(matches!(
            step_push1d(EnvState::new(0.0, 0.0), 3.5, 1.0, 0.0, 0.05),
            Err(Error::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn expert_examples() {
        let g = ExpertGains::default();
        assert_eq!(expert_action_push1d(EnvState::new(0.0, 0.0), 1.0, 0.0, 1.0, g), 3.0);
        assert_eq!(expert_action_push1d(EnvState::new(1.0, 0.0), 1.0, 0.0, 1.0, g), 0.0);
        assert_eq!(expert_action_push1d(EnvState::new(0.0, 0.0), 2.0, 0.0, 1.0, g), 3.0);
    }

    #[test]
    fn domain_bounds_checked() {
        assert!(DomainSpec::push1d(3.0, 0.5).is_err());
        assert!(DomainSpec::balldrop(-2.5).is_err());
        assert!(DomainSpec::new(EnvId::Push1D, vec![1.0]).is_err());
        assert!(DomainSpec::balldrop(-1.0).is_ok());
    }
}
