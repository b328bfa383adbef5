use rayon::prelude::*;

use super::env::{
    expert_action_push1d, push1d_reward, step_balldrop, step_push1d, DomainSpec, EnvId, EnvState,
    ExpertGains, BALLDROP_T0, BALLDROP_V0, BALLDROP_Y0, PUSH_DT, PUSH_TARGET, PUSH_V0, PUSH_X0,
};
use crate::error::{Error, Result};
use crate::nn::rng::{derive_seed, Rng};
use crate::{FUTURE_LEN, HISTORY_LEN};

/// Shortest episode a dataset may contain: one full policy window.
pub const MIN_EPISODE_LEN: usize = HISTORY_LEN + FUTURE_LEN;

/// One episode. Row `t` holds the observation at `t`, the action taken
/// there and the reward received for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub domain: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn new(domain: usize, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            domain,
            obs_dim,
            action_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(action.len(), self.action_dim);
        self.observations.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env: EnvId,
    pub domains: Vec<DomainSpec>,
    /// Episodes grouped by domain index.
    pub episodes: Vec<Vec<Trajectory>>,
}

impl Dataset {
    pub fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    pub fn trajectory_count(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// `(domain, episode, trajectory)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Trajectory)> {
        self.episodes
            .iter()
            .enumerate()
            .flat_map(|(d, eps)| eps.iter().enumerate().map(move |(e, t)| (d, e, t)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes.len() != self.domains.len() {
            return Err(Error::dims("dataset domain table", self.domains.len(), self.episodes.len()));
        }
        for (d, eps) in self.episodes.iter().enumerate() {
            if self.domains[d].env != self.env {
                return Err(Error::InvalidDomain(format!("domain {d} belongs to another env")));
            }
            for t in eps {
                if t.domain != d {
                    return Err(Error::InvalidDomain(format!(
                        "trajectory filed under domain {d} claims domain {}",
                        t.domain
                    )));
                }
                if !t.rewards.iter().all(|r| r.is_finite()) {
                    return Err(Error::NonFinite {
                        tensor: format!("rewards of domain {d}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Keeps, per domain, the listed episode indices in the given order.
    pub fn select(&self, keep: &[Vec<usize>]) -> Dataset {
        Dataset {
            env: self.env,
            domains: self.domains.clone(),
            episodes: self
                .episodes
                .iter()
                .zip(keep)
                .map(|(eps, idx)| idx.iter().map(|&i| eps[i].clone()).collect())
                .collect(),
        }
    }

    /// Per-domain trajectory split: a seeded shuffle of each domain's
    /// episodes, the first `ratio` share going to training. Returns the
    /// episode indices `(train, validation)` per domain.
    pub fn split_indices(&self, ratio: f64, seed: u64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut train = Vec::with_capacity(self.episodes.len());
        let mut val = Vec::with_capacity(self.episodes.len());
        for (d, eps) in self.episodes.iter().enumerate() {
            let mut idx: Vec<usize> = (0..eps.len()).collect();
            Rng::derive(seed, d as u64).shuffle(&mut idx);
            let n_train = ((eps.len() as f64 * ratio).round() as usize).clamp(1, eps.len());
            val.push(idx.split_off(n_train));
            train.push(idx);
        }
        (train, val)
    }

    /// Copy with every stored value rounded through `f32`, matching what a
    /// save/load cycle produces.
    pub fn quantized(&self) -> Dataset {
        let q = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect();
        let mut out = self.clone();
        for eps in &mut out.episodes {
            for t in eps {
                t.observations = q(&t.observations);
                t.actions = q(&t.actions);
                t.rewards = q(&t.rewards);
            }
        }
        out
    }
}

/// Uniform grid over the parameter box: `per_axis` points per parameter.
pub fn grid_domains(env: EnvId, per_axis: usize) -> Vec<DomainSpec> {
    grid_domains_within(env, &env.bounds(), per_axis).expect("physical bounds are valid")
}

/// Checks that `bounds` is a non-empty sub-box of the physical range.
pub fn check_sub_bounds(env: EnvId, bounds: &[(f64, f64)]) -> Result<()> {
    let full = env.bounds();
    if bounds.len() != full.len() {
        return Err(Error::dims(format!("{} bounds", env.name()), full.len(), bounds.len()));
    }
    for ((&(lo, hi), &(flo, fhi)), name) in bounds.iter().zip(&full).zip(env.param_names()) {
        if !(lo.is_finite() && hi.is_finite() && flo <= lo && lo <= hi && hi <= fhi) {
            return Err(Error::InvalidDomain(format!(
                "{name} range [{lo}, {hi}] is not inside [{flo}, {fhi}]"
            )));
        }
    }
    Ok(())
}

/// Uniform grid over a sub-box of the physical range.
pub fn grid_domains_within(env: EnvId, bounds: &[(f64, f64)], per_axis: usize) -> Result<Vec<DomainSpec>> {
    check_sub_bounds(env, bounds)?;
    if per_axis == 0 {
        return Err(Error::Config("grid needs at least one point per axis".into()));
    }
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if per_axis == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    loop {
        let params = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        out.push(DomainSpec::new(env, params)?);
        let mut k = axes.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Domains sampled uniformly inside the bounds, each at least 10% of the
/// range away from every grid value on every axis.
pub fn off_grid_domains(env: EnvId, grid: &[DomainSpec], count: usize, seed: u64) -> Vec<DomainSpec> {
    off_grid_domains_within(env, &env.bounds(), grid, count, seed).expect("physical bounds admit off-grid points")
}

/// [`off_grid_domains`] restricted to a sub-box of the physical range.
pub fn off_grid_domains_within(
    env: EnvId,
    bounds: &[(f64, f64)],
    grid: &[DomainSpec],
    count: usize,
    seed: u64,
) -> Result<Vec<DomainSpec>> {
    check_sub_bounds(env, bounds)?;
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts >= 100_000 {
            return Err(Error::Degenerate("no room for off-grid domains inside the bounds".into()));
        }
        let params: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.uniform_in(lo, hi)).collect();
        let clear = (0..params.len()).all(|k| {
            let (lo, hi) = bounds[k];
            grid.iter()
                .all(|g| (g.params[k] - params[k]).abs() >= 0.1 * (hi - lo))
        });
        if clear {
            out.push(DomainSpec::new(env, params)?);
        }
    }
    Ok(out)
}

pub fn sample_initial_state(env: EnvId, rng: &mut Rng) -> EnvState {
    match env {
        EnvId::BallDrop => EnvState::new(
            rng.uniform_in(BALLDROP_Y0.0, BALLDROP_Y0.1),
            rng.uniform_in(BALLDROP_V0.0, BALLDROP_V0.1),
        ),
        EnvId::Push1D => EnvState::new(
            rng.uniform_in(PUSH_X0.0, PUSH_X0.1),
            rng.uniform_in(PUSH_V0.0, PUSH_V0.1),
        ),
    }
}

/// Action-free free fall.
pub fn simulate_balldrop(domain: usize, g: f64, init: EnvState, len: usize) -> Trajectory {
    let mut traj = Trajectory::new(domain, 1, 0);
    let mut s = init;
    for _ in 0..len {
        traj.push(&s.observation(), &[], 0.0);
        s = step_balldrop(s, BALLDROP_T0, g);
    }
    traj
}

/// Runs `policy` (which sees the full state) on a Push1D domain.
pub fn simulate_push1d(
    domain: usize,
    spec: &DomainSpec,
    init: EnvState,
    len: usize,
    mut policy: impl FnMut(EnvState) -> f64,
) -> Result<(Trajectory, EnvState)> {
    let (mass, damping) = (spec.params[0], spec.params[1]);
    let mut traj = Trajectory::new(domain, 1, 1);
    let mut s = init;
    for _ in 0..len {
        let u = policy(s);
        let next = step_push1d(s, u, mass, damping, PUSH_DT)?;
        traj.push(&s.observation(), &[u], push1d_reward(next.position, u));
        s = next;
    }
    Ok((traj, s))
}

pub fn push1d_expert(spec: &DomainSpec) -> impl Fn(EnvState) -> f64 + '_ {
    move |s| expert_action_push1d(s, spec.params[0], spec.params[1], PUSH_TARGET, ExpertGains::default())
}

/// Seed of episode `episode` of domain `domain` under master `seed`.
pub fn episode_seed(seed: u64, domain: usize, episode: usize) -> u64 {
    derive_seed(derive_seed(seed, domain as u64), episode as u64)
}

/// Expert demonstrations for every domain of `grid`. Each episode draws its
/// initial state from [`sample_initial_state`] with a seed derived from
/// `(seed, domain, episode)`, so the result does not depend on scheduling.
pub fn generate_dataset(
    env: EnvId,
    grid: &[DomainSpec],
    episodes_per_domain: usize,
    episode_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if episode_len < MIN_EPISODE_LEN {
        return Err(Error::EpisodeTooShort {
            len: episode_len,
            required: MIN_EPISODE_LEN,
        });
    }
    if episodes_per_domain < 2 {
        return Err(Error::InsufficientEpisodes {
            domain: 0,
            count: episodes_per_domain,
            required: 2,
        });
    }
    if grid.is_empty() {
        return Err(Error::InvalidDomain("empty domain grid".into()));
    }
    for spec in grid {
        if spec.env != env {
            return Err(Error::InvalidDomain(format!(
                "{} domain in a {} dataset",
                spec.env.name(),
                env.name()
            )));
        }
        DomainSpec::with_bounds(env, spec.params.clone(), spec.bounds.clone())?;
    }

    let episodes = grid
        .par_iter()
        .enumerate()
        .map(|(d, spec)| {
            (0..episodes_per_domain)
                .map(|e| {
                    let mut rng = Rng::new(episode_seed(seed, d, e));
                    let init = sample_initial_state(env, &mut rng);
                    match env {
                        EnvId::BallDrop => Ok(simulate_balldrop(d, spec.params[0], init, episode_len)),
                        EnvId::Push1D => {
                            simulate_push1d(d, spec, init, episode_len, push1d_expert(spec)).map(|r| r.0)
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let ds = Dataset {
        env,
        domains: grid.to_vec(),
        episodes,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_grid_counts() {
        let grid = grid_domains(EnvId::Push1D, 3);
        assert_eq!(grid.len(), 9);
        let ds = generate_dataset(EnvId::Push1D, &grid, 20, 64, 1).unwrap();
        assert_eq!(ds.trajectory_count(), 180);
        assert!(ds.iter().all(|(_, _, t)| t.len() == 64));
    }

    #[test]
    fn generation_is_deterministic() {
        let grid = grid_domains(EnvId::Push1D, 3);
        let a = generate_dataset(EnvId::Push1D, &grid, 3, 32, 99).unwrap();
        let b = generate_dataset(EnvId::Push1D, &grid, 3, 32, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(EnvId::Push1D, &grid, 3, 32, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_short_episodes_and_single_episode() {
        let grid = grid_domains(EnvId::BallDrop, 4);
        assert!(matches!(
            generate_dataset(EnvId::BallDrop, &grid, 4, 19, 0),
            Err(Error::EpisodeTooShort { len: 19, required: 20 })
        ));
        assert!(generate_dataset(EnvId::BallDrop, &grid, 1, 32, 0).is_err());
    }

    #[test]
    fn grid_corners() {
        let grid = grid_domains(EnvId::Push1D, 3);
        assert_eq!(grid[0].params, vec![0.5, 0.0]);
        assert_eq!(grid[8].params, vec![2.5, 2.0]);
        let g = grid_domains(EnvId::BallDrop, 10);
        assert_eq!(g[0].params, vec![-2.0]);
        assert!((g[9].params[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn off_grid_domains_avoid_grid() {
        let grid = grid_domains(EnvId::Push1D, 3);
        let ood = off_grid_domains(EnvId::Push1D, &grid, 5, 3);
        assert_eq!(ood.len(), 5);
        for d in &ood {
            for g in &grid {
                assert!((d.params[0] - g.params[0]).abs() >= 0.2);
                assert!((d.params[1] - g.params[1]).abs() >= 0.2);
            }
        }
    }

    #[test]
    fn expert_settles_on_every_grid_domain() {
        for spec in grid_domains(EnvId::Push1D, 5) {
            for (x0, v0) in [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5), (0.0, 0.0)] {
                let (_, last) =
                    simulate_push1d(0, &spec, EnvState::new(x0, v0), 64, push1d_expert(&spec)).unwrap();
                assert!((last.position - PUSH_TARGET).abs() < 0.05, "{spec:?} from ({x0}, {v0})");
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let grid = grid_domains(EnvId::BallDrop, 3);
        let ds = generate_dataset(EnvId::BallDrop, &grid, 10, 20, 5).unwrap();
        let (train, val) = ds.split_indices(0.8, 7);
        for d in 0..3 {
            assert_eq!(train[d].len(), 8);
            assert_eq!(val[d].len(), 2);
            let mut all: Vec<usize> = train[d].iter().chain(&val[d]).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
    }
}
