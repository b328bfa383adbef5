//! Multi-domain evaluation, reference normalization and report emission.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::harness::{rollout_episode, Agent, Episode, ExpertAgent, PolicyAgent, RandomAgent};
use super::source::{ContextMode, ContextSource, RolloutBuffer};
use crate::dyncore::dataset::{episode_seed, sample_initial_state};
use crate::dyncore::{DomainSpec, EnvId};
use crate::error::{Error, Result};
use crate::nn::rng::derive_seed;
use crate::nn::Rng;

/// Default share of the expert's normalized performance a domain must
/// reach to count as mastered.
pub const MASTERY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes_per_domain: usize,
    pub episode_len: usize,
    pub seed: u64,
    pub mode: ContextMode,
    pub mastery_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_domain: 20,
            episode_len: 64,
            seed: 0,
            mode: ContextMode::ColdStart,
            mastery_threshold: MASTERY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Iid,
    Ood,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Iid => "IID",
            Split::Ood => "OOD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainRow {
    pub index: usize,
    pub split: Split,
    pub params: Vec<f64>,
    /// Mean episode return of each policy seed.
    pub seed_returns: Vec<f64>,
    pub mean_return: f64,
    /// Spread of `seed_returns`.
    pub std: f64,
    pub expert_return: f64,
    pub random_return: f64,
    pub normalized: f64,
    pub mastered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: ContextMode,
    pub seeds: usize,
    pub rows: Vec<DomainRow>,
    /// Mean over seeds of the mean normalized return of IID domains.
    pub iid_normalized: f64,
    pub iid_std: f64,
    pub ood_normalized: f64,
    pub ood_std: f64,
    /// Mean over seeds of the share of mastered IID domains.
    pub mastery: f64,
    pub mastery_std: f64,
}

/// `(R - R_random) / (R_expert - R_random)`.
pub fn normalized_return(ret: f64, expert: f64, random: f64) -> f64 {
    (ret - random) / (expert - random)
}

/// Share of entries at or above `threshold`.
pub fn mastery_ratio(normalized: &[f64], threshold: f64) -> f64 {
    if normalized.is_empty() {
        return 0.0;
    }
    normalized.iter().filter(|&&n| n >= threshold).count() as f64 / normalized.len() as f64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Domains under evaluation with their global indices and split.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSuite {
    pub domains: Vec<(usize, Split, DomainSpec)>,
}

impl DomainSuite {
    pub fn new(iid: &[DomainSpec], ood: &[DomainSpec]) -> Result<Self> {
        if iid.is_empty() && ood.is_empty() {
            return Err(Error::InvalidDomain("no domains to evaluate".into()));
        }
        let domains = iid
            .iter()
            .map(|d| (Split::Iid, d))
            .chain(ood.iter().map(|d| (Split::Ood, d)))
            .enumerate()
            .map(|(i, (s, d))| (i, s, d.clone()))
            .collect::<Vec<_>>();
        if domains.iter().any(|(_, _, d)| d.env != EnvId::Push1D) {
            return Err(Error::InvalidDomain("evaluation needs Push1D domains".into()));
        }
        Ok(Self { domains })
    }
}

fn episode_start(cfg: &EvalConfig, domain: usize, episode: usize) -> crate::dyncore::EnvState {
    sample_initial_state(EnvId::Push1D, &mut Rng::new(episode_seed(cfg.seed, domain, episode)))
}

/// Runs `agent_for(domain)` on every episode of every domain, in parallel
/// across `(domain, episode)`. Results keep suite order.
fn run_all<'a, F, S>(suite: &DomainSuite, cfg: &EvalConfig, history: usize, stream: u64, agent_for: F, source_for: S) -> Result<Vec<Vec<Episode>>>
where
    F: Fn(usize) -> Box<dyn Agent + 'a> + Sync,
    S: Fn(usize) -> Result<ContextSource> + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..suite.domains.len())
        .flat_map(|d| (0..cfg.episodes_per_domain).map(move |e| (d, e)))
        .collect();
    let episodes: Vec<Episode> = tasks
        .par_iter()
        .map(|&(d, e)| {
            let (index, _, spec) = &suite.domains[d];
            let agent = agent_for(d);
            let source = source_for(d)?;
            let seed = derive_seed(episode_seed(cfg.seed, *index, e), stream);
            rollout_episode(agent.as_ref(), *index, spec, &source, history, episode_start(cfg, *index, e), cfg.episode_len, seed)
        })
        .collect::<Result<_>>()?;
    let mut grouped = vec![Vec::with_capacity(cfg.episodes_per_domain); suite.domains.len()];
    for ((d, _), ep) in tasks.into_iter().zip(episodes) {
        grouped[d].push(ep);
    }
    Ok(grouped)
}

fn mean_returns(eps: &[Vec<Episode>]) -> Vec<f64> {
    eps.iter()
        .map(|v| v.iter().map(|e| e.ret).sum::<f64>() / v.len().max(1) as f64)
        .collect()
}

/// Expert and uniform-random returns per domain on the evaluation starts.
pub fn reference_returns(suite: &DomainSuite, cfg: &EvalConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let cold = |_: usize| Ok(ContextSource::cold_start());
    let expert = run_all(suite, cfg, 1, 1, |d| Box::new(ExpertAgent::new(&suite.domains[d].2)), cold)?;
    let random = run_all(suite, cfg, 1, 2, |_| Box::new(RandomAgent::default()), cold)?;
    Ok((mean_returns(&expert), mean_returns(&random)))
}

fn policy_stream(seed_index: usize) -> u64 {
    100 + seed_index as u64
}

/// Episodes of every policy seed under cold-start contexts.
fn cold_runs(agents: &[PolicyAgent], suite: &DomainSuite, cfg: &EvalConfig) -> Result<Vec<Vec<Vec<Episode>>>> {
    agents
        .iter()
        .enumerate()
        .map(|(s, a)| {
            run_all(
                suite,
                cfg,
                a.policy.spec.history,
                policy_stream(s),
                |_| Box::new(PolicyAgent { policy: a.policy, encoder: a.encoder }),
                |_| Ok(ContextSource::cold_start()),
            )
        })
        .collect()
}

fn buffered_runs(
    agents: &[PolicyAgent],
    suite: &DomainSuite,
    cfg: &EvalConfig,
    mode: ContextMode,
    cold: &[Vec<Vec<Episode>>],
) -> Result<Vec<Vec<Vec<Episode>>>> {
    agents
        .iter()
        .enumerate()
        .map(|(s, a)| {
            let history = a.policy.spec.history;
            let tag = format!("{}@seed{s}", a.policy.variant.name());
            run_all(
                suite,
                cfg,
                history,
                policy_stream(s),
                |_| Box::new(PolicyAgent { policy: a.policy, encoder: a.encoder }),
                |d| {
                    let index = suite.domains[d].0;
                    let trajs = cold[s][d].iter().map(|e| e.trajectory.clone()).collect();
                    ContextSource::with_buffer(mode, RolloutBuffer::from_policy_rollouts(index, tag.clone(), trajs), index, history)
                },
            )
        })
        .collect()
}

fn build_report(
    suite: &DomainSuite,
    cfg: &EvalConfig,
    mode: ContextMode,
    runs: &[Vec<Vec<Episode>>],
    expert: &[f64],
    random: &[f64],
) -> EvalReport {
    let per_seed: Vec<Vec<f64>> = runs.iter().map(|r| mean_returns(r)).collect();
    let seeds = per_seed.len();
    let mut iid_seed = Vec::with_capacity(seeds);
    let mut ood_seed = Vec::with_capacity(seeds);
    let mut mastery_seed = Vec::with_capacity(seeds);
    for returns in &per_seed {
        let mut iid = Vec::new();
        let mut ood = Vec::new();
        for (d, (_, split, _)) in suite.domains.iter().enumerate() {
            let n = normalized_return(returns[d], expert[d], random[d]);
            match split {
                Split::Iid => iid.push(n),
                Split::Ood => ood.push(n),
            }
        }
        iid_seed.push(mean_std(&iid).0);
        ood_seed.push(mean_std(&ood).0);
        mastery_seed.push(mastery_ratio(&iid, cfg.mastery_threshold));
    }
    let rows = suite
        .domains
        .iter()
        .enumerate()
        .map(|(d, (index, split, spec))| {
            let seed_returns: Vec<f64> = per_seed.iter().map(|r| r[d]).collect();
            let (mean_return, std) = mean_std(&seed_returns);
            let normalized = normalized_return(mean_return, expert[d], random[d]);
            DomainRow {
                index: *index,
                split: *split,
                params: spec.params.clone(),
                seed_returns,
                mean_return,
                std,
                expert_return: expert[d],
                random_return: random[d],
                normalized,
                mastered: normalized >= cfg.mastery_threshold,
            }
        })
        .collect();
    let (iid_normalized, iid_std) = mean_std(&iid_seed);
    let (ood_normalized, ood_std) = mean_std(&ood_seed);
    let (mastery, mastery_std) = mean_std(&mastery_seed);
    EvalReport {
        mode,
        seeds,
        rows,
        iid_normalized,
        iid_std,
        ood_normalized,
        ood_std,
        mastery,
        mastery_std,
    }
}

/// Evaluates one trained policy per seed on the IID and OOD domains with
/// the context source of `cfg.mode`. Buffered modes first run a cold-start
/// pass to record each policy's own in-domain rollouts.
pub fn evaluate(agents: &[PolicyAgent], iid: &[DomainSpec], ood: &[DomainSpec], cfg: &EvalConfig) -> Result<EvalReport> {
    if agents.is_empty() {
        return Err(Error::Config("no policies to evaluate".into()));
    }
    let suite = DomainSuite::new(iid, ood)?;
    let (expert, random) = reference_returns(&suite, cfg)?;
    let cold = cold_runs(agents, &suite, cfg)?;
    let runs = if cfg.mode.needs_buffer() {
        buffered_runs(agents, &suite, cfg, cfg.mode, &cold)?
    } else {
        cold
    };
    Ok(build_report(&suite, cfg, cfg.mode, &runs, &expert, &random))
}

/// One report per context mode, sharing the cold-start pass that records
/// the buffers of the other two.
pub fn compare_context_sources(
    agents: &[PolicyAgent],
    iid: &[DomainSpec],
    ood: &[DomainSpec],
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    if agents.is_empty() {
        return Err(Error::Config("no policies to evaluate".into()));
    }
    let suite = DomainSuite::new(iid, ood)?;
    let (expert, random) = reference_returns(&suite, cfg)?;
    let cold = cold_runs(agents, &suite, cfg)?;
    let mut out = vec![build_report(&suite, cfg, ContextMode::ColdStart, &cold, &expert, &random)];
    for mode in [ContextMode::PersistentContext, ContextMode::WarmStart] {
        let runs = buffered_runs(agents, &suite, cfg, mode, &cold)?;
        out.push(build_report(&suite, cfg, mode, &runs, &expert, &random));
    }
    Ok(out)
}

/// Drops repeated guidance scales, keeping first occurrences.
pub fn dedup_lambdas(lambdas: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("guidance scale must be >= 0, got {l}")));
        }
        if out.contains(&l) {
            log::warn!("guidance scale {l} listed twice; evaluating it once");
        } else {
            out.push(l);
        }
    }
    Ok(out)
}

/// Re-samples each trained policy at every guidance scale.
pub fn sweep_guidance(
    agents: &[PolicyAgent],
    lambdas: &[f64],
    iid: &[DomainSpec],
    ood: &[DomainSpec],
    cfg: &EvalConfig,
) -> Result<Vec<(f64, EvalReport)>> {
    dedup_lambdas(lambdas)?
        .into_iter()
        .map(|l| {
            let swept: Vec<_> = agents.iter().map(|a| a.policy.with_lambda(l)).collect();
            let swept_agents: Vec<PolicyAgent> = swept
                .iter()
                .zip(agents)
                .map(|(p, a)| PolicyAgent { policy: p, encoder: a.encoder })
                .collect();
            Ok((l, evaluate(&swept_agents, iid, ood, cfg)?))
        })
        .collect()
}

impl EvalReport {
    /// One row per domain.
    pub fn to_csv(&self) -> String {
        let pd = self.rows.first().map_or(0, |r| r.params.len());
        let mut s = String::from("domain_index,split");
        for k in 0..pd {
            let _ = write!(s, ",xi_{k}");
        }
        s.push_str(",mean_return,std,normalized,mastered,expert_return,random_return\n");
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.index, r.split.name());
            for p in &r.params {
                let _ = write!(s, ",{p}");
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{},{}",
                r.mean_return, r.std, r.normalized, r.mastered as u8, r.expert_return, r.random_return
            );
        }
        s
    }

    /// Aggregate IID/OOD lines in the style of a results table.
    pub fn summary(&self) -> String {
        format!(
            "context {} over {} seed(s)\n  IID normalized {:.3} +- {:.3}\n  OOD normalized {:.3} +- {:.3}\n  IID mastery    {:.3} +- {:.3}\n",
            self.mode.name(),
            self.seeds,
            self.iid_normalized,
            self.iid_std,
            self.ood_normalized,
            self.ood_std,
            self.mastery,
            self.mastery_std
        )
    }
}

/// `lambda,iid_normalized,iid_std,ood_normalized,ood_std,mastery`.
pub fn sweep_csv(rows: &[(f64, EvalReport)]) -> String {
    let mut s = String::from("lambda,iid_normalized,iid_std,ood_normalized,ood_std,mastery\n");
    for (l, r) in rows {
        let _ = writeln!(s, "{l},{},{},{},{},{}", r.iid_normalized, r.iid_std, r.ood_normalized, r.ood_std, r.mastery);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mastery_example() {
        let n: Vec<f64> = [0.9, 0.5, 0.7].iter().map(|&r| normalized_return(r * -10.0, -10.0, 0.0)).collect();
        assert!((mastery_ratio(&n, 0.6) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_identities() {
        assert_eq!(normalized_return(-5.0, -5.0, -50.0), 1.0);
        assert_eq!(normalized_return(-50.0, -5.0, -50.0), 0.0);
    }

    #[test]
    fn lambdas_deduplicated() {
        assert_eq!(dedup_lambdas(&[0.0, 0.1, 0.0, 1.0, 0.1]).unwrap(), vec![0.0, 0.1, 1.0]);
        assert!(dedup_lambdas(&[-0.1]).is_err());
    }

    #[test]
    fn random_baseline_normalizes_near_zero() {
        let suite = DomainSuite::new(&[DomainSpec::push1d(1.0, 1.0).unwrap()], &[]).unwrap();
        let cfg = EvalConfig {
            episodes_per_domain: 200,
            ..Default::default()
        };
        let (expert, random) = reference_returns(&suite, &cfg).unwrap();
        assert!(expert[0] > random[0]);
        let again = run_all(&suite, &cfg, 1, 77, |_| Box::new(RandomAgent::default()), |_| Ok(ContextSource::cold_start())).unwrap();
        let n = normalized_return(mean_returns(&again)[0], expert[0], random[0]);
        assert!(n.abs() < 0.1, "{n}");
    }

    #[test]
    fn empty_suite_rejected() {
        assert!(DomainSuite::new(&[], &[]).is_err());
    }
}
