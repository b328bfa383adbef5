//! Context/target pairing under a lag rule.

use crate::dyncore::{Dataset, Lag};
use crate::error::{Error, Result};
use crate::nn::Rng;

/// A context window (episode `context_episode`, ending at `context_end`)
/// paired with the transition `(s_t, a_t, s_{t+1})` of `target_episode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextPair {
    pub domain: usize,
    pub context_episode: usize,
    pub context_end: usize,
    pub target_episode: usize,
    pub t: usize,
    pub lag: Lag,
}

/// Admissible target steps of an episode of length `len` under a finite lag.
pub fn finite_lag_targets(len: usize, history: usize, lag: usize) -> std::ops::Range<usize> {
    (history - 1 + lag)..len.saturating_sub(1)
}

/// Builds every admissible pair of `dataset`.
///
/// Finite lags stay inside one episode with the context ending exactly
/// `lag` steps before `t`; windows that would reach before the episode
/// start are skipped. The infinite lag pairs each transition with a context
/// from another, randomly chosen episode of the same domain at a random end
/// step; call again with a fresh seed to re-draw the pairing.
pub fn build_pairs(dataset: &Dataset, lag: Lag, history: usize, seed: u64) -> Result<Vec<ContextPair>> {
    if history == 0 {
        return Err(Error::NoAdmissiblePairs("history must be positive".into()));
    }
    let mut pairs = Vec::new();
    match lag {
        Lag::Steps(0) => return Err(Error::NoAdmissiblePairs("lag must be positive".into())),
        Lag::Steps(d) => {
            for (domain, e, traj) in dataset.iter() {
                let required = history + d + 1;
                if traj.len() < required {
                    return Err(Error::EpisodeTooShort {
                        len: traj.len(),
                        required,
                    });
                }
                pairs.extend(finite_lag_targets(traj.len(), history, d).map(|t| ContextPair {
                    domain,
                    context_episode: e,
                    context_end: t - d,
                    target_episode: e,
                    t,
                    lag,
                }));
            }
        }
        Lag::Infinite => {
            let mut rng = Rng::new(seed);
            for (domain, eps) in dataset.episodes.iter().enumerate() {
                if eps.len() < 2 {
                    return Err(Error::InsufficientEpisodes {
                        domain,
                        count: eps.len(),
                        required: 2,
                    });
                }
                for (j, traj) in eps.iter().enumerate() {
                    for t in 0..traj.len().saturating_sub(1) {
                        // uniform over the other episodes
                        let mut i = rng.below(eps.len() - 1);
                        if i >= j {
                            i += 1;
                        }
                        let len_i = eps[i].len();
                        if len_i < history {
                            return Err(Error::EpisodeTooShort {
                                len: len_i,
                                required: history,
                            });
                        }
                        let end = history - 1 + rng.below(len_i - history + 1);
                        pairs.push(ContextPair {
                            domain,
                            context_episode: i,
                            context_end: end,
                            target_episode: j,
                            t,
                            lag,
                        });
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAdmissiblePairs(format!("lag {}", lag.label())));
    }
    Ok(pairs)
}
