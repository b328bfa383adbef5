use serde::{Deserialize, Serialize};

use crate::dyncore::Trajectory;
use crate::encoder::ContextWindow;
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextMode {
    /// Live history only, zero-padded until `history` steps exist.
    ColdStart,
    /// One recorded clip per episode, used for every step.
    PersistentContext,
    /// A recorded clip for the first `history` steps, live history after.
    WarmStart,
}

impl ContextMode {
    pub const ALL: [ContextMode; 3] = [ContextMode::ColdStart, ContextMode::PersistentContext, ContextMode::WarmStart];

    pub fn name(self) -> &'static str {
        match self {
            ContextMode::ColdStart => "ColdStart",
            ContextMode::PersistentContext => "PersistentContext",
            ContextMode::WarmStart => "WarmStart",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn needs_buffer(self) -> bool {
        self != ContextMode::ColdStart
    }
}

/// Where the trajectories of a buffer came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Executed by the evaluated policy itself in the target domain.
    PolicyRollout { policy: String },
    /// Privileged demonstrations; never admissible as zero-shot context.
    Expert,
}

/// Recorded trajectories of one domain, tagged with their origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    domain: usize,
    provenance: Provenance,
    trajectories: Vec<Trajectory>,
}

impl RolloutBuffer {
    pub fn from_policy_rollouts(domain: usize, policy: impl Into<String>, trajectories: Vec<Trajectory>) -> Self {
        Self {
            domain,
            provenance: Provenance::PolicyRollout { policy: policy.into() },
            trajectories,
        }
    }

    pub fn from_expert(domain: usize, trajectories: Vec<Trajectory>) -> Self {
        Self {
            domain,
            provenance: Provenance::Expert,
            trajectories,
        }
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }
}

/// Context strategy for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSource {
    pub mode: ContextMode,
    buffer: Option<RolloutBuffer>,
}

impl ContextSource {
    pub fn cold_start() -> Self {
        Self {
            mode: ContextMode::ColdStart,
            buffer: None,
        }
    }

    /// Checks that the buffer is admissible for zero-shot use in `domain`
    /// and long enough to cut `history`-step clips from.
    pub fn with_buffer(mode: ContextMode, buffer: RolloutBuffer, domain: usize, history: usize) -> Result<Self> {
        if !mode.needs_buffer() {
            return Err(Error::Config(format!("{} takes no buffer", mode.name())));
        }
        if buffer.provenance == Provenance::Expert {
            return Err(Error::Lineage("expert trajectories cannot serve as zero-shot context".into()));
        }
        if buffer.domain != domain {
            return Err(Error::Lineage(format!(
                "buffer recorded in domain {} used for domain {domain}",
                buffer.domain
            )));
        }
        if buffer.trajectories.is_empty() || buffer.trajectories.iter().any(|t| t.len() < history) {
            return Err(Error::EpisodeTooShort {
                len: buffer.trajectories.iter().map(Trajectory::len).min().unwrap_or(0),
                required: history,
            });
        }
        Ok(Self {
            mode,
            buffer: Some(buffer),
        })
    }

    pub fn buffer(&self) -> Option<&RolloutBuffer> {
        self.buffer.as_ref()
    }

    /// Clip drawn once per episode; `None` for cold starts.
    pub fn draw_clip(&self, history: usize, rng: &mut Rng) -> Option<ContextWindow> {
        let buf = self.buffer.as_ref()?;
        let traj = &buf.trajectories[rng.below(buf.trajectories.len())];
        let end = history - 1 + rng.below(traj.len() - history + 1);
        Some(ContextWindow::from_trajectory(traj, end, history))
    }

    /// Context for step `t` given the live history and this episode's clip.
    pub fn context<'a>(&self, t: usize, history: usize, live: &'a ContextWindow, clip: Option<&'a ContextWindow>) -> &'a ContextWindow {
        match (self.mode, clip) {
            (ContextMode::PersistentContext, Some(c)) => c,
            (ContextMode::WarmStart, Some(c)) if t < history => c,
            _ => live,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(len: usize) -> Trajectory {
        let mut t = Trajectory::new(0, 1, 1);
        for i in 0..len {
            t.push(&[i as f64], &[0.0], 0.0);
        }
        t
    }

    #[test]
    fn expert_buffer_rejected() {
        let buf = RolloutBuffer::from_expert(0, vec![traj(20)]);
        assert!(matches!(
            ContextSource::with_buffer(ContextMode::WarmStart, buf, 0, 16),
            Err(Error::Lineage(_))
        ));
    }

    #[test]
    fn foreign_domain_rejected() {
        let buf = RolloutBuffer::from_policy_rollouts(1, "p", vec![traj(20)]);
        assert!(ContextSource::with_buffer(ContextMode::WarmStart, buf, 0, 16).is_err());
    }

    #[test]
    fn short_buffer_rejected() {
        let buf = RolloutBuffer::from_policy_rollouts(0, "p", vec![traj(10)]);
        assert!(matches!(
            ContextSource::with_buffer(ContextMode::PersistentContext, buf, 0, 16),
            Err(Error::EpisodeTooShort { .. })
        ));
    }

    #[test]
    fn warm_start_switches_after_history() {
        let buf = RolloutBuffer::from_policy_rollouts(0, "p", vec![traj(20)]);
        let warm = ContextSource::with_buffer(ContextMode::WarmStart, buf.clone(), 0, 16).unwrap();
        let persistent = ContextSource::with_buffer(ContextMode::PersistentContext, buf, 0, 16).unwrap();
        let clip = warm.draw_clip(16, &mut Rng::new(1)).unwrap();
        assert!(clip.valid.iter().all(|&v| v));
        let live = ContextWindow::padding(16, 1, 1);
        for t in 0..40 {
            let w = warm.context(t, 16, &live, Some(&clip));
            let p = persistent.context(t, 16, &live, Some(&clip));
            assert_eq!(std::ptr::eq(w, p), t < 16);
            assert_eq!(std::ptr::eq(w, &live), t >= 16);
        }
    }

    #[test]
    fn mode_names() {
        for m in ContextMode::ALL {
            assert_eq!(ContextMode::parse(m.name()), Some(m));
        }
    }
}
