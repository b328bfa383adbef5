//! Zero-shot evaluation: online contexts, reference baselines and reports.

pub mod harness;
pub mod report;
pub mod source;

pub use harness::{rollout_episode, Agent, Episode, ExpertAgent, PolicyAgent, RandomAgent, StepInput};
pub use report::{
    compare_context_sources, dedup_lambdas, evaluate, mastery_ratio, normalized_return, reference_returns, sweep_csv,
    sweep_guidance, DomainRow, DomainSuite, EvalConfig, EvalReport, Split, MASTERY_THRESHOLD,
};
pub use source::{ContextMode, ContextSource, Provenance, RolloutBuffer};
