//! Domain-adaptive diffusion policies on toy parametric dynamics.
//!
//! * [`dyncore`]: two partially observed systems, experts, datasets, oracles.
//! * [`nn`]: small MLPs with exact gradients and Adam.
//! * [`encoder`]: lagged-context representation learning and probes.
//! * [`mixdiff`]: representation-biased diffusion, DDIM sampling, policy training.
//! * [`rollout`]: zero-shot evaluation harness.
//! * [`config`] and [`cli`]: experiment files and the `dadp` command.

pub mod cli;
mod codec;
pub mod config;
pub mod dyncore;
pub mod encoder;
pub mod error;
pub mod mixdiff;
pub mod nn;
pub mod rollout;
pub mod standardize;

pub use error::{Error, Result};

/// Context and history length in steps.
pub const HISTORY_LEN: usize = 16;
/// Generated rows after the current step, including it.
pub const FUTURE_LEN: usize = 4;
