//! Representation-biased diffusion over short trajectory windows.
//!
//! The forward process pulls the generated part of a window towards
//! `lambda * z`, the network predicts the composite noise term, and the
//! deterministic sampler starts from `lambda * z + eps` with the history
//! re-imposed after every step.

pub mod policy;
pub mod schedule;
pub mod train;
pub mod window;

pub use policy::{DiffusionPolicy, PolicyConfig, Variant};
pub use schedule::{time_embedding, NoiseSchedule, K_MAX, SCHEDULE_FLOOR, TIME_EMBED_DIM};
pub use crate::nn::{cosine_lr, LR_FLOOR};
pub use train::{build_windows, online_context, train_policy, PolicyTrainingLog, WindowSet};
pub use window::{broadcast_z, composite_target, ddim_step, ddim_update, forward_perturb, WindowSpec};
