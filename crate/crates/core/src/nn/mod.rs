//! Small differentiable-network toolkit: dense tanh MLPs with exact
//! reverse-mode gradients, Adam, losses, checkpoints and seeded RNG.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod rng;

pub use adam::{cosine_lr, AdamConfig, OptimState, LR_FLOOR};
pub use checkpoint::Checkpoint;
pub use mlp::{Dense, Gradients, Mlp};
pub use rng::Rng;
