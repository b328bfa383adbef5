//! Lagged-context representation learning and embedding probes.

pub mod bundle;
pub mod context;
pub mod export;
pub mod pairs;
pub mod probe;
pub mod train;

pub use bundle::{EncoderBundle, EncoderConfig};
pub use context::{ContextOrigin, ContextWindow, EncoderNorm};
pub use export::embeddings_csv;
pub use pairs::{build_pairs, ContextPair};
pub use probe::{collect_embeddings, embedding_stats, linear_probe, reconstruct_params, EmbeddingSet, EmbeddingStats};
pub use train::{evaluate_pairs, train_encoder, EncoderTrainingLog, PairLosses};
