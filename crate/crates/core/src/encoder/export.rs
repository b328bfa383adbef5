use std::fmt::Write as _;

use super::probe::EmbeddingSet;

/// CSV with one row per embedded context:
/// `domain_index,episode_index,end_step,z_0,...`.
pub fn embeddings_csv(set: &EmbeddingSet) -> String {
    let mut out = String::from("domain_index,episode_index,end_step");
    for k in 0..set.z.ncols() {
        let _ = write!(out, ",z_{k}");
    }
    out.push('\n');
    for (o, row) in set.origins.iter().zip(set.z.rows()) {
        let _ = write!(out, "{},{},{}", o.domain, o.episode, o.end_step);
        for v in row {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}
