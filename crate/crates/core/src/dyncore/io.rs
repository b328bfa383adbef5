//! Dataset persistence.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "DADP" | version u32 | env_id u32 | state_dim u32 | action_dim u32
//!        | param_dim u32 | domain_count u32
//! per domain:  params f64[param_dim] | episode_count u32
//!   per episode: length u32 | f32 rows of (observation, action, reward)
//! ```
//!
//! Values are stored as `f32`, so a loaded dataset equals
//! [`Dataset::quantized`] of the one that was saved.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Trajectory};
use super::env::{DomainSpec, EnvId};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"DADP";
pub const DATASET_VERSION: u32 = 1;

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let (obs_dim, act_dim) = (ds.obs_dim(), ds.action_dim());
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(ds.env.code());
    w.len_u32(obs_dim);
    w.len_u32(act_dim);
    w.len_u32(ds.env.param_dim());
    w.len_u32(ds.domains.len());
    for (spec, eps) in ds.domains.iter().zip(&ds.episodes) {
        for &p in &spec.params {
            w.f64(p);
        }
        w.len_u32(eps.len());
        for traj in eps {
            w.len_u32(traj.len());
            for t in 0..traj.len() {
                for &v in traj.obs(t).iter().chain(traj.action(t)) {
                    w.f32(v as f32);
                }
                w.f32(traj.rewards[t] as f32);
            }
        }
    }
    w.buf
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "dataset");
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::format("dataset", "bad magic"));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format("dataset", format!("unsupported version {version}")));
    }
    let env = EnvId::from_code(r.u32()?)?;
    let obs_dim = r.usize()?;
    let act_dim = r.usize()?;
    let param_dim = r.usize()?;
    if obs_dim != env.obs_dim() || act_dim != env.action_dim() || param_dim != env.param_dim() {
        return Err(Error::format(
            "dataset",
            format!("dims ({obs_dim}, {act_dim}, {param_dim}) do not match {}", env.name()),
        ));
    }
    let domain_count = r.usize()?;
    let mut domains = Vec::with_capacity(domain_count);
    let mut episodes = Vec::with_capacity(domain_count);
    for d in 0..domain_count {
        let params = (0..param_dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        domains.push(DomainSpec::new(env, params)?);
        let count = r.usize()?;
        let mut eps = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.usize()?;
            let mut traj = Trajectory::new(d, obs_dim, act_dim);
            let mut row = vec![0.0; obs_dim + act_dim];
            for _ in 0..len {
                for v in row.iter_mut() {
                    *v = r.f32()? as f64;
                }
                let reward = r.f32()? as f64;
                traj.push(&row[..obs_dim], &row[obs_dim..], reward);
            }
            eps.push(traj);
        }
        episodes.push(eps);
    }
    r.finish()?;
    let ds = Dataset {
        env,
        domains,
        episodes,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}

/// One row per step: `domain_index, episode_index, step, xi_*, obs_*,
/// action_*, reward`, with the same `f32` precision as the binary file.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = String::from("domain_index,episode_index,step");
    for k in 0..ds.env.param_dim() {
        let _ = write!(out, ",xi_{k}");
    }
    for k in 0..ds.obs_dim() {
        let _ = write!(out, ",obs_{k}");
    }
    for k in 0..ds.action_dim() {
        let _ = write!(out, ",action_{k}");
    }
    out.push_str(",reward\n");
    for (d, e, traj) in ds.iter() {
        let xi = &ds.domains[d].params;
        for t in 0..traj.len() {
            let _ = write!(out, "{d},{e},{t}");
            for p in xi {
                let _ = write!(out, ",{p}");
            }
            for v in traj.obs(t).iter().chain(traj.action(t)) {
                let _ = write!(out, ",{}", *v as f32);
            }
            let _ = writeln!(out, ",{}", traj.rewards[t] as f32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyncore::dataset::{generate_dataset, grid_domains};

    #[test]
    fn round_trip_equals_quantized() {
        let grid = grid_domains(EnvId::Push1D, 3);
        let ds = generate_dataset(EnvId::Push1D, &grid, 2, 24, 8).unwrap();
        let bytes = dataset_to_bytes(&ds);
        assert_eq!(&bytes[..4], b"DADP");
        let back = dataset_from_bytes(&bytes).unwrap();
        assert_eq!(back, ds.quantized());
        assert_eq!(dataset_to_bytes(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let grid = grid_domains(EnvId::BallDrop, 2);
        let ds = generate_dataset(EnvId::BallDrop, &grid, 2, 20, 1).unwrap();
        let b = dataset_to_bytes(&ds);
        let word = |i: usize| u32::from_le_bytes(b[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        assert_eq!(word(0), DATASET_VERSION);
        assert_eq!(word(1), 0);
        assert_eq!((word(2), word(3), word(4), word(5)), (1, 0, 1, 2));
        let g0 = f64::from_le_bytes(b[28..36].try_into().unwrap());
        assert_eq!(g0, -2.0);
        // 2 domains * (8 + 4 + 2 * (4 + 20 * 2 * 4))
        assert_eq!(b.len(), 28 + 2 * (8 + 4 + 2 * (4 + 20 * 8)));
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let grid = grid_domains(EnvId::Push1D, 2);
        let ds = generate_dataset(EnvId::Push1D, &grid, 2, 20, 1).unwrap();
        let csv = dataset_to_csv(&ds);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "domain_index,episode_index,step,xi_0,xi_1,obs_0,action_0,reward"
        );
        assert_eq!(lines.count(), 4 * 2 * 20);
    }

    #[test]
    fn rejects_garbage() {
        assert!(dataset_from_bytes(b"NOPE").is_err());
        let grid = grid_domains(EnvId::Push1D, 2);
        let ds = generate_dataset(EnvId::Push1D, &grid, 2, 20, 1).unwrap();
        let mut bytes = dataset_to_bytes(&ds);
        bytes.push(0);
        assert!(dataset_from_bytes(&bytes).is_err());
    }
}
