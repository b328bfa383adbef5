//! Network checkpoint file.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      "DADPCKPT"
//! version    u32
//! module     u32 length + UTF-8 tag ("encoder", "policy", ...)
//! nets       u32 count, then per network:
//!              name       u32 length + UTF-8
//!              dims       u32 count + u32 layer widths
//!              params     f32 blobs, per layer weight (fan_in x fan_out,
//!                         row-major) then bias
//! metadata   u32 length + UTF-8 JSON object (seed, config hash, ...)
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::mlp::{Dense, Mlp};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DADPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub module: String,
    pub nets: Vec<(String, Mlp)>,
    pub metadata: Value,
}

impl Checkpoint {
    pub fn new(module: impl Into<String>, metadata: Value) -> Self {
        Self {
            module: module.into(),
            nets: Vec::new(),
            metadata,
        }
    }

    pub fn with_net(mut self, name: impl Into<String>, net: &Mlp) -> Self {
        self.nets.push((name.into(), net.clone()));
        self
    }

    pub fn net(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::format("checkpoint", format!("missing network {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.module);
        w.len_u32(self.nets.len());
        for (name, net) in &self.nets {
            w.str(name);
            let dims = net.layer_dims();
            w.len_u32(dims.len());
            for d in dims {
                w.len_u32(d);
            }
            for p in net.params() {
                w.f32(p as f32);
            }
        }
        w.str(&self.metadata.to_string());
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let module = r.str()?;
        let count = r.usize()?;
        let mut nets = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?;
            let ndims = r.usize()?;
            if ndims < 2 {
                return Err(Error::format("checkpoint", format!("network {name:?} has {ndims} widths")));
            }
            let dims = (0..ndims).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let mut layers = Vec::with_capacity(ndims - 1);
            for w in dims.windows(2) {
                let mut weight = Array2::zeros((w[0], w[1]));
                for v in weight.iter_mut() {
                    *v = r.f32()? as f64;
                }
                let mut bias = Array1::zeros(w[1]);
                for v in bias.iter_mut() {
                    *v = r.f32()? as f64;
                }
                layers.push(Dense { weight, bias });
            }
            nets.push((name, Mlp::from_layers(layers)?));
        }
        let meta = r.str()?;
        r.finish()?;
        let metadata =
            serde_json::from_str(&meta).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        Ok(Self {
            module,
            nets,
            metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
