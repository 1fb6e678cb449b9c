//! Versioned binary checkpoint container.
//!
//! Layout (all integers and floats little-endian, in this exact order):
//!
//! ```text
//! magic            8  bytes  "SGRCKPT1"
//! config_len       u32       length of the TOML-encoded run config
//! config           bytes     RunConfig as TOML (the documented config format)
//! n_users          u32
//! n_items          u32
//! feature_dim      u32
//! dim              u32
//! params_len       u32
//! params           f64 × params_len
//! kappa_u, kappa_i f64, f64
//! users            f64 × n_users × dim
//! items            f64 × n_items × dim
//! last_time_users  f64 × n_users
//! last_time_items  f64 × n_items
//! history_len      u32
//! history          (u32 interval, f64 kappa_u, f64 kappa_i) × history_len
//! ```
//!
//! The reader validates every length against the remaining input before
//! allocating, so arbitrary bytes fail cleanly instead of panicking.

use std::path::Path;

use thiserror::Error;

use crate::config::RunConfig;
use crate::model::{CurvaturePair, EmbeddingTable, ModelDims, ParamLayout, ParameterSet};

pub const MAGIC: &[u8; 8] = b"SGRCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a checkpoint file or unsupported version")]
    BadMagic,
    #[error("truncated checkpoint: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("embedded config: {0}")]
    Config(#[from] crate::config::ConfigError),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// A trained model: parameters, the rolled-forward embedding table, the
/// curvature trajectory of the final epoch, and the full run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub n_users: usize,
    pub n_items: usize,
    pub feature_dim: usize,
    pub params: Vec<f64>,
    pub table: EmbeddingTable,
    pub history: Vec<CurvaturePair>,
}

impl Checkpoint {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            dim: self.config.dim,
            feature_dim: self.feature_dim,
            curv_width: self.config.dim.max(8),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.dims())
    }

    pub fn parameter_set(&self) -> ParameterSet<f64> {
        self.layout().build(&self.params)
    }

    pub fn write_to_vec(&self) -> Result<Vec<u8>> {
        let config_toml = toml::to_string(&self.config)
            .map_err(|e| CheckpointError::Malformed(format!("config serialization: {e}")))?;
        let dim = self.config.dim;
        let mut out = Vec::with_capacity(
            64 + config_toml.len() + 8 * (self.params.len() + (self.n_users + self.n_items) * (dim + 1)),
        );
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, config_toml.len() as u32);
        out.extend_from_slice(config_toml.as_bytes());
        put_u32(&mut out, self.n_users as u32);
        put_u32(&mut out, self.n_items as u32);
        put_u32(&mut out, self.feature_dim as u32);
        put_u32(&mut out, dim as u32);
        put_u32(&mut out, self.params.len() as u32);
        for &p in &self.params {
            put_f64(&mut out, p);
        }
        put_f64(&mut out, self.table.kappa_u);
        put_f64(&mut out, self.table.kappa_i);
        for row in self.table.users.iter().chain(&self.table.items) {
            debug_assert_eq!(row.len(), dim);
            for &v in row {
                put_f64(&mut out, v);
            }
        }
        for &t in self.table.last_time_users.iter().chain(&self.table.last_time_items) {
            put_f64(&mut out, t);
        }
        put_u32(&mut out, self.history.len() as u32);
        for h in &self.history {
            put_u32(&mut out, h.interval);
            put_f64(&mut out, h.kappa_u);
            put_f64(&mut out, h.kappa_i);
        }
        Ok(out)
    }

    pub fn read_from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let config_len = r.u32()? as usize;
        let config_bytes = r.take(config_len)?;
        let config_text = std::str::from_utf8(config_bytes)
            .map_err(|e| CheckpointError::Malformed(format!("config not UTF-8: {e}")))?;
        let config = RunConfig::from_toml(config_text)?;
        let n_users = r.u32()? as usize;
        let n_items = r.u32()? as usize;
        let feature_dim = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim != config.dim {
            return Err(CheckpointError::Malformed(format!(
                "dim field {dim} disagrees with config dim {}",
                config.dim
            )));
        }
        let params_len = r.u32()? as usize;
        let expected = ParamLayout::new(ModelDims {
            dim,
            feature_dim,
            curv_width: dim.max(8),
        })
        .total();
        if params_len != expected {
            return Err(CheckpointError::Malformed(format!(
                "parameter count {params_len} does not match layout total {expected}"
            )));
        }
        let params = r.f64_vec(params_len)?;
        let kappa_u = r.f64()?;
        let kappa_i = r.f64()?;
        let read_rows = |count: usize, r: &mut Reader| -> Result<Vec<Vec<f64>>> {
            (0..count).map(|_| r.f64_vec(dim)).collect()
        };
        let users = read_rows(n_users, &mut r)?;
        let items = read_rows(n_items, &mut r)?;
        let last_time_users = r.f64_vec(n_users)?;
        let last_time_items = r.f64_vec(n_items)?;
        let history_len = r.u32()? as usize;
        // 20 bytes per record; reject lengths the buffer cannot hold.
        if history_len > r.remaining() / 20 {
            return Err(CheckpointError::Truncated { needed: history_len * 20 - r.remaining() });
        }
        let history = (0..history_len)
            .map(|_| {
                Ok(CurvaturePair { interval: r.u32()?, kappa_u: r.f64()?, kappa_i: r.f64()? })
            })
            .collect::<Result<Vec<_>>>()?;
        if r.remaining() != 0 {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(Checkpoint {
            config,
            n_users,
            n_items,
            feature_dim,
            params,
            table: EmbeddingTable {
                users,
                items,
                kappa_u,
                kappa_i,
                last_time_users,
                last_time_items,
            },
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.write_to_vec()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(CheckpointError::Truncated { needed: n - self.remaining() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.remaining() / 8 {
            return Err(CheckpointError::Truncated { needed: n * 8 - self.remaining() });
        }
        (0..n).map(|_| self.f64()).collect()
    }
}
