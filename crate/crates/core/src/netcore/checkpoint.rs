//! `DSM1` model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DSM1"
//! 4       4     u32 version (= 1)
//! 8       1     u8 topology (0 = dual-stream, 1 = single-stream)
//! 9       3     zero padding
//! 12      24    u32 d_emb, d_shared, d_feat, c_true, c_disg, depth
//! 36      8     f64 dropout probability
//! 44      ...   f64 parameters in declaration order
//! ```
//!
//! Parameters follow the model's declaration order: masked adapter, true
//! adapter, disguised adapter (dual-stream only), true head, disguised head
//! (dual-stream only). Each adapter block stores weight (`out × in`,
//! row-major), bias, BatchNorm scale, shift, running mean, running variance;
//! each head stores weight then bias. BatchNorm momentum and epsilon are the
//! fixed library constants and are not stored.

use std::path::Path;

use thiserror::Error;

use super::adapter::{AdapterBlock, Linear};
use super::model::{Adapter, DsidModel, ModelDims, Topology};

pub const MODEL_MAGIC: &[u8; 4] = b"DSM1";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("bad magic at byte 0")]
    BadMagic,
    #[error("unsupported checkpoint version {0} at byte 4")]
    Version(u32),
    #[error("unknown topology tag {0} at byte 8")]
    Topology(u8),
    #[error("invalid header at byte {offset}: {reason}")]
    Header { offset: usize, reason: String },
    #[error("truncated checkpoint: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("{0} trailing bytes after parameters")]
    Trailing(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e.to_string())
    }
}

fn adapters(model: &DsidModel) -> Vec<&Adapter> {
    let mut v = vec![&model.masked_adapter, &model.true_adapter];
    v.extend(model.disguised_adapter.as_ref());
    v
}

fn heads(model: &DsidModel) -> Vec<&Linear> {
    let mut v = vec![&model.true_head];
    v.extend(model.disguised_head.as_ref());
    v
}

pub fn encode_model(model: &DsidModel) -> Vec<u8> {
    let d = model.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.parameter_count() * 2);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(match model.topology() {
        Topology::DualStream => 0,
        Topology::SingleStream => 1,
    });
    out.extend_from_slice(&[0, 0, 0]);
    for v in [d.d_emb, d.d_shared, d.d_feat, d.c_true, d.c_disg, d.depth] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let p = model.masked_adapter.blocks[0].dropout_p;
    out.extend_from_slice(&p.to_le_bytes());

    let mut put = |xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for a in adapters(model) {
        for b in &a.blocks {
            put(b.linear.weight.as_slice());
            put(&b.linear.bias);
            put(&b.bn.gamma);
            put(&b.bn.beta);
            put(&b.bn.running_mean);
            put(&b.bn.running_var);
        }
    }
    for h in heads(model) {
        put(h.weight.as_slice());
        put(&h.bias);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<(), CheckpointError> {
        for v in dst {
            *v = self.f64()?;
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<DsidModel, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let topo = c.take(4)?[0];
    let topology = match topo {
        0 => Topology::DualStream,
        1 => Topology::SingleStream,
        t => return Err(CheckpointError::Topology(t)),
    };
    let mut dims = [0usize; 6];
    for v in dims.iter_mut() {
        *v = c.u32()? as usize;
    }
    let dims = ModelDims {
        d_emb: dims[0],
        d_shared: dims[1],
        d_feat: dims[2],
        c_true: dims[3],
        c_disg: dims[4],
        depth: dims[5],
    };
    dims.validate().map_err(|e| CheckpointError::Header {
        offset: 12,
        reason: e.to_string(),
    })?;
    let dropout_p = c.f64()?;
    let mut model = DsidModel::init(dims, topology, dropout_p, 0).map_err(|e| CheckpointError::Header {
        offset: 36,
        reason: e.to_string(),
    })?;

    let read_block = |c: &mut Cursor, b: &mut AdapterBlock| -> Result<(), CheckpointError> {
        c.fill(b.linear.weight.as_mut_slice())?;
        c.fill(&mut b.linear.bias)?;
        c.fill(&mut b.bn.gamma)?;
        c.fill(&mut b.bn.beta)?;
        c.fill(&mut b.bn.running_mean)?;
        c.fill(&mut b.bn.running_var)
    };
    for b in &mut model.masked_adapter.blocks {
        read_block(&mut c, b)?;
    }
    for b in &mut model.true_adapter.blocks {
        read_block(&mut c, b)?;
    }
    if let Some(a) = &mut model.disguised_adapter {
        for b in &mut a.blocks {
            read_block(&mut c, b)?;
        }
    }
    let mut read_head = |h: &mut Linear| -> Result<(), CheckpointError> {
        c.fill(h.weight.as_mut_slice())?;
        c.fill(&mut h.bias)
    };
    read_head(&mut model.true_head)?;
    if let Some(h) = &mut model.disguised_head {
        read_head(h)?;
    }
    if c.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - c.pos));
    }
    Ok(model)
}

pub fn save_model(model: &DsidModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DsidModel, CheckpointError> {
    decode_model(&std::fs::read(path)?)
}
