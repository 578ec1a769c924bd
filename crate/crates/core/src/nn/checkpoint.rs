//! `LASN` checkpoint container shared by networks and supernets.
//!
//! Layout (little-endian): magic `LASN`, version `u8`, kind `u8`
//! (0 network, 1 supernet), 32-byte spec digest, `u16` length + assignment
//! string, supernet only: `u8` group count + one `u32` slot count per group,
//! `u32` parameter-block count then per block `u32` length + `f32` values in
//! declaration order, `u32` BN count then per BN `u32` channels + running
//! mean + running variance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Layers, ModelParams};
use super::network::{Model, Network};
use super::spec::SearchSpaceSpec;
use crate::assignments::LayerAssignment;
use crate::error::{LasError, Result};

const MAGIC: &[u8; 4] = b"LASN";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Network = 0,
    Supernet = 1,
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn encode(kind: CheckpointKind, spec: &SearchSpaceSpec, label: &LayerAssignment, layers: &Layers<'_, f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&spec.digest());
    let s = label.to_string();
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    if kind == CheckpointKind::Supernet {
        out.push(label.len() as u8);
        for &c in label.groups() {
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
    }
    let mut blocks: Vec<&[f32]> = Vec::new();
    layers.for_each_param(&mut |p| blocks.push(&p.value));
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        put_f32s(&mut out, b);
    }
    let bns = layers.batch_norms();
    out.extend_from_slice(&(bns.len() as u32).to_le_bytes());
    for bn in bns {
        out.extend_from_slice(&(bn.channels as u32).to_le_bytes());
        for v in bn.running_mean.iter().chain(&bn.running_var) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < self.pos + n {
            return Err(LasError::Truncated {
                what: format!("checkpoint {what}"),
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s_into(&mut self, dst: &mut [f32], what: &str) -> Result<()> {
        let raw = self.take(4 * dst.len(), what)?;
        for (d, b) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        Ok(())
    }
}

/// Decode into freshly allocated parameters shaped by `spec` and the stored
/// assignment (or slot layout).
pub(crate) fn decode(
    bytes: &[u8],
    expect: CheckpointKind,
    spec: &SearchSpaceSpec,
) -> Result<(LayerAssignment, ModelParams<f32>)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(LasError::format("not a LASN checkpoint"));
    }
    let version = c.take(1, "version")?[0];
    if version != VERSION {
        return Err(LasError::format(format!("unsupported checkpoint version {version}")));
    }
    let kind = c.take(1, "kind")?[0];
    if kind != expect as u8 {
        return Err(LasError::format(format!(
            "checkpoint kind {kind} does not match expected {}",
            expect as u8
        )));
    }
    if c.take(32, "spec digest")? != spec.digest() {
        return Err(LasError::format("checkpoint was written for a different search space"));
    }
    let len = u16::from_le_bytes(c.take(2, "assignment")?.try_into().expect("2 bytes")) as usize;
    let label: LayerAssignment = std::str::from_utf8(c.take(len, "assignment")?)
        .map_err(|_| LasError::format("assignment string is not UTF-8"))?
        .parse()?;
    if expect == CheckpointKind::Supernet {
        let n = c.take(1, "layout table")?[0] as usize;
        let mut slots = Vec::with_capacity(n);
        for _ in 0..n {
            slots.push(c.u32("layout table")?);
        }
        if slots != label.groups() {
            return Err(LasError::format("slot layout table disagrees with capacity string"));
        }
    }
    if label.len() != spec.groups {
        return Err(LasError::format(format!("assignment {label} does not fit the search space")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::<f32>::init(spec, label.groups(), &mut rng);
    let sizes = label.groups().to_vec();
    let mut layers = params.layers_mut(spec, &sizes);
    let mut block_lens = Vec::new();
    layers.for_each_param_mut(&mut |p| block_lens.push(p.len()));
    let blocks = c.u32("block count")?;
    if blocks != block_lens.len() {
        return Err(LasError::format(format!(
            "checkpoint has {blocks} parameter blocks, layout needs {}",
            block_lens.len()
        )));
    }
    let mut err = None;
    layers.for_each_param_mut(&mut |p| {
        if err.is_some() {
            return;
        }
        let r = c.u32("block length").and_then(|n| {
            if n != p.len() {
                return Err(LasError::format(format!("block of {n} values, layout needs {}", p.len())));
            }
            c.f32s_into(&mut p.value, "parameter block")
        });
        if let Err(e) = r {
            err = Some(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let bn_count = c.u32("BN count")?;
    let mut bns = layers.batch_norms_mut();
    if bn_count != bns.len() {
        return Err(LasError::format(format!("checkpoint has {bn_count} BN layers, layout needs {}", bns.len())));
    }
    for bn in bns.iter_mut() {
        let ch = c.u32("BN channels")?;
        if ch != bn.channels {
            return Err(LasError::format("BN channel count mismatch"));
        }
        c.f32s_into(&mut bn.running_mean, "BN running mean")?;
        c.f32s_into(&mut bn.running_var, "BN running variance")?;
    }
    if c.pos != bytes.len() {
        return Err(LasError::format(format!("{} trailing bytes in checkpoint", bytes.len() - c.pos)));
    }
    Ok((label, params))
}

impl Network<f32> {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        encode(CheckpointKind::Network, self.spec(), self.assignment(), &self.layers())
    }

    pub fn from_checkpoint(bytes: &[u8], spec: &SearchSpaceSpec) -> Result<Self> {
        let (a, params) = decode(bytes, CheckpointKind::Network, spec)?;
        Ok(Network::from_parts(spec.clone(), a, params))
    }
}
