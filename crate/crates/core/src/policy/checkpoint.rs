//! Versioned binary persistence for a trained actor and critic.
//!
//! Layout (little endian): magic `WR2LPOLI`, format version `u32`, head tag
//! `u8` (0 categorical, 1 Gaussian) followed by its size and bounds, the actor
//! layer sizes and parameters, the log-std vector, the critic layer sizes and
//! parameters, then the SHA-256 of everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::head::{Critic, HeadKind, PolicyParams};
use super::mlp::Mlp;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WR2LPOLI";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const WHAT: &str = "policy checkpoint";

/// Actor and critic saved together.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyParams,
    pub critic: Critic,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn mlp(&mut self, m: &Mlp) {
        self.u32(m.sizes().len());
        for s in m.sizes() {
            self.u32(*s);
        }
        self.f64s(m.params());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Format(format!("{WHAT}: truncated or malformed body"))
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn mlp(&mut self) -> Result<Mlp> {
        let n = self.u32()?;
        let sizes = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let params = self.f64s()?;
        if sizes.len() < 2 {
            return Err(truncated());
        }
        Mlp::from_parts(sizes, params).ok_or_else(|| {
            Error::Format(format!(
                "{WHAT}: parameter count does not match architecture"
            ))
        })
    }
}

impl Checkpoint {
    pub fn new(policy: PolicyParams, critic: Critic) -> Self {
        Self { policy, critic }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        match &self.policy.kind {
            HeadKind::Categorical { n } => {
                w.0.push(0);
                w.u32(*n);
            }
            HeadKind::Gaussian { low, high } => {
                w.0.push(1);
                w.f64s(low);
                w.f64s(high);
            }
        }
        w.mlp(&self.policy.actor);
        w.f64s(&self.policy.log_std);
        w.mlp(&self.critic.net);
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Format(format!("{WHAT}: not a policy checkpoint")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum(WHAT.into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Format(format!(
                "{WHAT}: unsupported version {version}"
            )));
        }
        let kind = match r.u8()? {
            0 => HeadKind::Categorical { n: r.u32()? },
            1 => {
                let low = r.f64s()?;
                let high = r.f64s()?;
                HeadKind::Gaussian { low, high }
            }
            t => return Err(Error::Format(format!("{WHAT}: unknown head tag {t}"))),
        };
        let actor = r.mlp()?;
        let log_std = r.f64s()?;
        let critic = Critic { net: r.mlp()? };
        let out_dim = match &kind {
            HeadKind::Categorical { n } => *n,
            HeadKind::Gaussian { low, high } => {
                if low.len() != high.len() || log_std.len() != low.len() {
                    return Err(Error::Format(format!("{WHAT}: inconsistent action bounds")));
                }
                low.len()
            }
        };
        if actor.output_dim() != out_dim
            || critic.net.output_dim() != 1
            || critic.net.input_dim() != actor.input_dim()
            || r.pos != body.len()
        {
            return Err(Error::Format(format!("{WHAT}: inconsistent architecture")));
        }
        Ok(Self {
            policy: PolicyParams {
                actor,
                log_std,
                kind,
            },
            critic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
