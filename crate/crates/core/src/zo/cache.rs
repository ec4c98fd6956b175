//! Versioned binary persistence for [`HessianEstimate`].
//!
//! Layout (little endian): magic `WR2LHESS`, format version `u32`, dimension
//! `u32`, sigma `f64`, evaluations `u64`, seed `u64`, eigenvalue floor `f64`,
//! regularized flag `u8`, the matrix in row-major `f64`, then the SHA-256 of
//! everything before it.

use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::HessianEstimate;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WR2LHESS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 8 + 8 + 1;
const DIGEST_LEN: usize = 32;

impl HessianEstimate {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + d * d * 8 + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&self.sigma.to_le_bytes());
        out.extend_from_slice(&(self.n_used as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.min_eig_floor.to_le_bytes());
        out.push(self.regularized as u8);
        for i in 0..d {
            for j in 0..d {
                out.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let what = "Hessian cache";
        if bytes.len() < HEADER_LEN + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Format(format!("{what}: not a Hessian cache file")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum(what.into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Format(format!(
                "{what}: unsupported version {version}"
            )));
        }
        let d = u32_at(12) as usize;
        if body.len() != HEADER_LEN + d * d * 8 {
            return Err(Error::Format(format!("{what}: truncated matrix")));
        }
        let sigma = f64_at(16);
        let n_used = u64_at(24) as usize;
        let seed = u64_at(32);
        let min_eig_floor = f64_at(40);
        let regularized = body[48] != 0;
        let matrix = DMatrix::from_fn(d, d, |i, j| f64_at(HEADER_LEN + (i * d + j) * 8));
        Ok(Self {
            matrix,
            n_used,
            regularized,
            min_eig_floor,
            sigma,
            seed,
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

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HessianEstimate {
        HessianEstimate {
            matrix: DMatrix::from_row_slice(2, 2, &[1.5, 0.25, 0.25, 3.0]),
            n_used: 400,
            regularized: true,
            min_eig_floor: 3e-3,
            sigma: 0.05,
            seed: 17,
        }
    }

    #[test]
    fn round_trip() {
        let h = sample();
        assert_eq!(HessianEstimate::from_bytes(&h.to_bytes()).unwrap(), h);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[HEADER_LEN + 3] ^= 0x40;
        assert!(matches!(
            HessianEstimate::from_bytes(&bytes),
            Err(Error::Checksum(_))
        ));
        assert!(matches!(
            HessianEstimate::from_bytes(b"nonsense"),
            Err(Error::Format(_))
        ));
    }
}
