//! Binary checkpoints of LNS network state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "QLNSCKPT"
//! version   u32      1
//! T, F      u32, u32
//! zero mode u32      0 = zero flag, 1 = smallest value
//! d_max     u32
//! spec hash 32 bytes SHA-256 of the network spec JSON
//! epoch     u32
//! count     u32      number of tensors
//! per tensor: ndim u32, dims u32 * ndim, then one u32 encoded scalar per element
//! ```

use std::fs;
use std::path::Path;

use crate::error::{LnsError, Result};
use crate::format::{LnsFormat, ZeroMode};
use crate::nn::{LnsArith, Network};
use crate::scalar::{decode, encode};

const MAGIC: &[u8; 8] = b"QLNSCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format: LnsFormat,
    pub spec_hash: [u8; 32],
    pub epoch: u32,
    /// `(shape, encoded elements)` per state tensor.
    pub tensors: Vec<(Vec<usize>, Vec<u32>)>,
}

fn put(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LnsError::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Checkpoint {
    pub fn from_network(net: &Network<LnsArith>, epoch: u32) -> Self {
        let fmt = *net.arith().format();
        Checkpoint {
            format: fmt,
            spec_hash: net.spec().hash(),
            epoch,
            tensors: net
                .state()
                .into_iter()
                .map(|t| {
                    (
                        t.shape().to_vec(),
                        t.data().iter().map(|&v| encode(v, &fmt)).collect(),
                    )
                })
                .collect(),
        }
    }

    /// Loads the stored state into `net`, which must have the same format
    /// and network spec.
    pub fn restore(&self, net: &mut Network<LnsArith>) -> Result<()> {
        let fmt = *net.arith().format();
        if fmt != self.format {
            return Err(LnsError::FormatMismatch {
                expected: fmt.to_string(),
                found: self.format.to_string(),
            });
        }
        if net.spec().hash() != self.spec_hash {
            return Err(LnsError::Checkpoint(
                "network spec differs from checkpoint".into(),
            ));
        }
        let state = net.state_mut();
        if state.len() != self.tensors.len() {
            return Err(LnsError::Checkpoint("tensor count differs".into()));
        }
        for (t, (shape, bits)) in state.into_iter().zip(&self.tensors) {
            if t.shape() != shape.as_slice() {
                return Err(LnsError::Checkpoint(format!(
                    "tensor shape {shape:?} does not match {:?}",
                    t.shape()
                )));
            }
            for (slot, &b) in t.data_mut().iter_mut().zip(bits) {
                *slot = decode(b, &fmt);
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put(&mut out, VERSION);
        put(&mut out, self.format.total_bits);
        put(&mut out, self.format.frac_bits);
        put(
            &mut out,
            match self.format.zero_mode {
                ZeroMode::ZeroFlag => 0,
                ZeroMode::SmallestValue => 1,
            },
        );
        put(&mut out, self.format.d_max);
        out.extend_from_slice(&self.spec_hash);
        put(&mut out, self.epoch);
        put(&mut out, self.tensors.len() as u32);
        for (shape, bits) in &self.tensors {
            put(&mut out, shape.len() as u32);
            for &d in shape {
                put(&mut out, d as u32);
            }
            for &b in bits {
                put(&mut out, b);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(LnsError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(LnsError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let (t, f) = (r.u32()?, r.u32()?);
        let mode = match r.u32()? {
            0 => ZeroMode::ZeroFlag,
            1 => ZeroMode::SmallestValue,
            m => return Err(LnsError::Checkpoint(format!("unknown zero mode {m}"))),
        };
        let format = LnsFormat::new(t, f)?
            .with_zero_mode(mode)
            .with_d_max(r.u32()?)?;
        let spec_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let epoch = r.u32()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n > (bytes.len() - r.pos) / 4 {
                return Err(LnsError::Checkpoint("truncated file".into()));
            }
            let bits = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            tensors.push((shape, bits));
        }
        if r.pos != bytes.len() {
            return Err(LnsError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            format,
            spec_hash,
            epoch,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
