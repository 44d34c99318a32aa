//! Binary MPS checkpoints.
//!
//! Layout, all integers little-endian:
//! `"MTCM"`, version `u32`, `N u32`, `d u32`, then per site `left u32`,
//! `right u32` and `left·d·right` complex doubles (re, im) in row-major
//! `[left, d, right]` order, then a CRC-32 of every preceding byte.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::lattice::LOCAL_DIM;
use crate::mps::MatrixProductState;
use crate::tensor::{DenseTensor, TruncationPolicy, C64};

pub const MAGIC: &[u8; 4] = b"MTCM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub fn encode(psi: &MatrixProductState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for x in [VERSION, psi.len() as u32, LOCAL_DIM as u32] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for t in psi.tensors() {
        let s = t.shape();
        out.extend_from_slice(&(s[0] as u32).to_le_bytes());
        out.extend_from_slice(&(s[2] as u32).to_le_bytes());
        for z in t.data() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.0.len() < n {
            return Err(CheckpointError::Malformed("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Inverse of [`encode`]. The loaded state has no recorded orthogonality center.
pub fn decode(bytes: &[u8], policy: TruncationPolicy) -> Result<MatrixProductState, CheckpointError> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let mut c = Cursor(&body[4..]);
    let version = c.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let n = c.u32()? as usize;
    let d = c.u32()? as usize;
    if d != LOCAL_DIM {
        return Err(CheckpointError::Malformed(format!("local dimension {d}")));
    }
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, r) = (c.u32()? as usize, c.u32()? as usize);
        let len = l
            .checked_mul(d)
            .and_then(|x| x.checked_mul(r))
            .filter(|&x| x.saturating_mul(16) <= c.0.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("site shape {l}x{d}x{r}")))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let re = c.f64()?;
            data.push(C64::new(re, c.f64()?));
        }
        tensors.push(DenseTensor::new(vec![l, d, r], data).map_err(|e| CheckpointError::Malformed(e.to_string()))?);
    }
    if !c.0.is_empty() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", c.0.len())));
    }
    MatrixProductState::from_tensors(tensors, policy).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

pub fn write_to(psi: &MatrixProductState, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(&encode(psi))?;
    Ok(())
}

pub fn read_from(mut r: impl Read, policy: TruncationPolicy) -> Result<MatrixProductState, CheckpointError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes, policy)
}

/// Writes through a temporary file and a rename, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn save(psi: &MatrixProductState, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, encode(psi))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path, policy: TruncationPolicy) -> Result<MatrixProductState, CheckpointError> {
    decode(&std::fs::read(path)?, policy)
}
