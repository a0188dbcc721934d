//! `GWKG` binary vector file: 4-byte magic, `u32` count, `u32` dim, then
//! `count * dim` little-endian `f32` values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"GWKG";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Sidecar {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != count * dim {
            return Err(Error::Sidecar(format!(
                "expected {} values for {count}x{dim}, got {}",
                count * dim,
                data.len()
            )));
        }
        u32::try_from(count).map_err(|_| Error::Sidecar("count exceeds u32".into()))?;
        u32::try_from(dim).map_err(|_| Error::Sidecar("dim exceeds u32".into()))?;
        Ok(Self { count, dim, data })
    }

    /// Narrows each row to `f32`. Fails if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    context: format!("sidecar row {i}"),
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(m.rows(), m.cols(), data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        (i < self.count).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn row_f64(&self, i: usize) -> Option<Vec<f64>> {
        self.row(i).map(|r| r.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.count,
            self.dim,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Sidecar("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Sidecar("bad magic (expected GWKG)".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Sidecar("header overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Sidecar(format!(
                "length {} does not match header ({count} x {dim})",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { count, dim, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Sidecar(msg) => Error::Sidecar(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.encode())
    }
}
