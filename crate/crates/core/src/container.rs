//! Binary matrix container shared by alignment maps and model checkpoints.
//!
//! Layout: 4 magic bytes, version byte `0x01`, little-endian `u32` matrix
//! count, then for each matrix `u32` rows, `u32` cols and `rows * cols`
//! little-endian `f64` values in column-major order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const VERSION: u8 = 0x01;

pub fn encode(magic: &[u8; 4], matrices: &[&DMatrix<f64>]) -> Vec<u8> {
    let payload: usize = matrices.iter().map(|m| 8 + 8 * m.len()).sum();
    let mut out = Vec::with_capacity(9 + payload);
    out.extend_from_slice(magic);
    out.push(VERSION);
    out.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
    for m in matrices {
        out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::MalformedPayload(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    /// Reads bytes up to (and consuming) the next NUL.
    pub(crate) fn cstr(&mut self) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| Error::MalformedPayload("unterminated string".into()))?;
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::MalformedPayload(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode(magic: &[u8; 4], bytes: &[u8]) -> Result<Vec<DMatrix<f64>>> {
    let mut r = Reader::new(bytes);
    let got = r.take(4).map_err(|_| Error::MalformedHeader("missing magic".into()))?;
    if got != magic {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::MalformedHeader("matrix size overflow".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            data.push(r.f64()?);
        }
        out.push(DMatrix::from_vec(rows, cols, data));
    }
    r.finish()?;
    Ok(out)
}

pub fn write(path: &Path, magic: &[u8; 4], matrices: &[&DMatrix<f64>]) -> Result<()> {
    fs::write(path, encode(magic, matrices)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path, magic: &[u8; 4]) -> Result<Vec<DMatrix<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let a = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 0.3));
        let b = DMatrix::from_element(1, 4, -0.0);
        let bytes = encode(b"TEST", &[&a, &b]);
        let back = decode(b"TEST", &bytes).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in back[0].iter().zip(a.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back[1].iter().next().unwrap().to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let bytes = encode(b"ALNW", &[&a]);
        assert!(matches!(decode(b"TJPA", &bytes), Err(Error::MalformedHeader(_))));
        assert!(decode(b"ALNW", &bytes[..bytes.len() - 1]).is_err());
    }
}
