//! Binary file formats.
//!
//! Both formats are little-endian with a four-byte magic and a `u32`
//! version. Matrices are stored row-major as `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"ELMW";
pub const EMBEDDING_VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        let bytes = self.take(n)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} exceeds u32")))
}

/// `ELMW` embedding table.
pub fn embedding_to_bytes(m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 4 * m.data().len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    put_u32(&mut out, EMBEDDING_VERSION);
    put_u32(&mut out, dim_u32(m.rows(), "rows")?);
    put_u32(&mut out, dim_u32(m.cols(), "dim")?);
    put_matrix(&mut out, m);
    Ok(out)
}

pub fn embedding_from_bytes(buf: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(buf);
    r.magic(EMBEDDING_MAGIC)?;
    let version = r.u32()?;
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!(
            "unsupported embedding version {version}"
        )));
    }
    let rows = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let m = r.matrix(rows, dim)?;
    r.finish()?;
    Ok(m)
}

pub fn write_embedding(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, embedding_to_bytes(m)?)?;
    Ok(())
}

pub fn read_embedding(path: &Path) -> Result<Matrix> {
    embedding_from_bytes(&std::fs::read(path)?)
}

/// Round `m` to the precision kept on disk.
pub fn to_stored_precision(m: &Matrix) -> Matrix {
    let data = m.data().iter().map(|&v| f64::from(v as f32)).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}
