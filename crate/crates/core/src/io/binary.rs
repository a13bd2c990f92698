use ndarray::{Array2, ArrayView2};
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{AlbmError, Result};

/// Little-endian writer for the checkpoint formats.
#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> &mut Self {
        self.buf.extend_from_slice(magic);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    /// Row-major float32.
    pub fn matrix(&mut self, m: ArrayView2<f64>) -> &mut Self {
        for &x in m.iter() {
            self.buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        self
    }

    pub fn json_trailer<T: Serialize>(&mut self, trailer: &T) -> Result<&mut Self> {
        self.buf.extend_from_slice(&serde_json::to_vec(trailer)?);
        Ok(self)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                AlbmError::Format(format!(
                    "unexpected end of file at byte {} (need {n} more)",
                    self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(AlbmError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| AlbmError::Format("matrix size overflow".into()))?;
        let raw = self.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized above"))
    }

    /// Parses everything left as JSON.
    pub fn json_trailer<T: DeserializeOwned>(&mut self) -> Result<T> {
        let rest = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        serde_json::from_slice(rest)
            .map_err(|e| AlbmError::Format(format!("bad JSON trailer: {e}")))
    }
}
