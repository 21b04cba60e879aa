//! Little-endian binary container used by model files.
//!
//! ```text
//! magic      4 bytes   (e.g. "EVSR")
//! version    u32
//! checksum   u32 length + UTF-8 (config checksum, 16 hex digits)
//! payload    u64 length + bytes
//! ```
//!
//! Payload fields are written with [`Writer`]: integers as little-endian
//! u32/u64, reals as little-endian IEEE-754 f64, strings and vectors with a
//! u32 length prefix.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn usize(&mut self, v: usize) -> &mut Self {
        self.u64(v as u64)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u32(v.len() as u32);
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflow".into()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8".into()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub fn encode_container(magic: &[u8; 4], checksum: &str, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(magic);
    w.u32(FORMAT_VERSION).str(checksum).bytes(payload);
    w.into_inner()
}

/// Returns `(checksum, payload)`.
pub fn decode_container<'a>(magic: &[u8; 4], data: &'a [u8]) -> Result<(String, &'a [u8])> {
    let mut r = Reader::new(data);
    let got = r.take(4)?;
    if got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let checksum = r.str()?;
    let payload = r.bytes()?;
    r.finish()?;
    Ok((checksum, payload))
}

pub fn write_file(path: impl AsRef<Path>, magic: &[u8; 4], checksum: &str, payload: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_container(magic, checksum, payload)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut w = Writer::new();
        w.u8(7).u32(9).f64(-0.0).str("héllo").f64s(&[1.5, f64::MIN_POSITIVE]);
        let payload = w.into_inner();
        let bytes = encode_container(b"TEST", "00ff", &payload);
        let (sum, body) = decode_container(b"TEST", &bytes).unwrap();
        assert_eq!(sum, "00ff");
        let mut r = Reader::new(body);
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 9);
        assert_eq!(r.f64().unwrap().to_bits(), (-0.0f64).to_bits());
        assert_eq!(r.str().unwrap(), "héllo");
        assert_eq!(r.f64s().unwrap(), vec![1.5, f64::MIN_POSITIVE]);
        r.finish().unwrap();
        assert!(decode_container(b"NOPE", &bytes).is_err());
        assert!(decode_container(b"TEST", &bytes[..bytes.len() - 1]).is_err());
    }
}
