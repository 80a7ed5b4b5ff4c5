//! Little-endian helpers shared by the on-disk formats.
//!
//! Every file starts with a 4-byte magic and a `u32` version. Files are read
//! whole into memory and parsed with [`Reader`], which turns short reads into
//! [`Error::Truncated`] so callers can report expected vs. actual counts.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u32) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(version)
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let mut buf = vec![0u8; values.len() * 4];
    LittleEndian::write_f32_into(values, &mut buf);
    w.write_all(&buf)
}

pub(crate) fn write_u32s<W: Write>(w: &mut W, values: &[u32]) -> io::Result<()> {
    let mut buf = vec![0u8; values.len() * 4];
    LittleEndian::write_u32_into(values, &mut buf);
    w.write_all(&buf)
}

pub(crate) fn write_u64s<W: Write>(w: &mut W, values: &[u64]) -> io::Result<()> {
    let mut buf = vec![0u8; values.len() * 8];
    LittleEndian::write_u64_into(values, &mut buf);
    w.write_all(&buf)
}

/// Write through a temp file so a crash never leaves a half-written artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                what: self.what,
                unit: "bytes",
                expected: (self.pos + n) as u64,
                actual: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Check magic and version; returns the version.
    pub fn header(&mut self, magic: &[u8; 4], supported: u32) -> Result<u32> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::format(
                self.what,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = self.u32()?;
        if version != supported {
            return Err(Error::format(
                self.what,
                format!("unsupported version {version}, this build reads version {supported}"),
            ));
        }
        Ok(version)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        let mut out = vec![0f32; n];
        LittleEndian::read_f32_into(bytes, &mut out);
        Ok(out)
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let bytes = self.take(n * 4)?;
        let mut out = vec![0u32; n];
        LittleEndian::read_u32_into(bytes, &mut out);
        Ok(out)
    }

    pub fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let bytes = self.take(n * 8)?;
        let mut out = vec![0u64; n];
        LittleEndian::read_u64_into(bytes, &mut out);
        Ok(out)
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                self.what,
                format!("{} trailing bytes after payload", self.remaining()),
            ));
        }
        Ok(())
    }
}
