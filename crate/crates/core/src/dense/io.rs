//! Datastore file layout (little-endian):
//!
//! ```text
//! "DRSD" | version u32 | key_dim u32 | value_len u32 | count u64
//! keys   count * key_dim f32
//! values count * value_len u32
//! ```
//!
//! An inverted index is stored next to it in its own file and is optional;
//! it can always be rebuilt from the keys.

use std::fs;
use std::path::Path;

use super::{DenseDatastore, IvfIndex};
use crate::binfmt::{self, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DRSD";
const VERSION: u32 = 1;
const WHAT: &str = "dense datastore";

impl DenseDatastore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf =
            Vec::with_capacity(24 + 4 * (self.raw_keys().len() + self.raw_values().len()));
        binfmt::write_header(&mut buf, MAGIC, VERSION).unwrap();
        buf.extend_from_slice(&(self.key_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.value_len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        binfmt::write_f32s(&mut buf, self.raw_keys()).unwrap();
        binfmt::write_u32s(&mut buf, self.raw_values()).unwrap();
        buf
    }

    /// Parse a datastore; the search index starts out exact.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, WHAT);
        r.header(MAGIC, VERSION)?;
        let key_dim = r.u32()? as usize;
        let value_len = r.u32()? as usize;
        let count = r.u64()?;
        if key_dim == 0 || value_len == 0 {
            return Err(Error::format(WHAT, "zero key dimension or value length"));
        }
        let record_bytes = 4 * (key_dim + value_len) as u64;
        let available = r.remaining() as u64;
        let needed = count.checked_mul(record_bytes);
        if needed.is_none_or(|n| available < n) {
            return Err(Error::Truncated {
                what: WHAT,
                unit: "records",
                expected: count,
                actual: available / record_bytes,
            });
        }
        let count = count as usize;
        let keys = r.f32s(count * key_dim)?;
        let values = r.u32s(count * value_len)?;
        r.finish()?;
        DenseDatastore::from_parts(key_dim, value_len, keys, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binfmt::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Write the current index if it has a persistent form; returns whether
    /// anything was written.
    pub fn save_index(&self, path: &Path) -> Result<bool> {
        match self.index().to_bytes() {
            Some(bytes) => {
                binfmt::write_atomic(path, &bytes)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    pub fn load_ivf_index(&mut self, path: &Path) -> Result<()> {
        let index = IvfIndex::from_bytes(&fs::read(path)?, self.len())?;
        self.set_index(Box::new(index));
        Ok(())
    }
}
