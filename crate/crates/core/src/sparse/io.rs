//! Sparse index file layout (little-endian):
//!
//! ```text
//! "DRSS" | version u32 | max_suffix u32 | draft_count u32 | draft_len u32
//! text_len u64 | text text_len u32 | suffix array text_len u64
//! ```

use std::fs;
use std::path::Path;

use super::{SparseIndex, SparseParams};
use crate::binfmt::{self, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DRSS";
const VERSION: u32 = 1;
const WHAT: &str = "sparse index";

impl SparseIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = self.params();
        let mut buf = Vec::with_capacity(32 + 12 * self.text().len());
        binfmt::write_header(&mut buf, MAGIC, VERSION).unwrap();
        for v in [p.max_suffix, p.draft_count, p.draft_len] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.text().len() as u64).to_le_bytes());
        binfmt::write_u32s(&mut buf, self.text()).unwrap();
        let sa: Vec<u64> = self.suffix_array().iter().map(|&p| p as u64).collect();
        binfmt::write_u64s(&mut buf, &sa).unwrap();
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, WHAT);
        r.header(MAGIC, VERSION)?;
        let params = SparseParams {
            max_suffix: r.u32()? as usize,
            draft_count: r.u32()? as usize,
            draft_len: r.u32()? as usize,
        };
        let n = r.u64()?;
        let available = r.remaining() as u64;
        if n.checked_mul(12).is_none_or(|need| available < need) {
            return Err(Error::Truncated {
                what: WHAT,
                unit: "tokens",
                expected: n,
                actual: available / 12,
            });
        }
        let n = n as usize;
        let text = r.u32s(n)?;
        let sa = r.u64s(n)?;
        r.finish()?;

        let mut seen = vec![false; n];
        for &p in &sa {
            let p = p as usize;
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::format(
                    WHAT,
                    "suffix array is not a permutation of the text",
                ));
            }
        }
        Ok(SparseIndex::from_raw(
            text,
            sa.into_iter().map(|p| p as usize).collect(),
            params,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binfmt::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::build_sparse_index;

    #[test]
    fn round_trip_and_corruption() {
        let idx = build_sparse_index(&[vec![1, 2, 3], vec![2, 3, 4, 5]], SparseParams::default())
            .unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(SparseIndex::from_bytes(&bytes).unwrap(), idx);

        match SparseIndex::from_bytes(&bytes[..bytes.len() - 20]) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, 8);
                assert_eq!(actual, 6);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        let mut dup = bytes.clone();
        let last = dup.len() - 8;
        dup[last..].copy_from_slice(&0u64.to_le_bytes());
        // position 0 appears twice unless it already was last
        if idx.suffix_array()[7] != 0 {
            assert!(matches!(
                SparseIndex::from_bytes(&dup),
                Err(Error::Format { .. })
            ));
        }
        let mut magic = bytes;
        magic[..4].copy_from_slice(b"DRSD");
        assert!(matches!(
            SparseIndex::from_bytes(&magic),
            Err(Error::Format { .. })
        ));
    }
}
