//! Inverted-file index: spherical k-means partitions the keys, and a query
//! only scans the lists whose centroids are closest to it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::index::{dot, norm, Hit, IndexParams, KeyMatrix, NnIndex, TopK};
use crate::binfmt::{self, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DRSI";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    nprobe: usize,
    /// `nlist` unit rows of length `dim`.
    centroids: Vec<f32>,
    lists: Vec<Vec<u32>>,
}

fn nearest_centroid(centroids: &[f32], dim: usize, v: &[f32]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(row, v);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

impl IvfIndex {
    pub fn build(keys: &KeyMatrix<'_>, params: &IndexParams) -> Result<Self> {
        let n = keys.len();
        if n == 0 {
            return Err(Error::invalid(
                "cannot build an inverted index over zero keys",
            ));
        }
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many keys for an inverted index"));
        }
        let dim = keys.dim;
        let nlist = params
            .ivf_lists
            .unwrap_or_else(|| (n as f64).sqrt().round() as usize)
            .clamp(1, n);

        let unit = |v: &[f32]| -> Vec<f32> {
            let len = norm(v);
            if len > 0.0 {
                v.iter().map(|&x| (x as f64 / len) as f32).collect()
            } else {
                v.to_vec()
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut seeds = rand::seq::index::sample(&mut rng, n, nlist).into_vec();
        seeds.sort_unstable();
        let mut centroids: Vec<f32> = seeds.iter().flat_map(|&i| unit(keys.row(i))).collect();

        let mut assign: Vec<usize> = vec![usize::MAX; n];
        for _ in 0..params.ivf_iters.max(1) {
            let next: Vec<usize> = (0..n)
                .into_par_iter()
                .map(|i| nearest_centroid(&centroids, dim, keys.row(i)))
                .collect();
            let changed = next != assign;
            assign = next;
            if !changed {
                break;
            }
            let mut sums = vec![0f64; nlist * dim];
            for (i, &c) in assign.iter().enumerate() {
                for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(keys.row(i)) {
                    *s += x as f64;
                }
            }
            for c in 0..nlist {
                let sum = &sums[c * dim..(c + 1) * dim];
                let len = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
                // empty or degenerate clusters keep their previous centroid
                if len > 0.0 {
                    for (dst, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(sum) {
                        *dst = (s / len) as f32;
                    }
                }
            }
        }

        let mut lists = vec![Vec::new(); nlist];
        for (i, &c) in assign.iter().enumerate() {
            lists[c].push(i as u32);
        }
        Ok(Self {
            dim,
            nprobe: params.ivf_nprobe.max(1),
            centroids,
            lists,
        })
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn set_nprobe(&mut self, nprobe: usize) {
        self.nprobe = nprobe.max(1);
    }

    pub fn from_bytes(bytes: &[u8], expected_count: usize) -> Result<Self> {
        let what = "inverted index file";
        let mut r = Reader::new(bytes, what);
        r.header(MAGIC, VERSION)?;
        let dim = r.u32()? as usize;
        let nlist = r.u32()? as usize;
        let nprobe = r.u32()? as usize;
        let count = r.u64()? as usize;
        if count != expected_count {
            return Err(Error::format(
                what,
                format!("indexes {count} records but the datastore holds {expected_count}"),
            ));
        }
        if dim == 0 || nlist == 0 {
            return Err(Error::format(what, "zero dimension or list count"));
        }
        let centroids = r.f32s(nlist * dim)?;
        let offsets = r.u64s(nlist + 1)?;
        let ids = r.u32s(count)?;
        r.finish()?;
        if offsets[0] != 0
            || offsets[nlist] as usize != count
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::format(what, "list offsets are inconsistent"));
        }
        let mut seen = vec![false; count];
        for &id in &ids {
            let id = id as usize;
            if id >= count || std::mem::replace(&mut seen[id], true) {
                return Err(Error::format(
                    what,
                    "list ids are not a permutation of the records",
                ));
            }
        }
        let lists = offsets
            .windows(2)
            .map(|w| ids[w[0] as usize..w[1] as usize].to_vec())
            .collect();
        Ok(Self {
            dim,
            nprobe: nprobe.max(1),
            centroids,
            lists,
        })
    }
}

impl NnIndex for IvfIndex {
    fn kind(&self) -> &'static str {
        "ivf"
    }

    fn search(&self, keys: &KeyMatrix<'_>, query: &[f32], top_k: usize) -> Vec<Hit> {
        let mut probes = TopK::new(self.nprobe);
        for (c, row) in self.centroids.chunks_exact(self.dim).enumerate() {
            probes.push(Hit {
                record: c,
                score: dot(row, query),
            });
        }
        let qn = norm(query);
        let mut top = TopK::new(top_k);
        for probe in probes.into_sorted() {
            for &i in &self.lists[probe.record] {
                let i = i as usize;
                top.push(Hit {
                    record: i,
                    score: keys.cosine(i, query, qn),
                });
            }
        }
        top.into_sorted()
    }

    fn to_bytes(&self) -> Option<Vec<u8>> {
        let count: usize = self.lists.iter().map(Vec::len).sum();
        let mut buf = Vec::new();
        binfmt::write_header(&mut buf, MAGIC, VERSION).ok()?;
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.lists.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.nprobe as u32).to_le_bytes());
        buf.extend_from_slice(&(count as u64).to_le_bytes());
        binfmt::write_f32s(&mut buf, &self.centroids).ok()?;
        let mut offsets = Vec::with_capacity(self.lists.len() + 1);
        let mut acc = 0u64;
        offsets.push(0);
        for list in &self.lists {
            acc += list.len() as u64;
            offsets.push(acc);
        }
        binfmt::write_u64s(&mut buf, &offsets).ok()?;
        for list in &self.lists {
            binfmt::write_u32s(&mut buf, list).ok()?;
        }
        Some(buf)
    }
}
