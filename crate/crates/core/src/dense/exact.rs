use rayon::prelude::*;

use super::index::{norm, Hit, KeyMatrix, NnIndex, TopK};

/// Brute-force scan of every key.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactIndex;

/// Below this many records a serial scan beats splitting the work.
const PARALLEL_THRESHOLD: usize = 1 << 14;
const CHUNK: usize = 4096;

impl NnIndex for ExactIndex {
    fn kind(&self) -> &'static str {
        "exact"
    }

    fn search(&self, keys: &KeyMatrix<'_>, query: &[f32], top_k: usize) -> Vec<Hit> {
        let qn = norm(query);
        let scan = |range: std::ops::Range<usize>| {
            let mut top = TopK::new(top_k);
            for i in range {
                top.push(Hit {
                    record: i,
                    score: keys.cosine(i, query, qn),
                });
            }
            top
        };
        let n = keys.len();
        if n < PARALLEL_THRESHOLD {
            return scan(0..n).into_sorted();
        }
        let partial: Vec<Vec<Hit>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| scan(c * CHUNK..((c + 1) * CHUNK).min(n)).into_sorted())
            .collect();
        let mut top = TopK::new(top_k);
        partial.into_iter().flatten().for_each(|h| top.push(h));
        top.into_sorted()
    }
}
