//! Suffix array construction by prefix doubling.
//!
//! Each round sorts suffixes by the rank pair `(rank[i], rank[i + k])` with
//! two stable counting sorts, so a round is linear and at most `log2 n`
//! rounds are needed.

fn counting_sort(input: &[usize], key: impl Fn(usize) -> usize, max_key: usize) -> Vec<usize> {
    let mut counts = vec![0usize; max_key + 2];
    for &i in input {
        counts[key(i) + 1] += 1;
    }
    for b in 1..counts.len() {
        counts[b] += counts[b - 1];
    }
    let mut out = vec![0usize; input.len()];
    for &i in input {
        let slot = &mut counts[key(i)];
        out[*slot] = i;
        *slot += 1;
    }
    out
}

/// Start positions of all suffixes of `text` in lexicographic order. A
/// suffix that is a proper prefix of another sorts first.
pub fn build_suffix_array(text: &[u32]) -> Vec<usize> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut alphabet = text.to_vec();
    alphabet.sort_unstable();
    alphabet.dedup();
    // ranks start at 1 so that 0 can stand for "past the end"
    let mut rank: Vec<usize> = text
        .iter()
        .map(|t| alphabet.binary_search(t).unwrap() + 1)
        .collect();
    let mut max_rank = alphabet.len();
    let identity: Vec<usize> = (0..n).collect();
    let mut next_rank = vec![0usize; n];
    let mut k = 1;
    loop {
        let second = |i: usize| if i + k < n { rank[i + k] } else { 0 };
        let by_second = counting_sort(&identity, second, max_rank);
        let sa = counting_sort(&by_second, |i| rank[i], max_rank);

        next_rank[sa[0]] = 1;
        for j in 1..n {
            let (a, b) = (sa[j - 1], sa[j]);
            let same = rank[a] == rank[b] && second(a) == second(b);
            next_rank[b] = next_rank[a] + usize::from(!same);
        }
        std::mem::swap(&mut rank, &mut next_rank);
        max_rank = rank[sa[n - 1]];
        if max_rank == n || k >= n {
            return sa;
        }
        k *= 2;
    }
}
