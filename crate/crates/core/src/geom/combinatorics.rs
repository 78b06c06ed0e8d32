//! Index-set enumeration in fixed, reproducible orders.

/// All `k`-subsets of `0..n`, in colexicographic order.
pub fn colex_subsets(n: usize, k: usize) -> ColexSubsets {
    assert!(n < 64, "subset enumeration supports at most 63 elements");
    let state = if k > n {
        None
    } else if k == 0 {
        Some(0)
    } else {
        Some((1u64 << k) - 1)
    };
    ColexSubsets { n, state }
}

pub struct ColexSubsets {
    n: usize,
    state: Option<u64>,
}

impl Iterator for ColexSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mask = self.state?;
        let subset = (0..self.n).filter(|i| mask & (1 << i) != 0).collect();
        // Gosper's hack: next integer with the same popcount.
        self.state = if mask == 0 {
            None
        } else {
            let lowest = mask & mask.wrapping_neg();
            let ripple = mask + lowest;
            let next = (((ripple ^ mask) >> 2) / lowest) | ripple;
            (next < (1u64 << self.n)).then_some(next)
        };
        Some(subset)
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Set partitions of `0..n` into exactly `blocks` non-empty blocks, as
/// restricted-growth strings in lexicographic order.
pub fn restricted_growth_strings(n: usize, blocks: usize) -> impl Iterator<Item = Vec<usize>> {
    let start = (blocks > 0 && blocks <= n).then(|| vec![0; n]);
    RgsIter {
        limit: blocks,
        current: start,
    }
    .filter(move |s| s.iter().copied().max().map_or(0, |m| m + 1) == blocks)
}

/// Every restricted-growth string with values below `limit`.
struct RgsIter {
    limit: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for RgsIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let s = self.current.take()?;
        let mut next = s.clone();
        let mut prefix_max = vec![0; s.len()];
        for i in 1..s.len() {
            prefix_max[i] = prefix_max[i - 1].max(s[i - 1]);
        }
        for i in (1..s.len()).rev() {
            if next[i] + 1 < self.limit && next[i] <= prefix_max[i] {
                next[i] += 1;
                for v in next.iter_mut().skip(i + 1) {
                    *v = 0;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(s)
    }
}

/// Block index sets of a restricted-growth string.
pub fn blocks_of(rgs: &[usize]) -> Vec<Vec<usize>> {
    let count = rgs.iter().copied().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); count];
    for (i, &b) in rgs.iter().enumerate() {
        blocks[b].push(i);
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colex_order_of_three_subsets_of_four() {
        let subsets: Vec<_> = colex_subsets(4, 3).collect();
        assert_eq!(
            subsets,
            vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]
        );
    }

    #[test]
    fn subset_counts_match_binomials() {
        for n in 0..9 {
            for k in 0..=n {
                assert_eq!(
                    colex_subsets(n, k).count() as u128,
                    binomial(n as u64, k as u64),
                    "n={n} k={k}"
                );
            }
        }
        assert_eq!(colex_subsets(3, 4).count(), 0);
    }

    #[test]
    fn rgs_two_blocks_of_three() {
        let all: Vec<_> = restricted_growth_strings(3, 2).collect();
        assert_eq!(all, vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 1]]);
    }

    fn stirling2(n: usize, k: usize) -> usize {
        if n == 0 && k == 0 {
            return 1;
        }
        if n == 0 || k == 0 {
            return 0;
        }
        k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)
    }

    #[test]
    fn rgs_counts_are_stirling_numbers_and_sorted() {
        for n in 1..9 {
            for k in 1..=n {
                let all: Vec<_> = restricted_growth_strings(n, k).collect();
                assert_eq!(all.len(), stirling2(n, k), "n={n} k={k}");
                assert!(all.windows(2).all(|w| w[0] < w[1]));
                for s in &all {
                    assert_eq!(blocks_of(s).len(), k);
                }
            }
        }
        assert_eq!(restricted_growth_strings(2, 3).count(), 0);
    }
}
