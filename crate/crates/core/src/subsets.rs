//! Index-set collections `S`: multisets of size-`m` subsets of `{0..n}` over
//! which the U-statistic estimators average.
//!
//! Indices are 0-based in memory. The JSON dump used for debugging writes them
//! 1-based.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::binomial;

/// Default ceiling on the number of subsets a complete enumeration may visit.
pub const DEFAULT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollectionKind {
    Disjoint,
    Complete,
    Random { k: usize },
    PermutedBlock { ell: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSetCollection {
    n: usize,
    m: usize,
    kind: CollectionKind,
    // Row-major, `m` strictly increasing indices per set.
    flat: Vec<usize>,
}

impl IndexSetCollection {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> CollectionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, usize> {
        self.flat.chunks_exact(self.m)
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.flat[i * self.m..(i + 1) * self.m]
    }

    /// Sets as 1-based index arrays.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.iter().map(|s| s.iter().map(|&i| i + 1).collect()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_one_based()).expect("plain integer arrays serialize")
    }
}

fn check_nm(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(invalid(format!("subset size needs 1 <= m <= n, got n={n}, m={m}")));
    }
    Ok(())
}

fn check_divides(n: usize, m: usize) -> Result<()> {
    check_nm(n, m)?;
    if n % m != 0 {
        return Err(Error::NotDivisible { n, m });
    }
    Ok(())
}

/// `{0..m}, {m..2m}, ...`: the sets of the standard estimator.
pub fn disjoint_blocks(n: usize, m: usize) -> Result<IndexSetCollection> {
    check_divides(n, m)?;
    Ok(IndexSetCollection { n, m, kind: CollectionKind::Disjoint, flat: (0..n).collect() })
}

/// Refuses with [`Error::CapExceeded`] when `C(n, m) > cap`.
pub fn check_cap(n: usize, m: usize, cap: u64) -> Result<u128> {
    check_nm(n, m)?;
    match binomial(n, m) {
        Some(count) if count <= cap as u128 => Ok(count),
        count => Err(Error::CapExceeded { n, m, count, cap }),
    }
}

/// All `C(n, m)` subsets in lexicographic order.
pub fn all_subsets(n: usize, m: usize, cap: u64) -> Result<IndexSetCollection> {
    let count = check_cap(n, m, cap)? as usize;
    let mut flat = Vec::with_capacity(count * m);
    for s in Combinations::new(n, m) {
        flat.extend_from_slice(&s);
    }
    Ok(IndexSetCollection { n, m, kind: CollectionKind::Complete, flat })
}

/// `k` independent uniform draws from the `C(n, m)` subsets (with replacement).
pub fn random_subsets<R: Rng + ?Sized>(n: usize, m: usize, k: usize, rng: &mut R) -> Result<IndexSetCollection> {
    check_nm(n, m)?;
    if k == 0 {
        return Err(invalid("random subsets need k >= 1"));
    }
    let mut flat = Vec::with_capacity(k * m);
    for _ in 0..k {
        let start = flat.len();
        flat.extend(index::sample(rng, n, m).iter());
        flat[start..].sort_unstable();
    }
    Ok(IndexSetCollection { n, m, kind: CollectionKind::Random { k }, flat })
}

/// `ell` uniform permutations of `{0..n}`, each cut into `n / m` consecutive blocks.
pub fn permuted_blocks<R: Rng + ?Sized>(n: usize, m: usize, ell: usize, rng: &mut R) -> Result<IndexSetCollection> {
    check_divides(n, m)?;
    if ell == 0 {
        return Err(invalid("permuted blocks need ell >= 1"));
    }
    let perms: Vec<Vec<usize>> = (0..ell)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    permuted_blocks_from(n, m, &perms)
}

/// Permuted-block collection from explicit permutations.
pub fn permuted_blocks_from(n: usize, m: usize, perms: &[Vec<usize>]) -> Result<IndexSetCollection> {
    check_divides(n, m)?;
    if perms.is_empty() {
        return Err(invalid("permuted blocks need at least one permutation"));
    }
    let mut flat = Vec::with_capacity(perms.len() * n);
    let mut seen = vec![false; n];
    for p in perms {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.len() });
        }
        seen.iter_mut().for_each(|s| *s = false);
        for &i in p {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(invalid("permutation is not a bijection on 0..n"));
            }
        }
        for block in p.chunks_exact(m) {
            let start = flat.len();
            flat.extend_from_slice(block);
            flat[start..].sort_unstable();
        }
    }
    Ok(IndexSetCollection { n, m, kind: CollectionKind::PermutedBlock { ell: perms.len() }, flat })
}

/// Lexicographic iterator over the size-`m` subsets of `{0..n}`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, current: (0..m).collect(), done: m > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let m = self.current.len();
        // Rightmost position that can still move.
        match (0..m).rev().find(|&i| self.current[i] < self.n - m + i) {
            Some(i) => {
                self.current[i] += 1;
                for j in i + 1..m {
                    self.current[j] = self.current[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}
