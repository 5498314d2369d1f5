//! Column index subsets and subset enumeration.
//!
//! Indices are 0-based internally. Human-facing output converts to the
//! 1-based `{1..n}` convention via [`IndexSubset::to_one_based`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing set of column indices drawn from `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexSubset {
    indices: Vec<usize>,
    n: usize,
}

impl IndexSubset {
    /// Builds a subset from arbitrary 0-based indices, sorting and merging repeats.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { indices, n })
    }

    /// Builds a subset from 1-based indices.
    pub fn from_one_based(indices: &[usize], n: usize) -> Result<Self> {
        let zero_based = indices
            .iter()
            .map(|&i| {
                i.checked_sub(1)
                    .ok_or(Error::IndexOutOfRange { index: i, n })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero_based, n)
    }

    /// The full set `0..n`.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            n,
        }
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>, n: usize) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.iter().all(|&i| i < n));
        Self { indices, n }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ambient(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `S - {i}`; returns `None` when `i` is not a member.
    pub fn without(&self, i: usize) -> Option<Self> {
        let pos = self.indices.binary_search(&i).ok()?;
        let mut indices = self.indices.clone();
        indices.remove(pos);
        Some(Self { indices, n: self.n })
    }

    /// Complement within `0..n`.
    pub fn complement(&self) -> Self {
        let indices = (0..self.n).filter(|&i| !self.contains(i)).collect();
        Self { indices, n: self.n }
    }

    /// Union of two subsets over the same ambient size.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        Self::new(indices, self.n)
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| i + 1).collect()
    }
}

impl fmt::Display for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Exact binomial coefficient. Saturates at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Natural log of the binomial coefficient, exact for the sizes used here.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Lexicographic iterator over all size-`k` subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    current: Vec<usize>,
    n: usize,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            current: (0..k).collect(),
            n,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = IndexSubset;

    fn next(&mut self) -> Option<IndexSubset> {
        if self.done {
            return None;
        }
        let out = IndexSubset::from_sorted_unchecked(self.current.clone(), self.n);
        let k = self.current.len();
        // advance to the next combination in lexicographic order
        let mut pos = k;
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            if self.current[pos] < self.n - k + pos {
                self.current[pos] += 1;
                for q in pos + 1..k {
                    self.current[q] = self.current[q - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
