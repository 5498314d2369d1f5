//! Size-s volume sampling.
//!
//! [`ReverseSampler`] starts from the full column set and removes one column
//! at a time with probability proportional to `p_i = 1 - x_iᵀ Z x_i`, where
//! `Z = (X_S X_Sᵀ)⁻¹` is kept current by rank-one additions. Each removal
//! costs `O(|S| d + d²)`, so a full run is `O((n - s + d) n d)` time and
//! `O(d² + n)` extra memory.
//!
//! The enumeration routines ([`enumerate_volume_distribution`],
//! [`naive_sample`], [`has_full_support`]) are exhaustive and only meant for
//! small instances, where they serve as the ground truth for the fast path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::linalg::{self, Cholesky, ProblemMatrix, SpdMatrix};
use crate::rng::RngSeed;
use crate::subset::{binomial, ln_binomial, Combinations, IndexSubset};

/// Default cap on the number of enumerated subsets.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// Weights below this are clamped to zero before a draw.
pub const WEIGHT_CLAMP_FLOOR: f64 = -1e-9;

/// Total removal weight at or below this signals numeric breakdown.
pub const BREAKDOWN_TOTAL: f64 = 1e-10;

pub(crate) fn check_size(x: &ProblemMatrix, s: usize) -> Result<()> {
    if s < x.d() || s > x.n() {
        return Err(Error::SizeOutOfRange {
            size: s,
            min: x.d(),
            max: x.n(),
        });
    }
    Ok(())
}

/// Snapshot of a reverse-elimination run.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub survivors: IndexSubset,
    /// `p_i` for each survivor, aligned with `survivors.indices()`.
    pub weights: Vec<f64>,
    /// Current `(X_S X_Sᵀ)⁻¹`.
    pub inverse_gram: SpdMatrix,
}

/// Incremental reverse iterative volume sampler over a borrowed matrix.
#[derive(Debug, Clone)]
pub struct ReverseSampler<'a> {
    x: &'a ProblemMatrix,
    // unordered; removal is swap_remove
    survivors: Vec<usize>,
    weights: Vec<f64>,
    z: DMatrix<f64>,
    zx: DVector<f64>,
}

impl<'a> ReverseSampler<'a> {
    pub fn new(x: &'a ProblemMatrix) -> Result<Self> {
        let z = linalg::spd_inverse(x.full_gram())?.into_entries();
        let mut sampler = Self {
            x,
            survivors: (0..x.n()).collect(),
            weights: vec![0.0; x.n()],
            zx: DVector::zeros(x.d()),
            z,
        };
        sampler.recompute_weights();
        Ok(sampler)
    }

    pub fn len(&self) -> usize {
        self.survivors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.survivors.is_empty()
    }

    fn recompute_weights(&mut self) {
        for k in 0..self.survivors.len() {
            let i = self.survivors[k];
            let col = self.x.column(i);
            self.zx.gemv(1.0, &self.z, &col, 0.0);
            self.weights[i] = 1.0 - col.dot(&self.zx);
        }
    }

    /// Rebuilds `Z` and every `p_i` from the surviving columns.
    pub fn refresh(&mut self) -> Result<()> {
        let subset = self.survivor_subset();
        self.z = linalg::spd_inverse(&linalg::gram(self.x, &subset)?)?.into_entries();
        self.recompute_weights();
        Ok(())
    }

    fn survivor_subset(&self) -> IndexSubset {
        let mut idx = self.survivors.clone();
        idx.sort_unstable();
        IndexSubset::from_sorted_unchecked(idx, self.x.n())
    }

    fn clamped_total(&self) -> f64 {
        self.survivors
            .iter()
            .map(|&i| self.weights[i].max(0.0))
            .sum()
    }

    /// Removes one column and returns its index.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        if self.survivors.len() <= self.x.d() {
            return Err(Error::SizeOutOfRange {
                size: self.survivors.len() - 1,
                min: self.x.d(),
                max: self.x.n(),
            });
        }
        let mut total = self.clamped_total();
        if total <= BREAKDOWN_TOTAL {
            let breakdown = Error::NumericBreakdown {
                total,
                survivors: self.survivors.len(),
            };
            self.refresh().map_err(|_| breakdown.clone())?;
            total = self.clamped_total();
            if total <= BREAKDOWN_TOTAL {
                return Err(breakdown);
            }
        }

        let target = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        let mut last_positive = None;
        for (pos, &i) in self.survivors.iter().enumerate() {
            let w = self.weights[i].max(0.0);
            if w > 0.0 {
                last_positive = Some(pos);
                cumulative += w;
                if target < cumulative {
                    chosen = Some(pos);
                    break;
                }
            }
        }
        // rounding residue lands on the last positive entry
        let pos = chosen
            .or(last_positive)
            .expect("positive total implies a positive weight");
        let removed = self.survivors.swap_remove(pos);

        let col = self.x.column(removed);
        let p = self.weights[removed].max(0.0);
        self.zx.gemv(1.0 / p.sqrt(), &self.z, &col, 0.0);
        let v = &self.zx;
        for &j in &self.survivors {
            let proj = self.x.column(j).dot(v);
            self.weights[j] -= proj * proj;
        }
        self.z.ger(1.0, v, v, 1.0);
        Ok(removed)
    }

    /// Eliminates columns until `s` remain.
    pub fn run_to<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Result<IndexSubset> {
        check_size(self.x, s)?;
        while self.survivors.len() > s {
            self.step(rng)?;
        }
        Ok(self.survivor_subset())
    }

    pub fn state(&self) -> Result<SamplerState> {
        let survivors = self.survivor_subset();
        let weights = survivors.indices().iter().map(|&i| self.weights[i]).collect();
        Ok(SamplerState {
            survivors,
            weights,
            inverse_gram: SpdMatrix::new(self.z.clone())?,
        })
    }
}

/// Draws a size-`s` volume sample with the reverse iterative algorithm.
pub fn reverse_iterative_sample(x: &ProblemMatrix, s: usize, seed: RngSeed) -> Result<IndexSubset> {
    reverse_iterative_sample_with(x, s, &mut seed.rng())
}

pub fn reverse_iterative_sample_with<R: Rng + ?Sized>(
    x: &ProblemMatrix,
    s: usize,
    rng: &mut R,
) -> Result<IndexSubset> {
    check_size(x, s)?;
    if s == x.n() {
        return Ok(IndexSubset::full(x.n()));
    }
    ReverseSampler::new(x)?.run_to(s, rng)
}

/// `P(S - i | S)` for each `i ∈ S`, aligned with `subset.indices()`.
pub fn removal_weights(x: &ProblemMatrix, subset: &IndexSubset) -> Result<Vec<f64>> {
    let size = subset.len();
    if size <= x.d() {
        return Err(Error::SizeOutOfRange {
            size,
            min: x.d() + 1,
            max: x.n(),
        });
    }
    let g = linalg::gram(x, subset)?;
    let cols = x.columns(subset)?;
    let solved = g.factor().solve(&cols);
    let excess = (size - x.d()) as f64;
    Ok((0..size)
        .map(|k| {
            let leverage = cols.column(k).dot(&solved.column(k));
            ((1.0 - leverage) / excess).max(0.0)
        })
        .collect())
}

/// Exact size-`s` volume-sampling distribution over every subset.
#[derive(Debug, Clone, Serialize)]
pub struct VolumeDistribution {
    pub size: usize,
    pub entries: Vec<(IndexSubset, f64)>,
}

impl VolumeDistribution {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| *p).collect::<KahanSum>().value()
    }

    /// True when every subset has positive probability.
    pub fn support_complete(&self) -> bool {
        self.entries.iter().all(|(_, p)| *p > 0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &(IndexSubset, f64)> {
        self.entries.iter().filter(|(_, p)| *p > 0.0)
    }

    pub fn probability_of(&self, subset: &IndexSubset) -> f64 {
        self.entries
            .binary_search_by(|(s, _)| s.cmp(subset))
            .map_or(0.0, |k| self.entries[k].1)
    }

    /// Inverse-CDF draw over the table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &IndexSubset {
        let target = rng.random::<f64>();
        let mut cumulative = 0.0;
        let mut last_positive = None;
        for (s, p) in self.support() {
            cumulative += p;
            last_positive = Some(s);
            if target < cumulative {
                return s;
            }
        }
        last_positive.expect("distribution has positive mass")
    }
}

pub(crate) fn check_cap(n: usize, s: usize, cap: u128) -> Result<u128> {
    let count = binomial(n, s);
    if count > cap {
        return Err(Error::TooManySubsets { count, cap });
    }
    Ok(count)
}

/// Enumerates `P(S) = det(X_S X_Sᵀ) / (C(n-d, s-d) det(X Xᵀ))` over all
/// size-`s` subsets, in lexicographic order. Ratios are formed in log space.
pub fn enumerate_volume_distribution(
    x: &ProblemMatrix,
    s: usize,
    cap: u128,
) -> Result<VolumeDistribution> {
    check_size(x, s)?;
    check_cap(x.n(), s, cap)?;
    let log_norm = ln_binomial(x.n() - x.d(), s - x.d()) + x.full_gram().log_det();
    let subsets: Vec<IndexSubset> = Combinations::new(x.n(), s).collect();
    let entries = subsets
        .into_par_iter()
        .map(|subset| {
            let p = linalg::log_gram_det(x, &subset)?.map_or(0.0, |ld| (ld - log_norm).exp());
            Ok((subset, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VolumeDistribution { size: s, entries })
}

/// Exact draw by inverse CDF over the enumerated table.
pub fn naive_sample(x: &ProblemMatrix, s: usize, seed: RngSeed, cap: u128) -> Result<IndexSubset> {
    let table = enumerate_volume_distribution(x, s, cap)?;
    Ok(table.sample(&mut seed.rng()).clone())
}

/// True iff every size-`s` subset has a nonsingular Gram matrix.
pub fn has_full_support(x: &ProblemMatrix, s: usize, cap: u128) -> Result<bool> {
    check_size(x, s)?;
    check_cap(x.n(), s, cap)?;
    if s == x.n() {
        return Ok(true);
    }
    let subsets: Vec<IndexSubset> = Combinations::new(x.n(), s).collect();
    Ok(subsets.par_iter().all(|subset| {
        linalg::gram_matrix(x, subset)
            .map(|g| Cholesky::factor(&g).is_ok())
            .unwrap_or(false)
    }))
}
