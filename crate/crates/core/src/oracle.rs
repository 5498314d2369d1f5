//! Exact expectations under volume sampling by exhaustive enumeration.
//!
//! Every routine enumerates all size-`s` subsets (bounded by a cap), drops the
//! zero-probability ones and accumulates `P(S)·f(S)` with compensated sums.
//! Work is split into fixed-size chunks that are reduced in chunk order, so
//! results do not depend on the number of threads.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahan::{KahanMatrix, KahanSum};
use crate::linalg::{self, ProblemMatrix};
use crate::regression::{self, RegressionProblem};
use crate::sampler::{self, check_cap, check_size, VolumeDistribution};
use crate::subset::{binomial, Combinations, IndexSubset};

/// Default cap on enumerated k-tuples of subsets.
pub const DEFAULT_TUPLE_CAP: u128 = 100_000;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    PseudoInverse,
    GramInverse,
    Covariance,
    Frobenius,
    Loss,
    WeightVector,
    RepeatedLoss,
    Probability,
    Volume,
    LeaveOneOut,
}

/// A scalar, vector or matrix result. Serializes matrices as nested rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl Value {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        match self {
            Value::Scalar(v) => DMatrix::from_element(1, 1, *v),
            Value::Vector(v) => DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
            Value::Matrix(m) => m.clone(),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    /// Entries in column-major order.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Value::Scalar(v) => vec![*v],
            Value::Vector(v) => v.as_slice().to_vec(),
            Value::Matrix(m) => m.as_slice().to_vec(),
        }
    }

    /// Same shape as `self`, filled from column-major `data`.
    pub fn with_data(&self, data: &[f64]) -> Value {
        match self {
            Value::Scalar(_) => Value::Scalar(data[0]),
            Value::Vector(v) => Value::Vector(DVector::from_column_slice(&data[..v.len()])),
            Value::Matrix(m) => Value::Matrix(DMatrix::from_column_slice(m.nrows(), m.ncols(), data)),
        }
    }

    pub fn max_abs_diff(&self, other: &Value) -> f64 {
        linalg::max_abs_diff(&self.as_matrix(), &other.as_matrix())
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Scalar(v) => serializer.serialize_f64(*v),
            Value::Vector(v) => v.as_slice().serialize(serializer),
            Value::Matrix(m) => {
                let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
                rows.serialize(serializer)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactExpectation {
    pub quantity: Quantity,
    pub value: Value,
    /// True iff every enumerated subset had positive determinant.
    pub support_complete: bool,
}

/// `(n - d + 1) / (s - d + 1)`.
pub fn gram_inverse_factor(d: usize, n: usize, s: usize) -> f64 {
    (n - d + 1) as f64 / (s - d + 1) as f64
}

/// `(n - s) / (s - d + 1)`.
pub fn covariance_factor(d: usize, n: usize, s: usize) -> f64 {
    (n - s) as f64 / (s - d + 1) as f64
}

fn weighted_matrix_sum<F>(
    dist: &VolumeDistribution,
    shape: (usize, usize),
    f: F,
) -> Result<DMatrix<f64>>
where
    F: Fn(&IndexSubset) -> Result<DMatrix<f64>> + Sync,
{
    let support: Vec<&(IndexSubset, f64)> = dist.support().collect();
    let partials = support
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = KahanMatrix::zeros(shape.0, shape.1);
            for (subset, p) in chunk {
                acc.add_scaled(&f(subset)?, *p);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = KahanMatrix::zeros(shape.0, shape.1);
    for part in &partials {
        total.merge(part);
    }
    Ok(total.value())
}

fn weighted_scalar_sum<F>(dist: &VolumeDistribution, f: F) -> Result<f64>
where
    F: Fn(&IndexSubset) -> Result<f64> + Sync,
{
    let m = weighted_matrix_sum(dist, (1, 1), |s| Ok(DMatrix::from_element(1, 1, f(s)?)))?;
    Ok(m[(0, 0)])
}

/// `E[(X I_S)⁺]`, an n × d matrix.
pub fn exact_pinv_expectation(x: &ProblemMatrix, s: usize, cap: u128) -> Result<ExactExpectation> {
    let dist = sampler::enumerate_volume_distribution(x, s, cap)?;
    let value = weighted_matrix_sum(&dist, (x.n(), x.d()), |sub| linalg::pseudo_inverse(x, sub))?;
    Ok(ExactExpectation {
        quantity: Quantity::PseudoInverse,
        value: Value::Matrix(value),
        support_complete: dist.support_complete(),
    })
}

/// `E[(X_S X_Sᵀ)⁻¹]`, a d × d matrix.
pub fn exact_gram_inverse_expectation(
    x: &ProblemMatrix,
    s: usize,
    cap: u128,
) -> Result<ExactExpectation> {
    let dist = sampler::enumerate_volume_distribution(x, s, cap)?;
    let value = weighted_matrix_sum(&dist, (x.d(), x.d()), |sub| {
        Ok(linalg::spd_inverse(&linalg::gram(x, sub)?)?.into_entries())
    })?;
    Ok(ExactExpectation {
        quantity: Quantity::GramInverse,
        value: Value::Matrix(value),
        support_complete: dist.support_complete(),
    })
}

/// `E[‖(X I_S)⁺‖²_F]`.
pub fn exact_frobenius_expectation(
    x: &ProblemMatrix,
    s: usize,
    cap: u128,
) -> Result<ExactExpectation> {
    let dist = sampler::enumerate_volume_distribution(x, s, cap)?;
    let value = weighted_scalar_sum(&dist, |sub| {
        Ok(linalg::pseudo_inverse(x, sub)?.norm_squared())
    })?;
    Ok(ExactExpectation {
        quantity: Quantity::Frobenius,
        value: Value::Scalar(value),
        support_complete: dist.support_complete(),
    })
}

/// `E[(X I_S)⁺ᵀ (X I_S)⁺] - X⁺ᵀ X⁺`, computed from the pseudo-inverses.
pub fn exact_covariance(x: &ProblemMatrix, s: usize, cap: u128) -> Result<ExactExpectation> {
    let dist = sampler::enumerate_volume_distribution(x, s, cap)?;
    let second = weighted_matrix_sum(&dist, (x.d(), x.d()), |sub| {
        let p = linalg::pseudo_inverse(x, sub)?;
        Ok(p.tr_mul(&p))
    })?;
    let full = linalg::pseudo_inverse(x, &IndexSubset::full(x.n()))?;
    Ok(ExactExpectation {
        quantity: Quantity::Covariance,
        value: Value::Matrix(second - full.tr_mul(&full)),
        support_complete: dist.support_complete(),
    })
}

/// `E[L(w*_S)]` for size-d volume sampling.
pub fn exact_loss_expectation(problem: &RegressionProblem, cap: u128) -> Result<ExactExpectation> {
    let d = problem.x().d();
    let dist = sampler::enumerate_volume_distribution(problem.x(), d, cap)?;
    let value = weighted_scalar_sum(&dist, |sub| Ok(regression::solve_subset(problem, sub)?.loss))?;
    Ok(ExactExpectation {
        quantity: Quantity::Loss,
        value: Value::Scalar(value),
        support_complete: dist.support_complete(),
    })
}

/// `E[w*_S]` for size-s volume sampling.
pub fn exact_weight_expectation(
    problem: &RegressionProblem,
    s: usize,
    cap: u128,
) -> Result<ExactExpectation> {
    let d = problem.x().d();
    let dist = sampler::enumerate_volume_distribution(problem.x(), s, cap)?;
    let value = weighted_matrix_sum(&dist, (d, 1), |sub| {
        let w = regression::solve_subset(problem, sub)?.w;
        Ok(DMatrix::from_column_slice(d, 1, w.as_slice()))
    })?;
    Ok(ExactExpectation {
        quantity: Quantity::WeightVector,
        value: Value::Vector(DVector::from_column_slice(value.as_slice())),
        support_complete: dist.support_complete(),
    })
}

/// `E[L((1/k) Σ_j w*_{S_j})]` over k independent size-d volume samples,
/// enumerating every k-tuple of subsets.
pub fn exact_repeated_sampling_loss(
    problem: &RegressionProblem,
    k: usize,
    subset_cap: u128,
    tuple_cap: u128,
) -> Result<ExactExpectation> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let x = problem.x();
    let d = x.d();
    let per_sample = binomial(x.n(), d);
    let tuples = u32::try_from(k)
        .ok()
        .and_then(|k| per_sample.checked_pow(k))
        .unwrap_or(u128::MAX);
    if tuples > tuple_cap {
        return Err(Error::TooManySubsets {
            count: tuples,
            cap: tuple_cap,
        });
    }
    let dist = sampler::enumerate_volume_distribution(x, d, subset_cap)?;
    let support = dist
        .support()
        .map(|(sub, p)| Ok((regression::solve_subset(problem, sub)?.w, *p)))
        .collect::<Result<Vec<_>>>()?;
    let m = support.len();
    let total = m.pow(k as u32);
    let inv_k = 1.0 / k as f64;

    let chunk_starts: Vec<usize> = (0..total).step_by(CHUNK).collect();
    let partials: Vec<KahanSum> = chunk_starts
        .par_iter()
        .map(|&start| {
            let mut acc = KahanSum::new();
            let mut w = DVector::<f64>::zeros(d);
            for t in start..(start + CHUNK).min(total) {
                w.fill(0.0);
                let mut prob = 1.0;
                let mut code = t;
                for _ in 0..k {
                    let (ws, p) = &support[code % m];
                    code /= m;
                    w += ws;
                    prob *= p;
                }
                w *= inv_k;
                acc.add(prob * problem.loss(&w));
            }
            acc
        })
        .collect();
    let mut value = KahanSum::new();
    for part in &partials {
        value.merge(part);
    }
    Ok(ExactExpectation {
        quantity: Quantity::RepeatedLoss,
        value: Value::Scalar(value.value()),
        support_complete: dist.support_complete(),
    })
}

/// Total variation between the level-`s` table and the level-`s + 1` table
/// pushed through the removal weights.
pub fn layer_total_variation(x: &ProblemMatrix, s: usize, cap: u128) -> Result<f64> {
    check_size(x, s)?;
    if s >= x.n() {
        return Err(Error::SizeOutOfRange {
            size: s,
            min: x.d(),
            max: x.n() - 1,
        });
    }
    let upper = sampler::enumerate_volume_distribution(x, s + 1, cap)?;
    let lower = sampler::enumerate_volume_distribution(x, s, cap)?;
    let mut pushed = vec![KahanSum::new(); lower.entries.len()];
    for (big, p_big) in upper.support() {
        let weights = sampler::removal_weights(x, big)?;
        for (&i, w) in big.indices().iter().zip(weights) {
            let small = big.without(i).expect("member");
            let pos = lower
                .entries
                .binary_search_by(|(sub, _)| sub.cmp(&small))
                .expect("every subset is enumerated");
            pushed[pos].add(p_big * w);
        }
    }
    let tv: KahanSum = lower
        .entries
        .iter()
        .zip(&pushed)
        .map(|((_, p), q)| (p - q.value()).abs())
        .collect();
    Ok(0.5 * tv.value())
}

/// Whether marginalizing level `s + 1` reproduces level `s` within 1e-9 TV.
pub fn layer_consistency_check(x: &ProblemMatrix, s: usize, cap: u128) -> Result<bool> {
    Ok(layer_total_variation(x, s, cap)? <= 1e-9)
}

/// `(Σ_{|S|=s} det(X_S X_Sᵀ), C(n-d, s-d)·det(X Xᵀ))`.
pub fn cauchy_binet_check(x: &ProblemMatrix, s: usize, cap: u128) -> Result<(f64, f64)> {
    check_size(x, s)?;
    check_cap(x.n(), s, cap)?;
    let subsets: Vec<IndexSubset> = Combinations::new(x.n(), s).collect();
    let partials = subsets
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = KahanSum::new();
            for sub in chunk {
                acc.add(linalg::gram_det(x, sub)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lhs = KahanSum::new();
    for part in &partials {
        lhs.merge(part);
    }
    let rhs = binomial(x.n() - x.d(), s - x.d()) as f64 * x.full_gram().det();
    Ok((lhs.value(), rhs))
}
