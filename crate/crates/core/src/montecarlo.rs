//! Seeded Monte Carlo checks of the volume-sampling expectation formulas.
//!
//! Each replicate `j` draws from its own stream seeded by
//! `cfg.seed.derive(j)`. Per-replicate values are folded into per-entry
//! running means and variances over fixed-size replicate chunks, and the
//! chunks are merged in replicate order, so results are identical for any
//! thread count.
//!
//! A check passes when, at every entry, the deviation of the sample mean from
//! the predicted value is within `safety_factor` times the normal-theory
//! confidence half-width.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ProblemMatrix};
use crate::oracle::{gram_inverse_factor, Quantity, Value};
use crate::regression::{self, RegressionProblem};
use crate::rng::RngSeed;
use crate::sampler::{self, check_size};
use crate::stats::normal_critical_value;
use crate::subset::IndexSubset;

pub const DEFAULT_CONFIDENCE: f64 = 0.99;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;
pub const MIN_REPLICATES: usize = 100;

/// Half-widths never drop below this fraction of `max(1, |predicted|)`, so
/// zero-variance estimates are compared up to rounding.
pub const HALFWIDTH_FLOOR: f64 = 1e-12;

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: RngSeed,
    pub confidence: f64,
    pub safety_factor: f64,
}

impl McConfig {
    pub fn new(replicates: usize, seed: RngSeed) -> Self {
        Self {
            replicates,
            seed,
            confidence: DEFAULT_CONFIDENCE,
            safety_factor: DEFAULT_SAFETY_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if self.safety_factor.is_nan() || self.safety_factor <= 0.0 {
            return Err(Error::InvalidConfig("safety factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Outcome of comparing an estimated quantity against its predicted value.
///
/// For Monte Carlo reports, `max_abs_deviation` and `ci_halfwidth` are taken
/// at the binding entry, the one with the largest deviation relative to its
/// own half-width; `passed` is `max_abs_deviation <= ci_halfwidth *
/// safety_factor`. Exact reports have a zero half-width and compare against
/// `tolerance` directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub quantity: Quantity,
    pub method: Method,
    pub predicted: Value,
    pub estimated: Value,
    pub max_abs_deviation: f64,
    pub ci_halfwidth: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub replicates: usize,
    pub seed: Option<RngSeed>,
    /// Largest raw entrywise deviation, which can sit at a different entry.
    pub largest_entry_deviation: f64,
    pub note: Option<String>,
}

impl VerificationReport {
    /// An exact comparison: passes iff the largest entrywise deviation is
    /// within `tolerance`.
    pub fn exact(check: &str, quantity: Quantity, predicted: Value, estimated: Value, tolerance: f64) -> Self {
        let dev = predicted.max_abs_diff(&estimated);
        Self {
            check: check.to_string(),
            quantity,
            method: Method::Exact,
            predicted,
            estimated,
            max_abs_deviation: dev,
            ci_halfwidth: 0.0,
            tolerance,
            passed: dev <= tolerance,
            replicates: 0,
            seed: None,
            largest_entry_deviation: dev,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Per-entry running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.count / total;
            self.m2[k] += other.m2[k] + delta * delta * self.count * other.count / total;
        }
        self.count = total;
    }

    fn standard_errors(&self) -> Vec<f64> {
        let n = self.count;
        self.m2
            .iter()
            .map(|s| (s.max(0.0) / (n - 1.0)).sqrt() / n.sqrt())
            .collect()
    }
}

/// Runs `cfg.replicates` replicates of `draw` and returns per-entry moments.
fn replicate_moments<F>(cfg: &McConfig, dim: usize, draw: F) -> Result<Moments>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let starts: Vec<usize> = (0..cfg.replicates).step_by(CHUNK).collect();
    let partials = starts
        .par_iter()
        .map(|&start| {
            let mut acc = Moments::new(dim);
            for j in start..(start + CHUNK).min(cfg.replicates) {
                let mut rng = cfg.seed.derive(j as u64).rng();
                acc.push(&draw(&mut rng)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Moments::new(dim);
    for part in &partials {
        total.merge(part);
    }
    Ok(total)
}

fn report(check: &str, quantity: Quantity, predicted: Value, moments: &Moments, cfg: &McConfig) -> VerificationReport {
    let z = normal_critical_value(cfg.confidence);
    let target = predicted.flatten();
    let errors = moments.standard_errors();
    let mut binding = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut largest = 0.0f64;
    for k in 0..target.len() {
        let dev = (moments.mean[k] - target[k]).abs();
        let hw = (z * errors[k]).max(HALFWIDTH_FLOOR * target[k].abs().max(1.0));
        let ratio = dev / hw;
        if ratio > binding.0 {
            binding = (ratio, dev, hw);
        }
        largest = largest.max(dev);
    }
    let (_, dev, hw) = binding;
    VerificationReport {
        check: check.to_string(),
        quantity,
        method: Method::MonteCarlo,
        estimated: predicted.with_data(&moments.mean),
        predicted,
        max_abs_deviation: dev,
        ci_halfwidth: hw,
        tolerance: hw * cfg.safety_factor,
        passed: dev <= hw * cfg.safety_factor,
        replicates: cfg.replicates,
        seed: Some(cfg.seed),
        largest_entry_deviation: largest,
        note: None,
    }
}

/// `E[(X I_S)⁺] = X⁺`.
pub fn mc_verify_pinv(x: &ProblemMatrix, s: usize, cfg: &McConfig) -> Result<VerificationReport> {
    check_size(x, s)?;
    let predicted = linalg::pseudo_inverse(x, &IndexSubset::full(x.n()))?;
    let moments = replicate_moments(cfg, x.n() * x.d(), |rng| {
        let subset = sampler::reverse_iterative_sample_with(x, s, rng)?;
        Ok(linalg::pseudo_inverse(x, &subset)?.as_slice().to_vec())
    })?;
    Ok(report("pinv-unbiased", Quantity::PseudoInverse, Value::Matrix(predicted), &moments, cfg))
}

/// Monte Carlo check of the scaled inverse Gram identity and its trace form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramInverseVerification {
    pub matrix: VerificationReport,
    pub frobenius: VerificationReport,
}

impl GramInverseVerification {
    pub fn passed(&self) -> bool {
        self.matrix.passed && self.frobenius.passed
    }
}

/// `E[(X_S X_Sᵀ)⁻¹] = (n-d+1)/(s-d+1)·(X Xᵀ)⁻¹`, plus the scalar
/// `E[‖(X I_S)⁺‖²_F] = (n-d+1)/(s-d+1)·‖X⁺‖²_F`.
pub fn mc_verify_gram_inverse(x: &ProblemMatrix, s: usize, cfg: &McConfig) -> Result<GramInverseVerification> {
    check_size(x, s)?;
    let d = x.d();
    let factor = gram_inverse_factor(d, x.n(), s);
    let full_inv = linalg::spd_inverse(x.full_gram())?.into_entries();
    let pinv_norm = linalg::pseudo_inverse(x, &IndexSubset::full(x.n()))?.norm_squared();
    let moments = replicate_moments(cfg, d * d + 1, |rng| {
        let subset = sampler::reverse_iterative_sample_with(x, s, rng)?;
        let inv = linalg::spd_inverse(&linalg::gram(x, &subset)?)?.into_entries();
        let mut out = inv.as_slice().to_vec();
        out.push(inv.trace());
        Ok(out)
    })?;
    let (matrix_part, trace_part) = split_moments(&moments, d * d);
    Ok(GramInverseVerification {
        matrix: report(
            "gram-inverse-scaled",
            Quantity::GramInverse,
            Value::Matrix(full_inv * factor),
            &matrix_part,
            cfg,
        ),
        frobenius: report(
            "frobenius-scaled",
            Quantity::Frobenius,
            Value::Scalar(pinv_norm * factor),
            &trace_part,
            cfg,
        ),
    })
}

fn split_moments(m: &Moments, at: usize) -> (Moments, Moments) {
    let head = Moments {
        count: m.count,
        mean: m.mean[..at].to_vec(),
        m2: m.m2[..at].to_vec(),
    };
    let tail = Moments {
        count: m.count,
        mean: m.mean[at..].to_vec(),
        m2: m.m2[at..].to_vec(),
    };
    (head, tail)
}

/// `E[L(w*_S)] = (d+1)·L(w*)` for size-d samples.
pub fn mc_verify_loss(problem: &RegressionProblem, cfg: &McConfig) -> Result<VerificationReport> {
    let mut r = mc_verify_repeated(problem, 1, cfg)?;
    r.check = "loss-d-plus-one".into();
    r.quantity = Quantity::Loss;
    Ok(r)
}

/// `E[L((1/k) Σ_j w*_{S_j})] = (1 + d/k)·L(w*)` for k independent size-d samples.
pub fn mc_verify_repeated(problem: &RegressionProblem, k: usize, cfg: &McConfig) -> Result<VerificationReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let x = problem.x();
    let d = x.d();
    let target = (1.0 + d as f64 / k as f64) * regression::solve_full(problem).loss;
    let moments = replicate_moments(cfg, 1, |rng| {
        Ok(vec![averaged_loss(problem, k, rng)?])
    })?;
    Ok(report("repeated-sampling-loss", Quantity::RepeatedLoss, Value::Scalar(target), &moments, cfg))
}

/// Full-data loss of the mean of `k` size-d subsampled solutions.
pub fn averaged_loss<R: Rng + ?Sized>(problem: &RegressionProblem, k: usize, rng: &mut R) -> Result<f64> {
    let x = problem.x();
    let mut w = DVector::<f64>::zeros(x.d());
    for _ in 0..k {
        let subset = sampler::reverse_iterative_sample_with(x, x.d(), rng)?;
        w += regression::solve_subset(problem, &subset)?.w;
    }
    w /= k as f64;
    Ok(problem.loss(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    fn x23() -> ProblemMatrix {
        ProblemMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap()
    }

    fn ones() -> RegressionProblem {
        RegressionProblem::new(
            ProblemMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap(),
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(McConfig::new(99, RngSeed(0)).validate().is_err());
        assert!(McConfig::new(100, RngSeed(0)).validate().is_ok());
        let mut cfg = McConfig::new(100, RngSeed(0));
        cfg.confidence = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut single = Moments::new(1);
        for v in &data {
            single.push(&[*v]);
        }
        let mut merged = Moments::new(1);
        for chunk in data.chunks(77) {
            let mut part = Moments::new(1);
            for v in chunk {
                part.push(&[*v]);
            }
            merged.merge(&part);
        }
        assert!((single.mean[0] - merged.mean[0]).abs() < 1e-12);
        assert!((single.m2[0] - merged.m2[0]).abs() < 1e-8);
    }

    #[test]
    fn full_size_has_zero_deviation() {
        let cfg = McConfig::new(200, RngSeed(1));
        let r = mc_verify_pinv(&x23(), 3, &cfg).unwrap();
        assert!(r.passed);
        assert!(r.largest_entry_deviation < 1e-14);
        let g = mc_verify_gram_inverse(&x23(), 3, &cfg).unwrap();
        assert!(g.passed());
    }

    #[test]
    fn small_instance_pinv() {
        let cfg = McConfig::new(20_000, RngSeed(2));
        let r = mc_verify_pinv(&x23(), 2, &cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn loss_on_hand_instance() {
        let cfg = McConfig::new(10_000, RngSeed(3));
        let r = mc_verify_loss(&ones(), &cfg).unwrap();
        assert!((r.predicted.scalar().unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(r.passed, "{r:?}");
        let r = mc_verify_repeated(&ones(), 2, &cfg).unwrap();
        assert!((r.predicted.scalar().unwrap() - 1.0).abs() < 1e-14);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn realizable_loss_is_zero() {
        let x = instances::gaussian_matrix(2, 8, RngSeed(4));
        let w0 = DVector::from_vec(vec![1.0, 2.0]);
        let p = RegressionProblem::new(x.clone(), x.entries().tr_mul(&w0)).unwrap();
        let r = mc_verify_loss(&p, &McConfig::new(200, RngSeed(5))).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.estimated.scalar().unwrap() < 1e-20);
    }

    #[test]
    fn deterministic_reports() {
        let x = instances::gaussian_matrix(2, 10, RngSeed(6));
        let cfg = McConfig::new(1500, RngSeed(7));
        let a = mc_verify_gram_inverse(&x, 3, &cfg).unwrap();
        let b = mc_verify_gram_inverse(&x, 3, &cfg).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| mc_verify_gram_inverse(&x, 3, &cfg).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn zero_k_rejected() {
        assert!(mc_verify_repeated(&ones(), 0, &McConfig::new(100, RngSeed(0))).is_err());
    }

    #[test]
    fn exact_report_compares_against_tolerance() {
        let r = VerificationReport::exact("t", Quantity::Loss, Value::Scalar(1.0), Value::Scalar(1.0 + 1e-10), 1e-9);
        assert!(r.passed);
        let r = VerificationReport::exact("t", Quantity::Loss, Value::Scalar(1.0), Value::Scalar(1.1), 1e-9);
        assert!(!r.passed);
    }
}
