//! Batteries of checks run by `volsamp verify`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, ProblemMatrix};
use crate::montecarlo::{self, McConfig, VerificationReport};
use crate::oracle::{self, covariance_factor, gram_inverse_factor, Quantity, Value};
use crate::regression::{self, RegressionProblem};
use crate::sampler;
use crate::subset::{binomial, IndexSubset};

/// Absolute or `max(1, |value|)`-relative tolerance for exact identities.
pub const EXACT_TOL: f64 = 1e-9;
/// Leave-one-out identity tolerance.
pub const LOO_TOL: f64 = 1e-8;
/// Probabilities must sum to one within this.
pub const MASS_TOL: f64 = 1e-10;
/// Slack for the semidefinite branches.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub subsets: u128,
    pub tuples: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            subsets: sampler::DEFAULT_SUBSET_CAP,
            tuples: oracle::DEFAULT_TUPLE_CAP,
        }
    }
}

fn rel_tol(value: f64) -> f64 {
    EXACT_TOL * value.abs().max(1.0)
}

/// Report for `A ⪯ B`: passes iff `λ_min(B - A) >= -PSD_TOL`.
fn psd_report(check: &str, quantity: Quantity, bound: Value, estimated: Value) -> VerificationReport {
    let gap = bound.as_matrix() - estimated.as_matrix();
    let min_eig = linalg::min_eigenvalue(&gap);
    let mut r = VerificationReport::exact(check, quantity, bound, estimated, f64::INFINITY);
    r.passed = min_eig >= -PSD_TOL;
    r.tolerance = PSD_TOL;
    r.note = Some(format!("psd-inequality branch verified: min eigenvalue of gap {min_eig:e}"));
    if !r.passed {
        r.note = Some(format!("psd-inequality branch violated: min eigenvalue of gap {min_eig:e}"));
    }
    r
}

fn upper_bound_report(check: &str, quantity: Quantity, bound: f64, estimated: f64) -> VerificationReport {
    let mut r = VerificationReport::exact(check, quantity, Value::Scalar(bound), Value::Scalar(estimated), PSD_TOL);
    r.passed = estimated <= bound + PSD_TOL;
    r.note = Some(if r.passed {
        "upper-bound branch verified".into()
    } else {
        "upper-bound branch violated".into()
    });
    r
}

/// Every exact identity applicable to `x` (and `y`, when given) at size `s`.
pub fn exact_suite(x: &ProblemMatrix, y: Option<&DVector<f64>>, s: usize, caps: Caps) -> Result<Vec<VerificationReport>> {
    sampler::check_size(x, s)?;
    let (d, n) = (x.d(), x.n());
    let full = IndexSubset::full(n);
    let pinv = linalg::pseudo_inverse(x, &full)?;
    let full_inv = linalg::spd_inverse(x.full_gram())?.into_entries();
    let mut out = Vec::new();

    let dist = sampler::enumerate_volume_distribution(x, s, caps.subsets)?;
    out.push(VerificationReport::exact(
        "distribution-normalized",
        Quantity::Probability,
        Value::Scalar(1.0),
        Value::Scalar(dist.total_mass()),
        MASS_TOL,
    ));

    let (lhs, rhs) = oracle::cauchy_binet_check(x, s, caps.subsets)?;
    out.push(VerificationReport::exact(
        "cauchy-binet",
        Quantity::Volume,
        Value::Scalar(rhs),
        Value::Scalar(lhs),
        rel_tol(rhs),
    ).with_note("sum of subset volumes equals C(n-d, s-d) det(XXᵀ)"));

    let e = oracle::exact_pinv_expectation(x, s, caps.subsets)?;
    out.push(VerificationReport::exact(
        "pinv-unbiased",
        Quantity::PseudoInverse,
        Value::Matrix(pinv.clone()),
        e.value,
        EXACT_TOL,
    ));

    let factor = gram_inverse_factor(d, n, s);
    let support_complete = dist.support_complete();
    let e = oracle::exact_gram_inverse_expectation(x, s, caps.subsets)?;
    let scaled = Value::Matrix(&full_inv * factor);
    out.push(if support_complete {
        VerificationReport::exact("gram-inverse-scaled", Quantity::GramInverse, scaled, e.value, EXACT_TOL)
            .with_note("equality branch (full support)")
    } else {
        psd_report("gram-inverse-scaled", Quantity::GramInverse, scaled, e.value)
    });

    let e = oracle::exact_covariance(x, s, caps.subsets)?;
    let cov_target = pinv.tr_mul(&pinv) * covariance_factor(d, n, s);
    let cov_trace = e.value.as_matrix().trace();
    out.push(if support_complete {
        VerificationReport::exact("covariance", Quantity::Covariance, Value::Matrix(cov_target.clone()), e.value, EXACT_TOL)
            .with_note("equality branch (full support)")
    } else {
        psd_report("covariance", Quantity::Covariance, Value::Matrix(cov_target.clone()), e.value)
    });

    let frob_target = factor * pinv.norm_squared();
    let f = oracle::exact_frobenius_expectation(x, s, caps.subsets)?;
    let f_value = f.value.scalar().expect("scalar");
    out.push(if support_complete {
        VerificationReport::exact("frobenius-scaled", Quantity::Frobenius, Value::Scalar(frob_target), f.value, rel_tol(frob_target))
    } else {
        upper_bound_report("frobenius-scaled", Quantity::Frobenius, frob_target, f_value)
    });
    // trace of the covariance is the Frobenius expectation minus ‖X⁺‖²_F
    out.push(VerificationReport::exact(
        "covariance-trace",
        Quantity::Frobenius,
        Value::Scalar(f_value - pinv.norm_squared()),
        Value::Scalar(cov_trace),
        rel_tol(f_value),
    ));

    let mut worst_tv: f64 = 0.0;
    let mut levels = 0;
    for level in d..n {
        if binomial(n, level + 1) > caps.subsets || binomial(n, level) > caps.subsets {
            continue;
        }
        worst_tv = worst_tv.max(oracle::layer_total_variation(x, level, caps.subsets)?);
        levels += 1;
    }
    if levels > 0 {
        out.push(VerificationReport::exact(
            "layer-consistency",
            Quantity::Probability,
            Value::Scalar(0.0),
            Value::Scalar(worst_tv),
            EXACT_TOL,
        ).with_note(format!("largest total variation over {levels} levels")));
    }

    if let Some(y) = y {
        let problem = RegressionProblem::new(x.clone(), y.clone())?;
        out.extend(exact_regression_checks(&problem, s, caps)?);
    }
    Ok(out)
}

fn exact_regression_checks(problem: &RegressionProblem, s: usize, caps: Caps) -> Result<Vec<VerificationReport>> {
    let x = problem.x();
    let (d, n) = (x.d(), x.n());
    let full = regression::solve_full(problem);
    let mut out = Vec::new();

    let e = oracle::exact_weight_expectation(problem, s, caps.subsets)?;
    out.push(VerificationReport::exact(
        "weights-unbiased",
        Quantity::WeightVector,
        Value::Vector(full.w.clone()),
        e.value,
        EXACT_TOL,
    ));

    if binomial(n, d) <= caps.subsets {
        let general_position = sampler::has_full_support(x, d, caps.subsets)?;
        let e = oracle::exact_loss_expectation(problem, caps.subsets)?;
        let target = (d + 1) as f64 * full.loss;
        let got = e.value.scalar().expect("scalar");
        out.push(if general_position {
            VerificationReport::exact("loss-d-plus-one", Quantity::Loss, Value::Scalar(target), e.value, rel_tol(target))
        } else {
            upper_bound_report("loss-d-plus-one", Quantity::Loss, target, got)
        });

        for k in 1..=3usize {
            let e = match oracle::exact_repeated_sampling_loss(problem, k, caps.subsets, caps.tuples) {
                Ok(e) => e,
                Err(Error::TooManySubsets { .. }) => break,
                Err(err) => return Err(err),
            };
            let target = (1.0 + d as f64 / k as f64) * full.loss;
            let got = e.value.scalar().expect("scalar");
            let name = format!("repeated-sampling-loss-k{k}");
            out.push(if general_position {
                VerificationReport::exact(&name, Quantity::RepeatedLoss, Value::Scalar(target), e.value, rel_tol(target))
            } else {
                upper_bound_report(&name, Quantity::RepeatedLoss, target, got)
            });
        }
    }

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..n {
        match regression::leave_one_out_check(problem, i) {
            Ok((lhs, rhs)) => {
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
                checked += 1;
            }
            Err(Error::SingularMatrix { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if checked > 0 {
        out.push(VerificationReport::exact(
            "leave-one-out",
            Quantity::LeaveOneOut,
            Value::Scalar(0.0),
            Value::Scalar(worst),
            LOO_TOL,
        ).with_note(format!("largest relative gap over {checked} columns")));
    }

    let (lhs, rhs) = regression::augmented_det_identity(problem);
    out.push(VerificationReport::exact(
        "augmented-determinant",
        Quantity::Volume,
        Value::Scalar(rhs),
        Value::Scalar(lhs),
        rel_tol(rhs.max(lhs)),
    ));
    Ok(out)
}

/// Monte Carlo counterparts at size `s`; label checks use size-d samples and
/// averages over `k` draws.
pub fn mc_suite(
    x: &ProblemMatrix,
    y: Option<&DVector<f64>>,
    s: usize,
    k: usize,
    cfg: &McConfig,
) -> Result<Vec<VerificationReport>> {
    cfg.validate()?;
    let mut out = vec![montecarlo::mc_verify_pinv(x, s, cfg)?];
    let g = montecarlo::mc_verify_gram_inverse(x, s, cfg)?;
    out.push(g.matrix);
    out.push(g.frobenius);
    if let Some(y) = y {
        let problem = RegressionProblem::new(x.clone(), y.clone())?;
        out.push(montecarlo::mc_verify_loss(&problem, cfg)?);
        if k > 1 {
            let mut r = montecarlo::mc_verify_repeated(&problem, k, cfg)?;
            r.check = format!("repeated-sampling-loss-k{k}");
            out.push(r);
        }
    }
    Ok(out)
}
