//! Least squares on the columns of a [`ProblemMatrix`].
//!
//! Weights solve `min_w ‖Xᵀw - y‖²`. Every [`Solution`] reports the loss on
//! all `n` labels, even when it was fitted on a subset.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, ProblemMatrix};
use crate::subset::IndexSubset;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: ProblemMatrix,
    y: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: ProblemMatrix, y: DVector<f64>) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("labels have non-finite entries".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &ProblemMatrix {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Full-data loss `L(w) = ‖Xᵀw - y‖²`.
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        self.residuals(w).norm_squared()
    }

    pub fn residuals(&self, w: &DVector<f64>) -> DVector<f64> {
        self.x.entries().tr_mul(w) - &self.y
    }

    /// Loss on a single column, `ℓ_i(w) = (x_iᵀw - y_i)²`.
    pub fn pointwise_loss(&self, w: &DVector<f64>, i: usize) -> f64 {
        let r = self.x.column(i).dot(w) - self.y[i];
        r * r
    }

    /// `X̃`: X with the label row `yᵀ` appended.
    pub fn augmented(&self) -> DMatrix<f64> {
        let (d, n) = (self.x.d(), self.x.n());
        DMatrix::from_fn(d + 1, n, |r, c| {
            if r < d {
                self.x.entries()[(r, c)]
            } else {
                self.y[c]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: DVector<f64>,
    /// Full-data loss of `w`.
    pub loss: f64,
    /// Labels consumed to produce `w`.
    pub support: IndexSubset,
}

/// `w* = (X⁺)ᵀ y`.
pub fn solve_full(problem: &RegressionProblem) -> Solution {
    solve_subset(problem, &IndexSubset::full(problem.x.n()))
        .expect("full column set has full row rank")
}

/// `w*_S = (X_S⁺)ᵀ y_S`, the least-squares fit to the labels in `S`.
pub fn solve_subset(problem: &RegressionProblem, subset: &IndexSubset) -> Result<Solution> {
    let g = linalg::gram(&problem.x, subset)?;
    let mut rhs = DVector::<f64>::zeros(problem.x.d());
    for &i in subset.indices() {
        rhs.axpy(problem.y[i], &problem.x.column(i), 1.0);
    }
    let w = g.factor().solve_vector(&rhs);
    let loss = problem.loss(&w);
    Ok(Solution {
        w,
        loss,
        support: subset.clone(),
    })
}

/// Mean of the subset solutions; its loss is the full-data loss of the mean.
pub fn averaged_solution(problem: &RegressionProblem, samples: &[IndexSubset]) -> Result<Solution> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    };
    let mut w = DVector::<f64>::zeros(problem.x.d());
    let mut support = first.clone();
    for subset in samples {
        w += solve_subset(problem, subset)?.w;
        support = support.union(subset)?;
    }
    w /= samples.len() as f64;
    let loss = problem.loss(&w);
    Ok(Solution { w, loss, support })
}

/// Leave-one-out identity: returns `(L(w*), L(w*₋ᵢ) - x_iᵀ(XXᵀ)⁻¹x_i ℓ_i(w*₋ᵢ))`.
pub fn leave_one_out_check(problem: &RegressionProblem, i: usize) -> Result<(f64, f64)> {
    let n = problem.x.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let full = solve_full(problem);
    let rest = IndexSubset::full(n).without(i).expect("i < n");
    let dropped = solve_subset(problem, &rest)?;
    let col = problem.x.column(i).clone_owned();
    let leverage = col.dot(&problem.x.full_gram().factor().solve_vector(&col));
    let rhs = dropped.loss - leverage * problem.pointwise_loss(&dropped.w, i);
    Ok((full.loss, rhs))
}

/// Volume identity for the augmented matrix: `(det(X̃X̃ᵀ), det(XXᵀ)·L(w*))`.
pub fn augmented_det_identity(problem: &RegressionProblem) -> (f64, f64) {
    let aug = problem.augmented();
    let lhs = linalg::psd_det(&(&aug * aug.transpose()));
    let rhs = problem.x.full_gram().det() * solve_full(problem).loss;
    (lhs, rhs)
}

/// For `|T| = d + 1` and `j ∈ T`:
/// `(det(X̃_T X̃_Tᵀ), det(X_{T-j} X_{T-j}ᵀ)·ℓ_j(w*_{T-j}))`.
pub fn column_removal_det_identity(
    problem: &RegressionProblem,
    subset: &IndexSubset,
    j: usize,
) -> Result<(f64, f64)> {
    let d = problem.x.d();
    if subset.len() != d + 1 {
        return Err(Error::SizeOutOfRange {
            size: subset.len(),
            min: d + 1,
            max: d + 1,
        });
    }
    let rest = subset
        .without(j)
        .ok_or(Error::IndexOutOfRange { index: j, n: problem.x.n() })?;
    let aug = problem.augmented().select_columns(subset.indices());
    let lhs = linalg::psd_det(&(&aug * aug.transpose()));
    let rhs = match solve_subset(problem, &rest) {
        Ok(sol) => linalg::gram_det(&problem.x, &rest)? * problem.pointwise_loss(&sol.w, j),
        Err(Error::SingularMatrix { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    Ok((lhs, rhs))
}
