//! Seeded random problem instances for tests, benchmarks and the CLI.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::ProblemMatrix;
use crate::regression::RegressionProblem;
use crate::rng::RngSeed;

/// A d × n matrix of i.i.d. standard normal entries.
///
/// Panics if `n < d`; a Gaussian matrix is full rank with probability one.
pub fn gaussian_matrix(d: usize, n: usize, seed: RngSeed) -> ProblemMatrix {
    let mut rng = seed.rng();
    let entries = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    ProblemMatrix::new(entries).expect("gaussian matrix has full row rank")
}

pub fn gaussian_vector(n: usize, seed: RngSeed) -> DVector<f64> {
    let mut rng = seed.rng();
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Gaussian design with Gaussian labels (non-realizable almost surely).
pub fn gaussian_regression(d: usize, n: usize, seed: RngSeed) -> RegressionProblem {
    let x = gaussian_matrix(d, n, seed.derive(0));
    let y = gaussian_vector(n, seed.derive(1));
    RegressionProblem::new(x, y).expect("label length matches")
}

/// Gaussian matrix whose last `duplicates` columns copy earlier ones, so
/// size-d volume sampling lacks full support whenever `duplicates > 0`.
pub fn matrix_with_duplicates(d: usize, n: usize, duplicates: usize, seed: RngSeed) -> ProblemMatrix {
    assert!(duplicates < n && n - duplicates >= d);
    let base = gaussian_matrix(d, n - duplicates, seed);
    let mut entries = DMatrix::zeros(d, n);
    entries
        .columns_mut(0, n - duplicates)
        .copy_from(base.entries());
    for k in 0..duplicates {
        let src = k % (n - duplicates);
        let col = base.column(src).clone_owned();
        entries.set_column(n - duplicates + k, &col);
    }
    ProblemMatrix::new(entries).expect("base columns have full row rank")
}
