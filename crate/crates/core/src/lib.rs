//! Exact volume sampling of column subsets of a wide full-rank matrix.
//!
//! Given `X ∈ R^{d×n}` of rank `d` and a size `d ≤ s ≤ n`, volume sampling
//! draws `S` with probability proportional to `det(X_S X_Sᵀ)`. Under this
//! distribution the padded pseudo-inverse `(X I_S)⁺` is an unbiased estimate
//! of `X⁺`, and least-squares fits on the sampled labels are unbiased for the
//! full solution.
//!
//! - [`sampler`]: the fast reverse iterative sampler and exhaustive oracles.
//! - [`regression`]: full, subset and averaged least-squares solutions.
//! - [`oracle`]: exact expectations by enumeration.
//! - [`montecarlo`]: seeded statistical checks with confidence intervals.
//! - [`suite`]: the check batteries behind the command-line `verify`.

pub mod error;
pub mod instances;
pub mod kahan;
pub mod linalg;
pub mod montecarlo;
pub mod oracle;
pub mod regression;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod subset;
pub mod suite;

pub use error::{Error, Result};
pub use linalg::{ProblemMatrix, SpdMatrix};
pub use montecarlo::{McConfig, VerificationReport};
pub use oracle::{ExactExpectation, Quantity, Value};
pub use regression::{RegressionProblem, Solution};
pub use rng::RngSeed;
pub use sampler::{reverse_iterative_sample, ReverseSampler, SamplerState};
pub use subset::IndexSubset;

pub use nalgebra::{DMatrix, DVector};
