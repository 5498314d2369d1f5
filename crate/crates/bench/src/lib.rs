//! Benchmark fixtures shared by the criterion targets.

use volsamp::{instances, ProblemMatrix, RngSeed};

/// Gaussian d × n design used by every benchmark at that shape.
pub fn fixture(d: usize, n: usize) -> ProblemMatrix {
    instances::gaussian_matrix(d, n, RngSeed(0xbe_0c4 ^ ((d as u64) << 32) ^ n as u64))
}
