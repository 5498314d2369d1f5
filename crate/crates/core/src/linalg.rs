//! Dense kernels: Gram matrices, Cholesky-based SPD inversion and
//! determinants, column-subset pseudo-inverses and rank-one updates.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{Error, Result};
use crate::subset::IndexSubset;

/// Pivots below `PIVOT_RTOL * trace(A) / k` are treated as zero.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Relative asymmetry tolerated when wrapping a matrix as [`SpdMatrix`].
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Sherman-Morrison denominators at or below this magnitude are rejected.
pub const DENOMINATOR_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: DMatrix<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix, reading only its lower triangle.
    ///
    /// Fails with [`Error::SingularMatrix`] at the first pivot that is not
    /// strictly above `PIVOT_RTOL * trace / k`.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(Error::InvalidShape(format!(
                "expected square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if k == 0 {
            return Ok(Self { lower: a.clone() });
        }
        let tolerance = PIVOT_RTOL * a.trace().max(0.0) / k as f64;
        let mut lower = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            let mut pivot = a[(j, j)];
            for p in 0..j {
                pivot -= lower[(j, p)] * lower[(j, p)];
            }
            if pivot.is_nan() || pivot <= tolerance {
                return Err(Error::SingularMatrix { pivot: j, tolerance });
            }
            let ljj = pivot.sqrt();
            lower[(j, j)] = ljj;
            for i in j + 1..k {
                let mut v = a[(i, j)];
                for p in 0..j {
                    v -= lower[(i, p)] * lower[(j, p)];
                }
                lower[(i, j)] = v / ljj;
            }
        }
        Ok(Self { lower })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        let prod: f64 = self.lower.diagonal().iter().product();
        prod * prod
    }

    /// Solves `A X = B` in place by forward and back substitution.
    pub fn solve_mut(&self, b: &mut DMatrix<f64>) {
        let k = self.dim();
        assert_eq!(b.nrows(), k, "right-hand side has wrong row count");
        let l = &self.lower;
        for c in 0..b.ncols() {
            for i in 0..k {
                let mut v = b[(i, c)];
                for p in 0..i {
                    v -= l[(i, p)] * b[(p, c)];
                }
                b[(i, c)] = v / l[(i, i)];
            }
            for i in (0..k).rev() {
                let mut v = b[(i, c)];
                for p in i + 1..k {
                    v -= l[(p, i)] * b[(p, c)];
                }
                b[(i, c)] = v / l[(i, i)];
            }
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.solve_mut(&mut out);
        out
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_mut(&mut m);
        DVector::from_column_slice(m.as_slice())
    }

    /// `A⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = DMatrix::identity(self.dim(), self.dim());
        self.solve_mut(&mut inv);
        symmetrize(&mut inv);
        inv
    }
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    factor: Cholesky,
}

impl SpdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        let factor = Cholesky::factor(&entries)?;
        Ok(Self { entries, factor })
    }

    pub fn identity(k: usize) -> Self {
        Self::new(DMatrix::identity(k, k)).expect("identity is positive definite")
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn det(&self) -> f64 {
        self.factor.det()
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidShape(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::InvalidShape(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let k = a.nrows();
    for j in 0..k {
        for i in j + 1..k {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// A wide design matrix `X` (d × n, columns are data points) of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemMatrix {
    entries: DMatrix<f64>,
    gram: SpdMatrix,
}

impl ProblemMatrix {
    /// Validates shape, finiteness and full row rank.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (d, n) = entries.shape();
        if d == 0 || n < d {
            return Err(Error::InvalidShape(format!(
                "need n >= d >= 1, got d = {d}, n = {n}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("matrix has non-finite entries".into()));
        }
        let mut g = &entries * entries.transpose();
        symmetrize(&mut g);
        let gram = SpdMatrix::new(g).map_err(|_| Error::RankDeficient { d, n })?;
        Ok(Self { entries, gram })
    }

    /// Builds from row slices (`d` rows of `n` values each).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(d, n, |i, j| rows[i][j]))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, i: usize) -> DVectorView<'_, f64> {
        self.entries.column(i)
    }

    /// Gram matrix `X Xᵀ` of all columns.
    pub fn full_gram(&self) -> &SpdMatrix {
        &self.gram
    }

    /// `X_S`, the d × |S| column submatrix.
    pub fn columns(&self, subset: &IndexSubset) -> Result<DMatrix<f64>> {
        self.check_subset(subset)?;
        Ok(self.entries.select_columns(subset.indices()))
    }

    pub(crate) fn check_subset(&self, subset: &IndexSubset) -> Result<()> {
        if subset.ambient() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: subset.ambient(),
            });
        }
        match subset.indices().iter().find(|&&i| i >= self.n()) {
            Some(&index) => Err(Error::IndexOutOfRange { index, n: self.n() }),
            None => Ok(()),
        }
    }
}

/// `X_S X_Sᵀ` with no definiteness check.
pub fn gram_matrix(x: &ProblemMatrix, subset: &IndexSubset) -> Result<DMatrix<f64>> {
    x.check_subset(subset)?;
    let d = x.d();
    let mut g = DMatrix::<f64>::zeros(d, d);
    for &i in subset.indices() {
        let col = x.column(i);
        for b in 0..d {
            let cb = col[b];
            for a in b..d {
                g[(a, b)] += col[a] * cb;
            }
        }
    }
    symmetrize_from_lower(&mut g);
    Ok(g)
}

fn symmetrize_from_lower(g: &mut DMatrix<f64>) {
    let k = g.nrows();
    for b in 0..k {
        for a in b + 1..k {
            g[(b, a)] = g[(a, b)];
        }
    }
}

/// `X_S X_Sᵀ` as a factored SPD matrix; fails when `X_S` has rank below d.
pub fn gram(x: &ProblemMatrix, subset: &IndexSubset) -> Result<SpdMatrix> {
    SpdMatrix::new(gram_matrix(x, subset)?)
}

pub fn spd_inverse(a: &SpdMatrix) -> Result<SpdMatrix> {
    SpdMatrix::new(a.factor().inverse())
}

/// `det(X_S X_Sᵀ)`, exactly zero when the factorization detects rank deficiency.
pub fn gram_det(x: &ProblemMatrix, subset: &IndexSubset) -> Result<f64> {
    Ok(log_gram_det(x, subset)?.map_or(0.0, f64::exp))
}

/// `ln det(X_S X_Sᵀ)`, or `None` for a singular Gram matrix.
pub fn log_gram_det(x: &ProblemMatrix, subset: &IndexSubset) -> Result<Option<f64>> {
    let g = gram_matrix(x, subset)?;
    Ok(Cholesky::factor(&g).ok().map(|c| c.log_det()))
}

/// Determinant of a symmetric positive-semidefinite matrix through its
/// Cholesky factor; exactly zero when a pivot falls below tolerance.
pub fn psd_det(a: &DMatrix<f64>) -> f64 {
    Cholesky::factor(a).map_or(0.0, |c| c.det())
}

/// `(X I_S)⁺`: an n × d matrix whose rows in `S` hold `X_Sᵀ (X_S X_Sᵀ)⁻¹`
/// and whose remaining rows are zero.
pub fn pseudo_inverse(x: &ProblemMatrix, subset: &IndexSubset) -> Result<DMatrix<f64>> {
    let g = gram(x, subset)?;
    // (X_S X_Sᵀ)⁻¹ X_S, one column per member of S
    let mut rhs = x.columns(subset)?;
    g.factor().solve_mut(&mut rhs);
    let mut out = DMatrix::<f64>::zeros(x.n(), x.d());
    for (k, &i) in subset.indices().iter().enumerate() {
        out.row_mut(i).copy_from(&rhs.column(k).transpose());
    }
    Ok(out)
}

/// `(A + sign·u uᵀ)⁻¹` from `A⁻¹` by the Sherman-Morrison formula.
pub fn sherman_morrison_update(ainv: &SpdMatrix, u: &DVector<f64>, sign: f64) -> Result<SpdMatrix> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidConfig(format!(
            "sign must be +1 or -1, got {sign}"
        )));
    }
    if u.len() != ainv.dim() {
        return Err(Error::DimensionMismatch {
            expected: ainv.dim(),
            actual: u.len(),
        });
    }
    let au = ainv.entries() * u;
    let denominator = 1.0 + sign * u.dot(&au);
    if denominator.abs() <= DENOMINATOR_TOL {
        return Err(Error::DenominatorVanishes { denominator });
    }
    let mut out = ainv.entries() - (&au * au.transpose()) * (sign / denominator);
    symmetrize(&mut out);
    SpdMatrix::new(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
