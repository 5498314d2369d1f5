//! Compensated (Kahan-Babuska) accumulation for scalars and matrices.

use nalgebra::DMatrix;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Entrywise compensated accumulator for a fixed-shape matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KahanMatrix {
    nrows: usize,
    ncols: usize,
    cells: Vec<KahanSum>,
}

impl KahanMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            cells: vec![KahanSum::new(); nrows * ncols],
        }
    }

    /// Adds `weight * m`.
    pub fn add_scaled(&mut self, m: &DMatrix<f64>, weight: f64) {
        assert_eq!(m.shape(), (self.nrows, self.ncols));
        for (cell, v) in self.cells.iter_mut().zip(m.iter()) {
            cell.add(weight * v);
        }
    }

    pub fn merge(&mut self, other: &KahanMatrix) {
        assert_eq!((other.nrows, other.ncols), (self.nrows, self.ncols));
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }

    pub fn value(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(self.nrows, self.ncols, self.cells.iter().map(KahanSum::value))
    }
}
