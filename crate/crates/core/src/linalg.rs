//! Thin wrappers over faer's sparse matrices and direct solvers.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{ColRef, Conj, MatMut, Side};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("system has no unknowns")]
    Empty,
}

/// What an assembled operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Stiffness,
    Mass,
    WeightedMass,
    Observation,
    Tangent,
    Kkt,
    General,
}

#[derive(Debug, Clone)]
pub struct SparseMat {
    inner: SparseColMat<usize, f64>,
    pub kind: OperatorKind,
}

impl SparseMat {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        trip: &[Triplet<usize, usize, f64>],
        kind: OperatorKind,
    ) -> Self {
        let inner = SparseColMat::try_new_from_triplets(nrows, ncols, trip)
            .expect("triplet indices are in range");
        SparseMat { inner, kind }
    }

    pub fn zeros(nrows: usize, ncols: usize, kind: OperatorKind) -> Self {
        Self::from_triplets(nrows, ncols, &[], kind)
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let a = self.inner.as_ref();
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..a.ncols() {
            for (i, v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
                out.push((i, j, *v));
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let a = self.inner.as_ref();
        a.row_idx_of_col(j)
            .zip(a.val_of_col(j))
            .filter(|(r, _)| *r == i)
            .map(|(_, v)| *v)
            .sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let y = &self.inner * ColRef::from_slice(x);
        (0..y.nrows()).map(|i| y[i]).collect()
    }

    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows());
        let y = self.inner.as_ref().transpose() * ColRef::from_slice(x);
        (0..y.nrows()).map(|i| y[i]).collect()
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, j, v) in self.entries() {
            d[i][j] += v;
        }
        d
    }

    /// `self + s * other` (same shape).
    pub fn add_scaled(&self, s: f64, other: &SparseMat) -> SparseMat {
        assert_eq!((self.nrows(), self.ncols()), (other.nrows(), other.ncols()));
        let mut t: Vec<_> = self
            .entries()
            .into_iter()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        t.extend(other.entries().into_iter().map(|(i, j, v)| Triplet::new(i, j, s * v)));
        SparseMat::from_triplets(self.nrows(), self.ncols(), &t, self.kind)
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let e = self.entries();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows(), self.ncols(), e.len())?;
        for (i, j, v) in e {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct SpdSolver {
    n: usize,
    llt: Option<Llt<usize, f64>>,
}

impl SpdSolver {
    pub fn new(a: &SparseMat) -> Result<Self, SolveError> {
        let n = a.nrows();
        if n == 0 {
            return Ok(SpdSolver { n, llt: None });
        }
        let llt = a
            .inner
            .sp_cholesky(Side::Lower)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(SpdSolver { n, llt: Some(llt) })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        if let Some(llt) = &self.llt {
            llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        x
    }
}

/// Sparse LU factor of a general square matrix.
pub struct LuSolver {
    n: usize,
    lu: Option<Lu<usize, f64>>,
}

impl LuSolver {
    pub fn new(a: &SparseMat) -> Result<Self, SolveError> {
        let n = a.nrows();
        if n == 0 {
            return Ok(LuSolver { n, lu: None });
        }
        let lu = a
            .inner
            .sp_lu()
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(LuSolver { n, lu: Some(lu) })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        if let Some(lu) = &self.lu {
            lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        x
    }
}
