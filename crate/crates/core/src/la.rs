//! Small linear-algebra layer: triplet/CSC sparse matrices backed by `faer`
//! for direct factorizations, plus dense eigen/rank utilities from `nalgebra`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LaError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Triplet accumulator for building sparse matrices.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl SparseBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if val != 0.0 {
            self.triplets.push(Triplet::new(row, col, val));
        }
    }

    /// Overwrite semantics: `set` entries replace anything previously pushed
    /// at the same position (used for coefficient-level operators where
    /// shared entities are visited from several cells with equal values).
    pub fn set(&mut self, row: usize, col: usize, val: f64) {
        // Duplicates are summed by faer; track explicit overwrites instead.
        self.triplets
            .retain(|t| !(t.row == row && t.col == col));
        if val != 0.0 {
            self.triplets.push(Triplet::new(row, col, val));
        }
    }

    pub fn build(&self) -> SparseMat {
        let m = SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.triplets)
            .expect("invalid triplets");
        SparseMat { inner: m }
    }
}

/// Immutable sparse matrix (CSC), duplicate triplets summed.
#[derive(Debug, Clone)]
pub struct SparseMat {
    inner: SparseColMat<usize, f64>,
}

impl SparseMat {
    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Self {
        let trip: Vec<_> = t.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::try_new_from_triplets(nrows, ncols, &trip).expect("invalid triplets");
        SparseMat { inner: m }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    /// y = A x
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = DVector::zeros(self.nrows());
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let rows = self.inner.row_idx_of_col(j);
            let vals = self.inner.val_of_col(j);
            for (r, v) in rows.zip(vals) {
                y[r] += v * xj;
            }
        }
        y
    }

    /// y = A^T x
    pub fn mul_transpose_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows());
        let mut y = DVector::zeros(self.ncols());
        for j in 0..self.ncols() {
            let rows = self.inner.row_idx_of_col(j);
            let vals = self.inner.val_of_col(j);
            let mut acc = 0.0;
            for (r, v) in rows.zip(vals) {
                acc += v * x[r];
            }
            y[j] = acc;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for j in 0..self.ncols() {
            let rows = self.inner.row_idx_of_col(j);
            let vals = self.inner.val_of_col(j);
            for (r, v) in rows.zip(vals) {
                d[(r, j)] += v;
            }
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.ncols() {
            let rows = self.inner.row_idx_of_col(j);
            let vals = self.inner.val_of_col(j);
            for (r, v) in rows.zip(vals) {
                out.push((r, j, *v));
            }
        }
        out
    }

    /// Entrywise sum with another matrix of the same shape.
    pub fn add(&self, other: &SparseMat) -> SparseMat {
        assert_eq!(self.nrows(), other.nrows());
        assert_eq!(self.ncols(), other.ncols());
        let mut t = self.triplets();
        t.extend(other.triplets());
        SparseMat::from_triplets(self.nrows(), self.ncols(), &t)
    }

    /// Sparse LU factorization (general square matrices).
    pub fn lu(&self) -> Result<SparseLu, LaError> {
        if self.nrows() != self.ncols() {
            return Err(LaError::Dimension(format!(
                "lu of {}x{}",
                self.nrows(),
                self.ncols()
            )));
        }
        let f = self
            .inner
            .sp_lu()
            .map_err(|e| LaError::Factorization(format!("{e:?}")))?;
        Ok(SparseLu { inner: f, n: self.nrows() })
    }

    /// Sparse Cholesky (SPD matrices).
    pub fn cholesky(&self) -> Result<SparseCholesky, LaError> {
        let f = self
            .inner
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| LaError::Factorization(format!("{e:?}")))?;
        Ok(SparseCholesky { inner: f, n: self.nrows() })
    }
}

pub struct SparseLu {
    inner: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.inner.solve_in_place(rhs.as_mut());
        DVector::from_fn(self.n, |i, _| rhs[(i, 0)])
    }
}

pub struct SparseCholesky {
    inner: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.inner.solve_in_place(rhs.as_mut());
        DVector::from_fn(self.n, |i, _| rhs[(i, 0)])
    }
}

/// Numerical rank via column-pivoted QR with relative threshold.
pub fn rank(mat: &DMatrix<f64>, rel_tol: f64) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    let qr = mat.clone().col_piv_qr();
    let r = qr.r();
    let k = r.nrows().min(r.ncols());
    let dmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if dmax == 0.0 {
        return 0;
    }
    (0..k).filter(|&i| r[(i, i)].abs() > rel_tol * dmax).count()
}

/// Largest generalized eigenvalue of the symmetric-definite pencil
/// `A x = lambda B x` (A symmetric, B SPD), by Cholesky reduction.
pub fn max_gen_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, LaError> {
    let chol = b.clone().cholesky().ok_or(LaError::Singular)?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let linv_a = l.clone().solve_lower_triangular(a).ok_or(LaError::Singular)?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or(LaError::Singular)?;
    let sym = 0.5 * (&c + c.transpose());
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
}

/// Symmetrize in place: A <- (A + A^T)/2.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let at = a.transpose();
    *a += at;
    *a *= 0.5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_lu_solves() {
        let a = SparseMat::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (1, 1, 2.0), (2, 2, 1.0), (0, 1, 1.0), (1, 0, 1.0)],
        );
        let lu = a.lu().unwrap();
        let b = DVector::from_vec(vec![5.0, 3.0, 1.0]);
        let x = lu.solve(&b);
        let r = a.mul_vec(&x) - b;
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let mut m = DMatrix::zeros(4, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        // column 2 = column 0 + column 1
        m[(0, 2)] = 1.0;
        m[(1, 2)] = 1.0;
        assert_eq!(rank(&m, 1e-9), 2);
    }

    #[test]
    fn gen_eig_simple() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let l = max_gen_eigenvalue(&a, &b).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
    }
}
