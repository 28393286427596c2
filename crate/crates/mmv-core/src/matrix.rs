//! Dense symmetric/rectangular matrix utilities: SPD validation, symmetric
//! square roots, log-determinants and Gram products.
//!
//! Every quantity that enters a density does so through one of the two
//! validated wrappers below, so positive-definiteness is checked exactly once
//! and determinants are always carried in log space.

use nalgebra::DMatrix;

use crate::error::{MmvError, Result};

/// Relative positive-definiteness floor: eigenvalues at or below
/// `SPD_REL_FLOOR * lambda_max` fail validation instead of being regularized.
pub const SPD_REL_FLOOR: f64 = 1e-12;

/// Relative symmetry tolerance for accepting an SPD candidate.
pub const SYM_REL_TOL: f64 = 1e-12;

/// A validated symmetric positive definite matrix.
///
/// Construction symmetrizes the input and rejects matrices that are
/// asymmetric beyond [`SYM_REL_TOL`] or have an eigenvalue at or below the
/// relative floor. Values are immutable afterwards and safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates and wraps a square matrix.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.nrows() != mat.ncols() {
            return Err(MmvError::Shape(format!(
                "SPD matrix must be square and nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if !mat.iter().all(|v| v.is_finite()) {
            return Err(MmvError::NonFinite);
        }
        let scale = mat.amax().max(1.0);
        let mut max_asym = 0.0f64;
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                max_asym = max_asym.max((mat[(i, j)] - mat[(j, i)]).abs());
            }
        }
        let tol = SYM_REL_TOL * scale;
        if max_asym > tol {
            return Err(MmvError::NotSymmetric { max_asym, tol });
        }
        let sym = symmetrize(&mat);
        let eigs = sym.clone().symmetric_eigenvalues();
        let max_e = eigs.max();
        let min_e = eigs.min();
        let floor = SPD_REL_FLOOR * max_e;
        if !(max_e > 0.0) || min_e <= floor {
            return Err(MmvError::NotPositiveDefinite {
                eigenvalue: min_e,
                floor,
            });
        }
        Ok(Self { mat: sym })
    }

    /// Identity of dimension `m`.
    pub fn identity(m: usize) -> Self {
        Self {
            mat: DMatrix::identity(m, m),
        }
    }

    /// Builds from nested rows; convenience for tests and file ingestion.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MmvError::Shape("ragged rows for square matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// The unique symmetric positive definite square root, via spectral
    /// decomposition (Cholesky would not give the symmetric root).
    pub fn sym_sqrt(&self) -> SpdMatrix {
        let eig = self.mat.clone().symmetric_eigen();
        let mut d = eig.eigenvalues.clone();
        d.apply(|v| *v = v.max(0.0).sqrt());
        let p = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        SpdMatrix {
            mat: symmetrize(&p),
        }
    }

    /// Q with Q * S * Q = I; errors if an eigenvalue sits below the floor.
    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        let eig = self.mat.clone().symmetric_eigen();
        let floor = SPD_REL_FLOOR * eig.eigenvalues.max();
        if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v <= floor) {
            return Err(MmvError::NearSingular {
                eigenvalue: *bad,
                floor,
            });
        }
        let mut d = eig.eigenvalues.clone();
        d.apply(|v| *v = 1.0 / v.sqrt());
        let q = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        Ok(SpdMatrix {
            mat: symmetrize(&q),
        })
    }

    /// Natural log of the determinant, summed over eigenvalues; never forms
    /// the raw determinant.
    pub fn logdet(&self) -> Result<f64> {
        let eigs = self.mat.clone().symmetric_eigenvalues();
        let floor = SPD_REL_FLOOR * eigs.max();
        if let Some(bad) = eigs.iter().find(|&&v| v <= floor) {
            return Err(MmvError::NearSingular {
                eigenvalue: *bad,
                floor,
            });
        }
        Ok(eigs.iter().map(|v| v.ln()).sum())
    }

    /// Symmetrized inverse.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let eig = self.mat.clone().symmetric_eigen();
        let floor = SPD_REL_FLOOR * eig.eigenvalues.max();
        if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v <= floor) {
            return Err(MmvError::NearSingular {
                eigenvalue: *bad,
                floor,
            });
        }
        let mut d = eig.eigenvalues.clone();
        d.apply(|v| *v = 1.0 / *v);
        let inv = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        Ok(SpdMatrix {
            mat: symmetrize(&inv),
        })
    }
}

/// A rectangular real block (rows x cols). Row-count constraints for Gram
/// reductions are enforced by the operations that need them, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBlock {
    mat: DMatrix<f64>,
}

impl MatrixBlock {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(MmvError::Shape(format!(
                "block must be nonempty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if !mat.iter().all(|v| v.is_finite()) {
            return Err(MmvError::NonFinite);
        }
        Ok(Self { mat })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(rows, cols))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|x| x.len() != c) {
            return Err(MmvError::Shape("ragged rows for block".into()));
        }
        if r == 0 || c == 0 {
            return Err(MmvError::Shape("block must be nonempty".into()));
        }
        Self::new(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// X'X with the lower triangle copied from the upper, so the result is
    /// symmetric exactly. Requires rows >= cols. The product can be singular
    /// (e.g. a zero block); use [`MatrixBlock::gram_spd`] when positive
    /// definiteness is required.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        if self.rows() < self.cols() {
            return Err(MmvError::Shape(format!(
                "Gram reduction needs rows >= cols, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        let mut g = self.mat.tr_mul(&self.mat);
        for i in 0..g.nrows() {
            for j in (i + 1)..g.ncols() {
                g[(j, i)] = g[(i, j)];
            }
        }
        Ok(g)
    }

    /// X'X as a validated SPD matrix; fails for rank-deficient blocks.
    pub fn gram_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.gram()?)
    }

    /// Right-multiplication X * A, the block analogue of rescaling.
    pub fn mul_right(&self, a: &DMatrix<f64>) -> Result<MatrixBlock> {
        if a.nrows() != self.cols() {
            return Err(MmvError::Shape(format!(
                "cannot multiply {}x{} block by {}x{}",
                self.rows(),
                self.cols(),
                a.nrows(),
                a.ncols()
            )));
        }
        MatrixBlock::new(&self.mat * a)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}
