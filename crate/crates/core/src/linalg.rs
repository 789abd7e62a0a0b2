//! Complex and Hermitian linear-algebra primitives shared by every module.
//!
//! Conventions fixed here and relied on everywhere else:
//! - `vec_col` stacks columns (column-major), matching the identity
//!   `vec(A X B) = (Bᵀ ⊗ A) vec(X)` used by the robust LMI constructions.
//! - `embed` maps a Hermitian `H` to the real symmetric block form
//!   `[[Re H, -Im H], [Im H, Re H]]`, which duplicates the spectrum and
//!   doubles ranks; rank decisions therefore always happen on the complex
//!   side.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Default absolute eigenvalue tolerance for PSD decisions.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max asymmetry {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Hermitian matrix with the `A = Aᴴ` invariant enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    mat: CMat,
}

impl HermitianMatrix {
    /// Validates squareness, finiteness, and conjugate symmetry
    /// (relative tolerance `1e-12` against the largest entry).
    pub fn new(mat: CMat) -> Result<Self, LinalgError> {
        if mat.nrows() != mat.ncols() {
            return Err(LinalgError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let scale = mat.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let mut max_dev = 0.0f64;
        for i in 0..mat.nrows() {
            for j in i..mat.ncols() {
                let dev = (mat[(i, j)] - mat[(j, i)].conj()).norm();
                max_dev = max_dev.max(dev);
            }
        }
        if max_dev > 1e-12 * scale.max(1.0) {
            return Err(LinalgError::NotHermitian { max_dev });
        }
        Ok(Self { mat })
    }

    /// Symmetrizes `(A + Aᴴ)/2`; for results of floating-point arithmetic
    /// that are Hermitian up to roundoff.
    pub fn from_nearly(mat: CMat) -> Result<Self, LinalgError> {
        if mat.nrows() != mat.ncols() {
            return Err(LinalgError::NotSquare {
                rows: mat.nrows(),
                cols: mat.ncols(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let sym = (&mat + mat.adjoint()).scale(0.5);
        Ok(Self { mat: sym })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            mat: CMat::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: CMat::identity(n, n),
        }
    }

    pub fn from_real(mat: &RMat) -> Result<Self, LinalgError> {
        Self::new(mat.map(|x| Complex64::new(x, 0.0)))
    }

    /// Rank-one `v vᴴ`.
    pub fn outer(v: &CVec) -> Self {
        Self {
            mat: v * v.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    /// Eigendecomposition; eigenvalues ascending, columns of the returned
    /// matrix are the matching orthonormal eigenvectors.
    pub fn eigh(&self) -> (Vec<f64>, CMat) {
        let se = self.mat.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut vecs = CMat::zeros(self.dim(), self.dim());
        for (dst, &src) in order.iter().enumerate() {
            vecs.set_column(dst, &se.eigenvectors.column(src));
        }
        (vals, vecs)
    }

    pub fn min_eig(&self) -> f64 {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eig() >= -tol
    }

    /// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
    pub fn embed(&self) -> RMat {
        let n = self.dim();
        let mut out = RMat::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let z = self.mat[(i, j)];
                out[(i, j)] = z.re;
                out[(i + n, j + n)] = z.re;
                out[(i, j + n)] = -z.im;
                out[(i + n, j)] = z.im;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// `Tr(A B)`, real for Hermitian pairs.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let a = self.mat[(i, j)];
                let b = other.mat[(i, j)];
                acc += a.re * b.re + a.im * b.im;
            }
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: self.mat.scale(s),
        }
    }

    /// Quadratic form `vᴴ H v` (real by symmetry).
    pub fn quad(&self, v: &CVec) -> f64 {
        (v.adjoint() * &self.mat * v)[(0, 0)].re
    }
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Column-major stacking of a matrix into a vector.
pub fn vec_col(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Real symmetric embedding of a rectangular complex matrix:
/// `[[Re A, -Im A], [Im A, Re A]]` of size `2r x 2c`. For Hermitian inputs
/// this agrees with [`HermitianMatrix::embed`]; it is multiplicative
/// (`embed(AB) = embed(A) embed(B)`) and transposes to the embedding of
/// the adjoint.
pub fn embed_rect(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Stacks a complex vector as `[Re v; Im v]`.
pub fn embed_vec(v: &CVec) -> RVec {
    let n = v.len();
    let mut out = RVec::zeros(2 * n);
    for i in 0..n {
        out[i] = v[i].re;
        out[i + n] = v[i].im;
    }
    out
}

/// Inverse of [`embed_vec`].
pub fn unembed_vec(v: &RVec) -> CVec {
    let n = v.len() / 2;
    CVec::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

/// Projects a real `2n x 2n` matrix back to the complex `n x n` matrix whose
/// embedding is the nearest in Frobenius norm: `(X11+X22)/2 + i (X21-X12)/2`.
/// For symmetric inputs the result is Hermitian.
pub fn unembed_sym(x: &RMat) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        Complex64::new(
            0.5 * (x[(i, j)] + x[(i + n, j + n)]),
            0.5 * (x[(i + n, j)] - x[(i, j + n)]),
        )
    })
}

/// Eigendecomposition of a real symmetric matrix; values ascending.
pub fn sym_eigh(a: &RMat) -> (Vec<f64>, RMat) {
    let se = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| se.eigenvalues[x].total_cmp(&se.eigenvalues[y]));
    let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}
