//! Dense complex linear algebra helpers and the [`HermitianMatrix`] newtype.
//!
//! Everything here works on small square matrices (the transmit dimension),
//! so plain `nalgebra` dense routines are used throughout. Inverses of
//! Hermitian positive definite matrices always go through a Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative asymmetry accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Square complex matrix with exact conjugate symmetry.
///
/// Construction checks the asymmetry and then stores `(M + Mᴴ)/2`, so the
/// stored entries satisfy `m[(i, j)] == m[(j, i)].conj()` bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrix", into = "CMatrix")]
pub struct HermitianMatrix(CMatrix);

impl TryFrom<CMatrix> for HermitianMatrix {
    type Error = IsacError;

    fn try_from(m: CMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HermitianMatrix> for CMatrix {
    fn from(h: HermitianMatrix) -> CMatrix {
        h.0
    }
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(IsacError::DimensionMismatch {
                context: "HermitianMatrix::new",
                expected: "square matrix".into(),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let asym = (&m - m.adjoint()).norm();
        let scale = m.norm();
        if asym > HERMITIAN_TOL * scale {
            return Err(IsacError::NotHermitian {
                asymmetry: asym / scale.max(f64::MIN_POSITIVE),
            });
        }
        Ok(Self::symmetrized(m))
    }

    /// Projects an (almost) Hermitian matrix onto the Hermitian subspace
    /// without checking how far it was.
    pub fn symmetrized(m: CMatrix) -> Self {
        let n = m.nrows();
        let mut out = CMatrix::zeros(n, n);
        for j in 0..n {
            out[(j, j)] = c64(m[(j, j)].re, 0.0);
            for i in (j + 1)..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(CMatrix::identity(n, n) * c64(s, 0.0))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = c64(v, 0.0);
        }
        Self(m)
    }

    /// `B Bᴴ` for an arbitrary (possibly rectangular) factor.
    pub fn gram(b: &CMatrix) -> Self {
        Self::symmetrized(b * b.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * c64(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `Re Tr(self · other)`; the real inner product on Hermitian matrices.
    pub fn inner(&self, other: &Self) -> f64 {
        real_trace_product(&self.0, &other.0)
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        hermitian_eigh(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }

    pub fn inverse(&self, what: &'static str) -> Result<Self> {
        hpd_inverse(&self.0)
            .map(Self::symmetrized)
            .ok_or(IsacError::NotPositiveDefinite(what))
    }
}

/// `Re Tr(A B)`, computed without forming the product.
pub fn real_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn real_trace(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

pub fn cholesky(m: &CMatrix) -> Option<Cholesky<Complex64, Dyn>> {
    Cholesky::new(m.clone())
}

pub fn hpd_inverse(m: &CMatrix) -> Option<CMatrix> {
    cholesky(m).map(|c| c.inverse())
}

/// `Tr(M⁻¹)` for Hermitian positive definite `M`, via `‖L⁻¹‖_F²`.
pub fn trace_of_hpd_inverse(m: &CMatrix) -> Option<f64> {
    let chol = cholesky(m)?;
    let n = m.nrows();
    let l_inv = chol
        .l_dirty()
        .solve_lower_triangular(&CMatrix::identity(n, n))?;
    // l_dirty carries garbage above the diagonal; solve_lower_triangular ignores it.
    Some(l_inv.iter().map(|z| z.norm_sqr()).sum())
}

pub fn log_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Hermitian eigendecomposition, eigenvalues sorted ascending.
pub fn hermitian_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Matrix with i.i.d. `CN(0, variance)` entries: real and imaginary parts
/// independent `N(0, variance/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMatrix {
    let sd = (variance / 2.0).sqrt();
    // Column-major fill keeps the draw order fixed for a given seed.
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(sd * re, sd * im)
    })
}

/// Pairwise summation; the result does not depend on how the slice was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
