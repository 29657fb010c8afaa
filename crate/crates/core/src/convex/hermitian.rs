//! Orthonormal real coordinates on the space of `n × n` Hermitian matrices.
//!
//! The basis is `E_kk`, `(E_pq + E_qp)/√2` and `i(E_pq − E_qp)/√2` for
//! `p < q`, orthonormal under `⟨X, Y⟩ = Re Tr(X Y)`. Coordinates are ordered
//! diagonal first, then each upper pair as (real, imaginary).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::{c64, CMatrix};

/// One basis matrix as a sparse list of `(row, col, value)`.
#[derive(Clone, Debug)]
pub(crate) struct BasisElement {
    entries: [(usize, usize, Complex64); 2],
    len: usize,
}

impl BasisElement {
    fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries[..self.len]
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HermitianBasis {
    n: usize,
    elems: Vec<BasisElement>,
}

impl HermitianBasis {
    pub(crate) fn new(n: usize) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let zero = (0, 0, c64(0.0, 0.0));
        let mut elems = Vec::with_capacity(n * n);
        for k in 0..n {
            elems.push(BasisElement {
                entries: [(k, k, c64(1.0, 0.0)), zero],
                len: 1,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                elems.push(BasisElement {
                    entries: [(p, q, c64(r, 0.0)), (q, p, c64(r, 0.0))],
                    len: 2,
                });
                elems.push(BasisElement {
                    entries: [(p, q, c64(0.0, r)), (q, p, c64(0.0, -r))],
                    len: 2,
                });
            }
        }
        Self { n, elems }
    }

    pub(crate) fn dim(&self) -> usize {
        self.elems.len()
    }

    /// Coordinates `x_i = ⟨X, B_i⟩` of a Hermitian matrix.
    pub(crate) fn coords(&self, x: &CMatrix) -> DVector<f64> {
        let n = self.n;
        let s = std::f64::consts::SQRT_2;
        let mut out = DVector::zeros(self.dim());
        for k in 0..n {
            out[k] = x[(k, k)].re;
        }
        let mut idx = n;
        for p in 0..n {
            for q in (p + 1)..n {
                let v = (x[(p, q)] + x[(q, p)].conj()) * 0.5;
                out[idx] = s * v.re;
                out[idx + 1] = s * v.im;
                idx += 2;
            }
        }
        out
    }

    pub(crate) fn matrix(&self, x: &DVector<f64>) -> CMatrix {
        let n = self.n;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            out[(k, k)] = c64(x[k], 0.0);
        }
        let mut idx = n;
        for p in 0..n {
            for q in (p + 1)..n {
                let v = c64(r * x[idx], r * x[idx + 1]);
                out[(p, q)] = v;
                out[(q, p)] = v.conj();
                idx += 2;
            }
        }
        out
    }

    /// Adds the matrix of `Δ ↦ (w/2)(A Δ B + B Δ A)` for Hermitian `A`, `B`.
    ///
    /// Entry `(i, j)` is `w Re Tr(B_i A B_j B)`, and
    /// `Tr(E_cd A E_ab B) = A[d, a] B[b, c]`.
    pub(crate) fn add_sandwich(&self, h: &mut DMatrix<f64>, a: &CMatrix, b: &CMatrix, w: f64) {
        let dim = self.dim();
        for j in 0..dim {
            let bj = self.elems[j].entries();
            for i in 0..=j {
                let mut acc = c64(0.0, 0.0);
                for &(c, d, gi) in self.elems[i].entries() {
                    for &(ra, cb, gj) in bj {
                        acc += gi * gj * a[(d, ra)] * b[(cb, c)];
                    }
                }
                let v = w * acc.re;
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian, real_trace_product, HermitianMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = complex_gaussian(n, n, 1.0, &mut rng);
        HermitianMatrix::symmetrized(&b + b.adjoint()).into_matrix()
    }

    #[test]
    fn coordinates_are_isometric() {
        let basis = HermitianBasis::new(4);
        let x = random_hermitian(4, 1);
        let y = random_hermitian(4, 2);
        let (cx, cy) = (basis.coords(&x), basis.coords(&y));
        assert!((cx.dot(&cy) - real_trace_product(&x, &y)).abs() < 1e-12);
        assert!((basis.matrix(&cx) - &x).norm() < 1e-14);
    }

    #[test]
    fn sandwich_matrix_matches_operator() {
        let n = 3;
        let basis = HermitianBasis::new(n);
        let a = random_hermitian(n, 3);
        let b = random_hermitian(n, 4);
        let w = 0.7;
        let mut h = DMatrix::zeros(n * n, n * n);
        basis.add_sandwich(&mut h, &a, &b, w);
        let delta = random_hermitian(n, 5);
        let image = (&a * &delta * &b + &b * &delta * &a) * c64(w / 2.0, 0.0);
        let lhs = &h * basis.coords(&delta);
        assert!((lhs - basis.coords(&image)).norm() < 1e-12);
        assert!((&h - h.transpose()).norm() == 0.0);
    }
}
