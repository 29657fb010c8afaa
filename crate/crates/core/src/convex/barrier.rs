//! Log-barrier Newton method over Hermitian positive definite matrices.
//!
//! Minimizes `f₀(M) + μ Φ(M)` for a decreasing sequence of `μ`, where
//! `Φ(M) = −log det M − log(P − Tr M) − log(rate(M) − R₀)`. Newton systems
//! are assembled densely in the scaled coordinates `Δ = L Δ' Lᴴ` with
//! `M = L Lᴴ`, in which the log-det Hessian is the identity.

use nalgebra::{DMatrix, DVector};

use super::hermitian::HermitianBasis;
use super::{BarrierParams, BarrierReport, ConstraintSet, StageReport};
use crate::error::{IsacError, Result};
use crate::linalg::{c64, cholesky, hermitian_eigh, log_det_hpd, real_trace, CMatrix, HermitianMatrix};

const MAX_BACKTRACKS: usize = 60;
/// Below this normalized decrement a full Newton step is taken.
const QUADRATIC_REGION: f64 = 0.25;
/// Decrement accepted when the iteration budget runs out.
const STALL_TOL: f64 = 1e-6;

/// Smooth convex objective with Hessian of the form `Δ ↦ (w/2)(AΔB + BΔA)`.
pub(crate) trait SmoothObjective {
    fn value(&self, m: &CMatrix) -> Option<f64>;
    /// Hermitian `G` with `df = Re Tr(G dM)`.
    fn gradient(&self, m: &CMatrix) -> CMatrix;
    /// `None` for affine objectives.
    fn curvature(&self, m: &CMatrix) -> Option<(CMatrix, CMatrix, f64)>;
}

pub(crate) struct LinearObjective {
    pub(crate) c: CMatrix,
}

impl SmoothObjective for LinearObjective {
    fn value(&self, m: &CMatrix) -> Option<f64> {
        Some(crate::linalg::real_trace_product(&self.c, m))
    }

    fn gradient(&self, _m: &CMatrix) -> CMatrix {
        self.c.clone()
    }

    fn curvature(&self, _m: &CMatrix) -> Option<(CMatrix, CMatrix, f64)> {
        None
    }
}

/// `Tr(A + b M)⁻¹`.
pub(crate) struct ResolventTrace {
    pub(crate) a: CMatrix,
    pub(crate) b: f64,
}

impl ResolventTrace {
    fn resolvent(&self, m: &CMatrix) -> Option<CMatrix> {
        let g = &self.a + m * c64(self.b, 0.0);
        cholesky(&g).map(|c| HermitianMatrix::symmetrized(c.inverse()).into_matrix())
    }
}

impl SmoothObjective for ResolventTrace {
    fn value(&self, m: &CMatrix) -> Option<f64> {
        crate::linalg::trace_of_hpd_inverse(&(&self.a + m * c64(self.b, 0.0)))
    }

    fn gradient(&self, m: &CMatrix) -> CMatrix {
        let t = self.resolvent(m).expect("resolvent at a feasible point");
        HermitianMatrix::symmetrized(&t * &t * c64(-self.b, 0.0)).into_matrix()
    }

    fn curvature(&self, m: &CMatrix) -> Option<(CMatrix, CMatrix, f64)> {
        let t = self.resolvent(m).expect("resolvent at a feasible point");
        let t2 = HermitianMatrix::symmetrized(&t * &t).into_matrix();
        Some((t, t2, 2.0 * self.b * self.b))
    }
}

fn barrier_value(cons: &ConstraintSet, m: &CMatrix) -> Option<f64> {
    let ld = log_det_hpd(m)?;
    let s = cons.power_cap - real_trace(m);
    if !(s > 0.0) {
        return None;
    }
    let mut v = -ld - s.ln();
    if cons.rate_active() {
        let g = cons.rate(m) - cons.rate_min;
        if !(g > 0.0) {
            return None;
        }
        v -= g.ln();
    }
    Some(v)
}

fn merit<O: SmoothObjective>(obj: &O, cons: &ConstraintSet, m: &CMatrix, mu: f64) -> Option<f64> {
    let phi = barrier_value(cons, m)?;
    let f = obj.value(m)?;
    let v = f + mu * phi;
    v.is_finite().then_some(v)
}

pub(crate) fn check_strictly_feasible(cons: &ConstraintSet, m: &CMatrix) -> Result<()> {
    if m.nrows() != cons.dim() || m.ncols() != cons.dim() {
        return Err(IsacError::DimensionMismatch {
            context: "barrier initial point",
            expected: format!("{0}x{0}", cons.dim()),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if cholesky(m).is_none() {
        return Err(IsacError::NotStrictlyFeasible(
            "initial point is not positive definite".into(),
        ));
    }
    let s = cons.power_cap - real_trace(m);
    if !(s > 0.0) {
        return Err(IsacError::NotStrictlyFeasible(format!(
            "power slack {s:.3e} is not positive"
        )));
    }
    if cons.rate_active() {
        let g = cons.rate(m) - cons.rate_min;
        if !(g > 0.0) {
            return Err(IsacError::NotStrictlyFeasible(format!(
                "rate slack {g:.3e} is not positive"
            )));
        }
    }
    Ok(())
}

/// Barrier terms that do not depend on the objective, evaluated at `M`.
struct BarrierPieces {
    power_slack: f64,
    /// `(slack, Q)` with rate gradient `κ Q`.
    rate: Option<(f64, CMatrix)>,
}

impl BarrierPieces {
    fn new(cons: &ConstraintSet, m: &CMatrix) -> Self {
        let power_slack = cons.power_cap - real_trace(m);
        let rate = cons.rate_active().then(|| {
            let (r, q) = cons.rate_and_q(m).expect("rate at a feasible point");
            (r - cons.rate_min, q)
        });
        Self { power_slack, rate }
    }

    /// `∇Φ + M⁻¹`, i.e. every barrier gradient term except the log-det one.
    fn gradient_without_logdet(&self, cons: &ConstraintSet) -> CMatrix {
        let n = cons.dim();
        let mut g = CMatrix::identity(n, n) * c64(1.0 / self.power_slack, 0.0);
        if let Some((slack, q)) = &self.rate {
            g -= q * c64(cons.kappa() / slack, 0.0);
        }
        g
    }
}

fn stationarity_residual<O: SmoothObjective>(
    obj: &O,
    cons: &ConstraintSet,
    m: &CMatrix,
    mu: f64,
) -> f64 {
    let pieces = BarrierPieces::new(cons, m);
    let m_inv = cholesky(m).expect("interior point").inverse();
    let g = obj.gradient(m) + (pieces.gradient_without_logdet(cons) - m_inv) * c64(mu, 0.0);
    g.norm()
}

struct NewtonStep {
    /// Unscaled direction `L X' Lᴴ`.
    direction: CMatrix,
    /// Most negative eigenvalue of the scaled direction.
    min_scaled_eig: f64,
    /// `λ² = −∇Fᵀ δ`.
    decrement_sq: f64,
}

fn newton_step<O: SmoothObjective>(
    obj: &O,
    cons: &ConstraintSet,
    basis: &HermitianBasis,
    m: &CMatrix,
    mu: f64,
) -> Option<NewtonStep> {
    let n = cons.dim();
    let l = cholesky(m)?.l();
    let lh = l.adjoint();
    let scale = |x: &CMatrix| HermitianMatrix::symmetrized(&lh * x * &l).into_matrix();

    let pieces = BarrierPieces::new(cons, m);
    let g_other = obj.gradient(m) + pieces.gradient_without_logdet(cons) * c64(mu, 0.0);
    // Lᴴ M⁻¹ L = I exactly, so the log-det gradient is subtracted in scaled form.
    let mut grad = basis.coords(&scale(&g_other));
    for k in 0..n {
        grad[k] -= mu;
    }

    // H = B + Σ w_k u_k u_kᵀ. The rank-one weights grow like 1/μ near the
    // boundary, so they are kept out of the factorization.
    let dim = basis.dim();
    let mut b = DMatrix::<f64>::identity(dim, dim) * mu;
    let llh = scale(&CMatrix::identity(n, n));
    let mut low_rank = vec![(basis.coords(&llh), mu / pieces.power_slack.powi(2))];
    if let Some((slack, q)) = &pieces.rate {
        let kappa = cons.kappa();
        let qs = scale(q);
        low_rank.push((basis.coords(&qs), mu * kappa * kappa / (slack * slack)));
        basis.add_sandwich(&mut b, &qs, &qs, mu * kappa / slack);
    }
    if let Some((a, bm, w)) = obj.curvature(m) {
        basis.add_sandwich(&mut b, &scale(&a), &scale(&bm), w);
    }
    let delta = -low_rank_solve(b, &low_rank, &grad)?;
    let decrement_sq = -grad.dot(&delta);
    let x = basis.matrix(&delta);
    let (eigs, _) = hermitian_eigh(&x);
    let direction = HermitianMatrix::symmetrized(&l * x * &lh).into_matrix();
    Some(NewtonStep {
        direction,
        min_scaled_eig: eigs[0],
        decrement_sq,
    })
}

/// Solves `(B + Σ w_k u_k u_kᵀ) x = g` for symmetric positive definite `B`.
///
/// The weights `w_k` grow like `1/μ`, so the system is rotated by Householder
/// reflections that map `span{u_k}` onto the leading coordinates; the large
/// terms then only enter a `k × k` Schur complement.
fn low_rank_solve(b: DMatrix<f64>, low_rank: &[(DVector<f64>, f64)], g: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = g.len();
    let k = low_rank.len();
    let mut h = b;
    let mut u = DMatrix::<f64>::from_fn(dim, k, |i, j| low_rank[j].0[i]);
    let mut rhs = g.clone();
    let mut reflectors = Vec::with_capacity(k);
    for j in 0..k {
        let x = u.view((j, j), (dim - j, 1)).column(0).into_owned();
        let norm = x.norm();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let mut v = x;
        v[0] += norm.copysign(v[0]);
        let vnorm_sq = v.norm_squared();
        let mut full = DVector::<f64>::zeros(dim);
        full.rows_mut(j, dim - j).copy_from(&v);
        let beta = 2.0 / vnorm_sq;
        reflect_left(&mut u, &full, beta);
        reflect_vec(&mut rhs, &full, beta);
        reflect_left(&mut h, &full, beta);
        reflect_right(&mut h, &full, beta);
        reflectors.push(Some((full, beta)));
    }
    // In rotated coordinates the low-rank term is R W Rᵀ on the leading block.
    let r = u.rows(0, k).into_owned();
    let mut s = h.view((0, 0), (k, k)).into_owned();
    for (l, (_, w)) in low_rank.iter().enumerate() {
        let col = r.column(l);
        s.ger(*w, &col, &col, 1.0);
    }
    let c = robust_cholesky(h.view((k, k), (dim - k, dim - k)).into_owned())?;
    let h21 = h.view((k, 0), (dim - k, k)).into_owned();
    let c_inv_h21 = c.solve(&h21);
    let g1 = rhs.rows(0, k).into_owned();
    let g2 = rhs.rows(k, dim - k).into_owned();
    let c_inv_g2 = c.solve(&g2);
    s -= h21.transpose() * &c_inv_h21;
    let a = s.lu().solve(&(&g1 - h21.transpose() * &c_inv_g2))?;
    let bpart = c_inv_g2 - c_inv_h21 * &a;
    let mut x = DVector::<f64>::zeros(dim);
    x.rows_mut(0, k).copy_from(&a);
    x.rows_mut(k, dim - k).copy_from(&bpart);
    for refl in reflectors.iter().rev().flatten() {
        reflect_vec(&mut x, &refl.0, refl.1);
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `x ← (I − β v vᵀ) x`.
fn reflect_vec(x: &mut DVector<f64>, v: &DVector<f64>, beta: f64) {
    let d = v.dot(x);
    x.axpy(-beta * d, v, 1.0);
}

/// `A ← (I − β v vᵀ) A`.
fn reflect_left(a: &mut DMatrix<f64>, v: &DVector<f64>, beta: f64) {
    let vt_a = v.transpose() * &*a;
    a.ger(-beta, v, &vt_a.transpose(), 1.0);
}

/// `A ← A (I − β v vᵀ)`.
fn reflect_right(a: &mut DMatrix<f64>, v: &DVector<f64>, beta: f64) {
    let a_v = &*a * v;
    a.ger(-beta, &a_v, v, 1.0);
}

/// Cholesky with a small diagonal shift as a fallback for rounding-level
/// indefiniteness.
fn robust_cholesky(b: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = b.diagonal().amax();
    let mut shift = 0.0;
    for _ in 0..4 {
        let mut shifted = b.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(c) = nalgebra::Cholesky::new(shifted) {
            return Some(c);
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}

/// Newton centering at fixed `μ`. Returns the center and the number of steps.
fn center<O: SmoothObjective>(
    obj: &O,
    cons: &ConstraintSet,
    basis: &HermitianBasis,
    m0: CMatrix,
    mu: f64,
    params: &BarrierParams,
    stage: usize,
) -> Result<(CMatrix, usize, f64)> {
    let fail = |reason: String| IsacError::SolverFailed { stage, mu, reason };
    let mut m = m0;
    let mut decrement = f64::INFINITY;
    for step in 0..params.max_newton {
        let ns = newton_step(obj, cons, basis, &m, mu)
            .ok_or_else(|| fail("Newton system is not positive definite".into()))?;
        // Normalized decrement of f₀/μ + Φ, the self-concordant scaling.
        decrement = (ns.decrement_sq / mu).max(0.0);
        if decrement / 2.0 <= params.newton_tol {
            // The step is already computed; taking it squares the error.
            let polished = &m + &ns.direction;
            if merit(obj, cons, &polished, mu).is_some() {
                m = HermitianMatrix::symmetrized(polished).into_matrix();
            }
            return Ok((m, step + 1, decrement));
        }
        let f0 = merit(obj, cons, &m, mu).ok_or_else(|| fail("merit undefined at iterate".into()))?;
        let mut t = if ns.min_scaled_eig < 0.0 {
            (0.99 / -ns.min_scaled_eig).min(1.0)
        } else {
            1.0
        };
        let pure_newton = decrement.sqrt() < QUADRATIC_REGION;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &m + &ns.direction * c64(t, 0.0);
            if let Some(f) = merit(obj, cons, &trial, mu) {
                let slack = 1e-14 * f0.abs().max(1.0);
                if pure_newton || f <= f0 - params.armijo_c1 * t * ns.decrement_sq + slack {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= params.backtrack;
        }
        match accepted {
            Some(next) => m = HermitianMatrix::symmetrized(next).into_matrix(),
            None if decrement / 2.0 <= STALL_TOL => return Ok((m, step, decrement)),
            None => {
                return Err(fail(format!(
                    "no descent after {MAX_BACKTRACKS} backtracks (decrement {decrement:.3e})"
                )))
            }
        }
    }
    if decrement / 2.0 <= STALL_TOL {
        Ok((m, params.max_newton, decrement))
    } else {
        Err(fail(format!(
            "Newton iteration budget exhausted (decrement {decrement:.3e})"
        )))
    }
}

/// Follows the central path from a strictly feasible `m_init`.
pub(crate) fn minimize<O: SmoothObjective>(
    obj: &O,
    cons: &ConstraintSet,
    m_init: &CMatrix,
    params: &BarrierParams,
) -> Result<(CMatrix, BarrierReport)> {
    params.validate()?;
    check_strictly_feasible(cons, m_init)?;
    let n = cons.dim();
    let basis = HermitianBasis::new(n);
    let mut m = m_init.clone();
    let mut mu = params.mu0;
    let mut report = BarrierReport::default();
    for stage in 0.. {
        let (next, steps, decrement) = center(obj, cons, &basis, m, mu, params, stage)?;
        m = next;
        report.stages.push(StageReport {
            mu,
            newton_steps: steps,
            objective: obj.value(&m).unwrap_or(f64::NAN),
            decrement,
            kkt_residual: stationarity_residual(obj, cons, &m, mu),
        });
        if (n * n) as f64 * mu < params.gap_tol {
            break;
        }
        mu *= params.mu_shrink;
    }
    Ok((m, report))
}
