//! Successive convex approximation of the deterministic-equivalent sensing error.
//!
//! Each outer iteration linearizes `J_ae` at the current covariance through its
//! Wirtinger gradient and minimizes the linearization over the convex
//! constraint set with [`crate::convex::solve_linear_subproblem`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convex::{phase1_feasible, solve_linear_subproblem, BarrierParams, ConstraintSet};
use crate::error::{IsacError, Result};
use crate::linalg::{c64, hpd_inverse, real_trace_product, CMatrix, HermitianMatrix};
use crate::metrics::{
    elmmse_asymptotic_with, prior_precision, solve_fixed_point, DEFAULT_EPS_FPE, DEFAULT_MAX_FPE_ITER,
};
use crate::model::{Precoder, SystemConfig};

/// Intermediate quantities of the gradient at one covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientWorkspace {
    /// `1/(N_r N_t σ_s²)`.
    pub a: f64,
    pub beta: f64,
    /// `T = [A + α M/(N_r σ_s²)]⁻¹`.
    pub t_mat: HermitianMatrix,
    /// `G = T − a α N_t T M T`.
    pub g_mat: HermitianMatrix,
    pub alpha: f64,
}

/// Wirtinger derivative `∂J_ae/∂M*` with default fixed-point tolerances.
pub fn wirtinger_gradient(m: &HermitianMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<HermitianMatrix> {
    wirtinger_gradient_with(m, r, cfg, DEFAULT_EPS_FPE, DEFAULT_MAX_FPE_ITER).map(|(g, _)| g)
}

/// `∂J_ae/∂M* = (a N_t² α² / (2 β L_d)) Tr(T² M) G − (a N_t α / 2) T²`.
///
/// The first-order change of `J_ae` along a Hermitian `ΔM` is
/// `2 Re Tr(∂J_ae/∂M* · ΔM)`.
pub fn wirtinger_gradient_with(
    m: &HermitianMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
    eps_fpe: f64,
    max_fpe_iter: usize,
) -> Result<(HermitianMatrix, GradientWorkspace)> {
    let fp = solve_fixed_point(m, r, cfg, eps_fpe, max_fpe_iter)?;
    let alpha = fp.alpha;
    let a = cfg.a_coeff();
    let n_tx = cfg.n_tx as f64;
    let l_d = cfg.data_len as f64;
    let mm = m.as_matrix();

    let prec = prior_precision(r, cfg)? + mm * c64(alpha * cfg.snr_weight(), 0.0);
    let t = HermitianMatrix::symmetrized(
        hpd_inverse(&prec).ok_or(IsacError::NotPositiveDefinite("gradient resolvent"))?,
    );
    let tm = t.as_matrix() * mm;
    let beta = 1.0 / a - a * alpha * alpha * n_tx * n_tx / l_d * real_trace_product(&tm, &tm);
    if !(beta.abs() > 1e-12 / a) {
        return Err(IsacError::SingularCurvature { beta });
    }
    let tmt = &tm * t.as_matrix();
    let g = HermitianMatrix::symmetrized(t.as_matrix() - tmt * c64(a * alpha * n_tx, 0.0));
    let t2: CMatrix = t.as_matrix() * t.as_matrix();
    let tr_t2m = real_trace_product(&t2, mm);
    let c1 = a * n_tx * n_tx * alpha * alpha / (2.0 * beta * l_d) * tr_t2m;
    let c2 = a * n_tx * alpha / 2.0;
    let grad = HermitianMatrix::symmetrized(g.as_matrix() * c64(c1, 0.0) - t2 * c64(c2, 0.0));
    Ok((
        grad,
        GradientWorkspace {
            a,
            beta,
            t_mat: t,
            g_mat: g,
            alpha,
        },
    ))
}

/// First-order model `J_ae(M₀) + Re Tr[(2∇)ᴴ (M − M₀)]` around `M₀`.
pub fn surrogate(
    m: &HermitianMatrix,
    m0: &HermitianMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
) -> Result<f64> {
    let (j0, _) = elmmse_asymptotic_with(m0, r, cfg, DEFAULT_EPS_FPE, DEFAULT_MAX_FPE_ITER)?;
    let grad = wirtinger_gradient(m0, r, cfg)?;
    Ok(j0 + 2.0 * grad.inner(&m.sub(m0)))
}

/// How the next iterate is taken from the subproblem solution `M̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `M⁽ⁱ⁺¹⁾ = M̂`.
    Full,
    /// `M⁽ⁱ⁺¹⁾ = M⁽ⁱ⁾ + γ (M̂ − M⁽ⁱ⁾)` with `γ` halved from 1 until `J_ae`
    /// decreases by a fraction of the predicted amount.
    #[default]
    Armijo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaOptions {
    pub eps_sca: f64,
    pub max_outer: usize,
    /// Compare `|ΔJ| / J` instead of `|ΔJ|` against `eps_sca`.
    pub relative_tol: bool,
    pub eps_fpe: f64,
    pub max_fpe_iter: usize,
    pub step_rule: StepRule,
    pub barrier: BarrierParams,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            eps_sca: 1e-3,
            max_outer: 200,
            relative_tol: false,
            eps_fpe: DEFAULT_EPS_FPE,
            max_fpe_iter: DEFAULT_MAX_FPE_ITER,
            step_rule: StepRule::default(),
            barrier: BarrierParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    Isotropic,
    WaterFilling,
}

/// Per-iteration record of an SCA run. Entry 0 of the objective and residual
/// lists belongs to the initial point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub objectives: Vec<f64>,
    pub rate_residuals: Vec<f64>,
    pub power_residuals: Vec<f64>,
    pub psd_residuals: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub iters: usize,
    pub wall_times: Vec<f64>,
    pub converged: bool,
    pub start: StartPoint,
    pub rate_max: f64,
}

impl OptimizationTrace {
    fn push_point(&mut self, cons: &ConstraintSet, m: &HermitianMatrix, j: f64) {
        let res = cons.residuals(m);
        self.objectives.push(j);
        self.rate_residuals.push(res.rate);
        self.power_residuals.push(res.power);
        self.psd_residuals.push(res.psd);
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("trace holds the initial point")
    }

    /// Largest increase between consecutive objectives (0 for a monotone trace).
    pub fn max_increase(&self) -> f64 {
        self.objectives
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// SCA with default options apart from the stopping rule.
pub fn sca_optimize(
    r: &HermitianMatrix,
    h_c: &CMatrix,
    cfg: &SystemConfig,
    rate_min: f64,
    eps_sca: f64,
    max_outer: usize,
) -> Result<(HermitianMatrix, OptimizationTrace)> {
    let opts = ScaOptions {
        eps_sca,
        max_outer,
        ..ScaOptions::default()
    };
    sca_optimize_with(r, h_c, cfg, rate_min, &opts)
}

pub fn sca_optimize_with(
    r: &HermitianMatrix,
    h_c: &CMatrix,
    cfg: &SystemConfig,
    rate_min: f64,
    opts: &ScaOptions,
) -> Result<(HermitianMatrix, OptimizationTrace)> {
    if !(opts.eps_sca > 0.0) || opts.max_outer == 0 {
        return Err(IsacError::InvalidConfig(
            "eps_sca must be positive and max_outer at least 1".into(),
        ));
    }
    let cons = ConstraintSet::new(cfg, h_c, rate_min)?;
    let (m_wf, r_max) = cons.max_rate();
    if cons.rate_active() && rate_min > r_max + crate::convex::RATE_TIGHT_TOL * r_max.max(1.0) {
        return Err(IsacError::Infeasible {
            rate_min,
            rate_max: r_max,
        });
    }
    let objective = |m: &HermitianMatrix| {
        elmmse_asymptotic_with(m, r, cfg, opts.eps_fpe, opts.max_fpe_iter).map(|(j, _)| j)
    };

    let iso = cfg.isotropic_covariance();
    let (mut m, start) = if cons.rate(iso.as_matrix()) >= rate_min {
        (iso, StartPoint::Isotropic)
    } else {
        (m_wf.clone(), StartPoint::WaterFilling)
    };
    let mut j = objective(&m)?;
    let mut trace = OptimizationTrace {
        objectives: Vec::new(),
        rate_residuals: Vec::new(),
        power_residuals: Vec::new(),
        psd_residuals: Vec::new(),
        step_sizes: Vec::new(),
        iters: 0,
        wall_times: Vec::new(),
        converged: false,
        start,
        rate_max: r_max,
    };
    trace.push_point(&cons, &m, j);
    if cons.rate_is_tight(r_max) {
        trace.converged = true;
        return Ok((m, trace));
    }
    let m_init = phase1_feasible(&cons)?;

    for _ in 0..opts.max_outer {
        let clock = Instant::now();
        let (grad, _) = wirtinger_gradient_with(&m, r, cfg, opts.eps_fpe, opts.max_fpe_iter)?;
        let m_hat = solve_linear_subproblem(&grad, &cons, &m_init, &opts.barrier)?;
        let (m_next, j_next, gamma) = match opts.step_rule {
            StepRule::Full => {
                let jn = objective(&m_hat)?;
                (m_hat, jn, 1.0)
            }
            StepRule::Armijo => armijo_step(&m, j, &m_hat, &grad, &objective)?,
        };
        let change = (j_next - j).abs();
        let delta = if opts.relative_tol { change / j.abs() } else { change };
        m = m_next;
        j = j_next;
        trace.iters += 1;
        trace.step_sizes.push(gamma);
        trace.push_point(&cons, &m, j);
        trace.wall_times.push(clock.elapsed().as_secs_f64());
        if delta < opts.eps_sca {
            trace.converged = true;
            break;
        }
    }
    Ok((m, trace))
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;

/// Backtracking on the segment towards `M̂`. The segment stays feasible because
/// both ends are.
fn armijo_step(
    m: &HermitianMatrix,
    j: f64,
    m_hat: &HermitianMatrix,
    grad: &HermitianMatrix,
    objective: &impl Fn(&HermitianMatrix) -> Result<f64>,
) -> Result<(HermitianMatrix, f64, f64)> {
    let dir = m_hat.sub(m);
    let slope = 2.0 * grad.inner(&dir);
    if !(slope < 0.0) {
        // No predicted decrease: the current point is stationary for the model.
        return Ok((m.clone(), j, 0.0));
    }
    let mut gamma = 1.0;
    while gamma >= MIN_STEP {
        let trial = m.add(&dir.scale(gamma));
        let jt = objective(&trial)?;
        if jt <= j + ARMIJO_C * gamma * slope {
            return Ok((trial, jt, gamma));
        }
        gamma *= 0.5;
    }
    Ok((m.clone(), j, 0.0))
}

/// `W = Q Σ^{1/2}` from `M = Q Σ Qᴴ`, columns ordered by decreasing eigenvalue.
pub fn extract_precoder(m: &HermitianMatrix) -> Result<Precoder> {
    let (vals, vecs) = m.eigh();
    let n = m.dim();
    if let Some(&min) = vals.first() {
        if min < -1e-9 {
            return Err(IsacError::Indefinite { min_eigenvalue: min });
        }
    }
    let mut w = CMatrix::zeros(n, n);
    for (dst, src) in (0..n).rev().enumerate() {
        let s = vals[src].max(0.0).sqrt();
        w.set_column(dst, &(vecs.column(src) * c64(s, 0.0)));
    }
    Ok(Precoder { w })
}
