//! Convex solvers over the transmit covariance.
//!
//! The feasible set is always
//! `{M ⪰ 0, Tr M ≤ P_d, (L_d/L) log₂ det(I + H_c M H_cᴴ/σ_c²) ≥ R₀}`.
//! [`solve_linear_subproblem`] minimizes a linear objective over it and
//! [`solve_high_snr_problem`] minimizes `Tr(A + b M)⁻¹`; both use the
//! log-barrier Newton method in [`barrier`].

mod barrier;
mod hermitian;
mod waterfill;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{c64, cholesky, log_det_hpd, CMatrix, HermitianMatrix};
use crate::metrics::prior_precision;
use crate::model::SystemConfig;

pub use waterfill::{phase1_feasible, water_filling, water_filling_powers};

/// Relative gap below which `R₀` counts as equal to `R_max`.
pub const RATE_TIGHT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub power_cap: f64,
    /// `0` disables the rate constraint.
    pub rate_min: f64,
    pub channel: CMatrix,
    pub comm_noise: f64,
    pub rate_prefactor: f64,
}

/// Constraint violations of a candidate covariance; all zero when feasible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub rate: f64,
    pub power: f64,
    pub psd: f64,
}

impl Residuals {
    pub fn within(&self, rate_tol: f64, power_tol: f64, psd_tol: f64) -> bool {
        self.rate <= rate_tol && self.power <= power_tol && self.psd <= psd_tol
    }
}

impl ConstraintSet {
    pub fn new(cfg: &SystemConfig, h_c: &CMatrix, rate_min: f64) -> Result<Self> {
        cfg.validate()?;
        if h_c.ncols() != cfg.n_tx {
            return Err(IsacError::DimensionMismatch {
                context: "ConstraintSet::new",
                expected: format!("{} columns", cfg.n_tx),
                got: format!("{}", h_c.ncols()),
            });
        }
        let set = Self {
            power_cap: cfg.data_power,
            rate_min,
            channel: h_c.clone(),
            comm_noise: cfg.comm_noise,
            rate_prefactor: cfg.rate_prefactor(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_cap > 0.0) || !(self.comm_noise > 0.0) || !(self.rate_prefactor > 0.0) {
            return Err(IsacError::InvalidConfig(
                "power cap, noise and rate prefactor must be positive".into(),
            ));
        }
        if !(self.rate_min >= 0.0) || !self.rate_min.is_finite() {
            return Err(IsacError::InvalidConfig("rate_min must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.channel.ncols()
    }

    pub fn rate_active(&self) -> bool {
        self.rate_min > 0.0
    }

    pub fn with_rate_min(&self, rate_min: f64) -> Self {
        Self {
            rate_min,
            ..self.clone()
        }
    }

    pub fn rate(&self, m: &CMatrix) -> f64 {
        self.rate_prefactor * crate::metrics::capacity_bits(m, &self.channel, self.comm_noise)
    }

    /// `prefactor / ln 2`: the rate gradient is `κ Q`.
    pub(crate) fn kappa(&self) -> f64 {
        self.rate_prefactor / LN_2
    }

    /// Rate and `Q = Hᴴ K⁻¹ H/σ²` with `K = I + H M Hᴴ/σ²`.
    pub(crate) fn rate_and_q(&self, m: &CMatrix) -> Option<(f64, CMatrix)> {
        let h = &self.channel;
        let nc = h.nrows();
        let inv_noise = c64(1.0 / self.comm_noise, 0.0);
        let k = HermitianMatrix::symmetrized(CMatrix::identity(nc, nc) + h * m * h.adjoint() * inv_noise)
            .into_matrix();
        let chol = cholesky(&k)?;
        let rate = self.rate_prefactor * log_det_hpd(&k)? / LN_2;
        let q = h.adjoint() * chol.solve(h) * inv_noise;
        Some((rate, HermitianMatrix::symmetrized(q).into_matrix()))
    }

    /// Water-filling covariance at full power and the maximum rate `R_max`.
    pub fn max_rate(&self) -> (HermitianMatrix, f64) {
        let (m, cap) = water_filling(&self.channel, self.power_cap, self.comm_noise);
        (m, self.rate_prefactor * cap)
    }

    /// `true` when `R₀` equals `R_max` up to [`RATE_TIGHT_TOL`], so the feasible
    /// set is the single water-filling point.
    pub fn rate_is_tight(&self, r_max: f64) -> bool {
        self.rate_active() && self.rate_min >= r_max - RATE_TIGHT_TOL * r_max.max(1.0)
    }

    pub fn residuals(&self, m: &HermitianMatrix) -> Residuals {
        let rate = if self.rate_active() {
            (self.rate_min - self.rate(m.as_matrix())).max(0.0)
        } else {
            0.0
        };
        Residuals {
            rate,
            power: (m.trace() - self.power_cap).max(0.0),
            psd: (-m.min_eigenvalue()).max(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub mu0: f64,
    pub mu_shrink: f64,
    /// Stop centering once half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    /// Outer loop ends when `N_t² μ` drops below this.
    pub gap_tol: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_shrink: 0.1,
            newton_tol: 1e-9,
            max_newton: 100,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            gap_tol: 1e-7,
        }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0 > 0.0
            && self.mu_shrink > 0.0
            && self.mu_shrink < 1.0
            && self.newton_tol > 0.0
            && self.max_newton > 0
            && self.armijo_c1 > 0.0
            && self.armijo_c1 < 0.5
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.gap_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(IsacError::InvalidConfig(format!("invalid barrier parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub mu: f64,
    pub newton_steps: usize,
    /// True objective `f₀` at the stage center.
    pub objective: f64,
    /// Normalized Newton decrement at exit.
    pub decrement: f64,
    /// `‖∇f₀ + μ ∇Φ‖_F` at the stage center.
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub stages: Vec<StageReport>,
}

impl BarrierReport {
    pub fn newton_steps(&self) -> usize {
        self.stages.iter().map(|s| s.newton_steps).sum()
    }
}

/// Minimizes `Re Tr(2 d M)` over the constraint set, starting from a strictly
/// feasible `m_init`.
pub fn solve_linear_subproblem(
    d: &HermitianMatrix,
    cons: &ConstraintSet,
    m_init: &HermitianMatrix,
    params: &BarrierParams,
) -> Result<HermitianMatrix> {
    solve_linear_subproblem_with_report(d, cons, m_init, params).map(|(m, _)| m)
}

pub fn solve_linear_subproblem_with_report(
    d: &HermitianMatrix,
    cons: &ConstraintSet,
    m_init: &HermitianMatrix,
    params: &BarrierParams,
) -> Result<(HermitianMatrix, BarrierReport)> {
    cons.validate()?;
    if d.dim() != cons.dim() {
        return Err(IsacError::DimensionMismatch {
            context: "solve_linear_subproblem",
            expected: format!("{0}x{0}", cons.dim()),
            got: format!("{0}x{0}", d.dim()),
        });
    }
    let obj = barrier::LinearObjective {
        c: d.as_matrix() * c64(2.0, 0.0),
    };
    let (m, report) = barrier::minimize(&obj, cons, m_init.as_matrix(), params)?;
    Ok((HermitianMatrix::symmetrized(m), report))
}

/// Minimizes the high-SNR sensing error `Tr[A + (1 − N_t/L_d) M/(N_r σ_s²)]⁻¹`
/// over the constraint set. When `R₀ = R_max` the water-filling covariance is
/// the only feasible point and is returned directly.
pub fn solve_high_snr_problem(
    r: &HermitianMatrix,
    cons: &ConstraintSet,
    cfg: &SystemConfig,
    params: &BarrierParams,
) -> Result<HermitianMatrix> {
    solve_high_snr_problem_with_report(r, cons, cfg, params).map(|(m, _)| m)
}

pub fn solve_high_snr_problem_with_report(
    r: &HermitianMatrix,
    cons: &ConstraintSet,
    cfg: &SystemConfig,
    params: &BarrierParams,
) -> Result<(HermitianMatrix, BarrierReport)> {
    cons.validate()?;
    if cfg.data_len <= cfg.n_tx {
        return Err(IsacError::InvalidConfig(
            "high-SNR objective needs data_len > n_tx".into(),
        ));
    }
    if cons.rate_active() {
        let (m_wf, r_max) = cons.max_rate();
        if cons.rate_min > r_max + RATE_TIGHT_TOL * r_max.max(1.0) {
            return Err(IsacError::Infeasible {
                rate_min: cons.rate_min,
                rate_max: r_max,
            });
        }
        if cons.rate_is_tight(r_max) {
            return Ok((m_wf, BarrierReport::default()));
        }
    }
    let obj = high_snr_objective(r, cfg)?;
    let m0 = phase1_feasible(cons)?;
    let (m, report) = barrier::minimize(&obj, cons, m0.as_matrix(), params)?;
    Ok((HermitianMatrix::symmetrized(m), report))
}

fn high_snr_objective(r: &HermitianMatrix, cfg: &SystemConfig) -> Result<barrier::ResolventTrace> {
    Ok(barrier::ResolventTrace {
        a: prior_precision(r, cfg)?,
        b: cfg.high_snr_alpha() * cfg.snr_weight(),
    })
}
