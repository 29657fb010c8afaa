//! Sensing and communication performance functionals.
//!
//! All sensing metrics share the prior precision `A = R⁻¹ + P_p/(N_t N_r σ_s²) I`
//! contributed by the correlation matrix and the orthogonal pilots; they differ
//! only in how the data covariance enters:
//!
//! | metric                 | data term                     |
//! |------------------------|-------------------------------|
//! | [`elmmse_monte_carlo`] | `W S_d S_dᴴ Wᴴ`, averaged     |
//! | [`elmmse_lower_bound`] | `M`                           |
//! | [`elmmse_asymptotic`]  | `α M`, `α` from a fixed point |
//! | [`elmmse_high_snr`]    | `(1 - N_t/L_d) M`             |
//!
//! each scaled by `1/(N_r σ_s²)` before inversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{
    c64, cholesky, hermitian_eigh, hpd_inverse, log_det_hpd, pairwise_sum, trace_of_hpd_inverse,
    CMatrix, HermitianMatrix,
};
use crate::model::{sample_data_symbols, Precoder, SystemConfig};

pub const DEFAULT_EPS_FPE: f64 = 1e-8;
pub const DEFAULT_MAX_FPE_ITER: usize = 1000;
pub const DEFAULT_MC_SAMPLES: usize = 5000;

/// Solution `(e, α)` of the deterministic-equivalent fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub e: f64,
    pub alpha: f64,
    pub iterations: usize,
    /// `|e_t - e_{t-1}|` at exit.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn check_dim(what: &'static str, m: &HermitianMatrix, cfg: &SystemConfig) -> Result<()> {
    if m.dim() != cfg.n_tx {
        return Err(IsacError::DimensionMismatch {
            context: what,
            expected: format!("{0}x{0}", cfg.n_tx),
            got: format!("{0}x{0}", m.dim()),
        });
    }
    Ok(())
}

/// `A = R⁻¹ + P_p/(N_t N_r σ_s²) I`.
pub fn prior_precision(r: &HermitianMatrix, cfg: &SystemConfig) -> Result<CMatrix> {
    check_dim("prior_precision", r, cfg)?;
    let r_inv = hpd_inverse(r.as_matrix()).ok_or(IsacError::NotPositiveDefinite("R"))?;
    let n = cfg.n_tx;
    Ok(HermitianMatrix::symmetrized(r_inv + CMatrix::identity(n, n) * c64(cfg.pilot_loading(), 0.0)).into_matrix())
}

/// `Tr(A + weight · M)⁻¹`.
pub(crate) fn trace_inverse_with(a: &CMatrix, m: &CMatrix, weight: f64) -> Result<f64> {
    let g = a + m * c64(weight, 0.0);
    trace_of_hpd_inverse(&g).ok_or(IsacError::NotPositiveDefinite("sensing precision matrix"))
}

/// LMMSE estimate `Ĥ_s = Y (Xᴴ R X + σ_s² N_r I_L)⁻¹ Xᴴ R`.
pub fn lmmse_estimate(
    y: &CMatrix,
    x: &CMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
) -> Result<CMatrix> {
    if x.nrows() != r.dim() || y.ncols() != x.ncols() {
        return Err(IsacError::DimensionMismatch {
            context: "lmmse_estimate",
            expected: format!("X {}xL, Y Nr x L with L = {}", r.dim(), x.ncols()),
            got: format!("X {:?}, Y {:?}", x.shape(), y.shape()),
        });
    }
    let l = x.ncols();
    let xh_r = x.adjoint() * r.as_matrix();
    let system = HermitianMatrix::symmetrized(
        &xh_r * x + CMatrix::identity(l, l) * c64(cfg.sensing_noise * cfg.n_rx as f64, 0.0),
    );
    let chol = cholesky(system.as_matrix()).ok_or(IsacError::NotPositiveDefinite(
        "LMMSE system matrix",
    ))?;
    // Y Z⁻¹ = (Z⁻¹ Yᴴ)ᴴ for Hermitian Z.
    let z_inv_yh = chol.solve(&y.adjoint());
    Ok(z_inv_yh.adjoint() * xh_r)
}

/// `J = Tr(R⁻¹ + X Xᴴ / (N_r σ_s²))⁻¹` for one transmit block.
pub fn lmmse_mse(x: &CMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    if x.nrows() != r.dim() {
        return Err(IsacError::DimensionMismatch {
            context: "lmmse_mse",
            expected: format!("{} rows", r.dim()),
            got: format!("{}", x.nrows()),
        });
    }
    let r_inv = hpd_inverse(r.as_matrix()).ok_or(IsacError::NotPositiveDefinite("R"))?;
    let gram = HermitianMatrix::gram(x);
    trace_inverse_with(&r_inv, gram.as_matrix(), cfg.snr_weight())
}

/// Monte-Carlo ELMMSE over i.i.d. data blocks. Sample `i` uses seed
/// `seed + i`, so the estimate does not depend on the thread count.
pub fn elmmse_monte_carlo(
    w: &Precoder,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n_samples < 2 {
        return Err(IsacError::InvalidConfig(
            "Monte-Carlo estimate needs at least two samples".into(),
        ));
    }
    if w.dim() != cfg.n_tx {
        return Err(IsacError::DimensionMismatch {
            context: "elmmse_monte_carlo",
            expected: format!("{0}x{0} precoder", cfg.n_tx),
            got: format!("{0}x{0}", w.dim()),
        });
    }
    let a = prior_precision(r, cfg)?;
    let weight = cfg.snr_weight();
    let samples: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let sd = sample_data_symbols(cfg, seed.wrapping_add(i));
            let xd = &w.w * sd;
            let gram = HermitianMatrix::gram(&xd);
            trace_inverse_with(&a, gram.as_matrix(), weight)
        })
        .collect::<Result<_>>()?;

    let n = n_samples as f64;
    let mean = pairwise_sum(&samples) / n;
    // Shifted sums: identical samples give exactly zero variance.
    let x0 = samples[0];
    let shifted: Vec<f64> = samples.iter().map(|x| x - x0).collect();
    let squares: Vec<f64> = shifted.iter().map(|d| d * d).collect();
    let s1 = pairwise_sum(&shifted);
    let s2 = pairwise_sum(&squares);
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
        seed,
    })
}

/// Jensen lower bound `J_lb = Tr[A + M/(N_r σ_s²)]⁻¹`.
pub fn elmmse_lower_bound(m: &HermitianMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    check_dim("elmmse_lower_bound", m, cfg)?;
    let a = prior_precision(r, cfg)?;
    trace_inverse_with(&a, m.as_matrix(), cfg.snr_weight())
}

/// Eigenvalues of `L⁻¹ M L⁻ᴴ` where `A = L Lᴴ`.
///
/// With these, `Tr(M (A + c M)⁻¹) = Σ λ_i / (1 + c λ_i)`, which makes each
/// fixed-point iteration O(N_t) after one O(N_t³) factorization.
#[derive(Clone, Debug)]
pub(crate) struct PencilSpectrum {
    lambdas: Vec<f64>,
}

impl PencilSpectrum {
    pub(crate) fn new(a: &CMatrix, m: &CMatrix) -> Result<Self> {
        let chol = cholesky(a).ok_or(IsacError::NotPositiveDefinite("prior precision"))?;
        let l = chol.l();
        let l_inv_m = l
            .solve_lower_triangular(m)
            .ok_or(IsacError::NotPositiveDefinite("prior precision"))?;
        // (L⁻¹ (L⁻¹ M)ᴴ)ᴴ = L⁻¹ M L⁻ᴴ since M is Hermitian.
        let k = l
            .solve_lower_triangular(&l_inv_m.adjoint())
            .ok_or(IsacError::NotPositiveDefinite("prior precision"))?
            .adjoint();
        let (vals, _) = hermitian_eigh(&HermitianMatrix::symmetrized(k).into_matrix());
        Ok(Self {
            lambdas: vals.into_iter().map(|v| v.max(0.0)).collect(),
        })
    }

    /// `Tr(M (A + c M)⁻¹)`.
    pub(crate) fn resolvent_trace(&self, c: f64) -> f64 {
        self.lambdas.iter().map(|&l| l / (1.0 + c * l)).sum()
    }
}

struct FixedPointMap {
    spectrum: PencilSpectrum,
    a_coeff: f64,
    weight: f64,
    n_tx: f64,
    data_len: f64,
}

impl FixedPointMap {
    fn new(m: &HermitianMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<Self> {
        check_dim("solve_fixed_point", m, cfg)?;
        let a = prior_precision(r, cfg)?;
        Ok(Self {
            spectrum: PencilSpectrum::new(&a, m.as_matrix())?,
            a_coeff: cfg.a_coeff(),
            weight: cfg.snr_weight(),
            n_tx: cfg.n_tx as f64,
            data_len: cfg.data_len as f64,
        })
    }

    fn alpha(&self, e: f64) -> f64 {
        self.data_len / (self.data_len + self.n_tx * e)
    }

    fn apply(&self, e: f64) -> f64 {
        self.a_coeff * self.spectrum.resolvent_trace(self.alpha(e) * self.weight)
    }

    /// `e_0 = a Tr(M A⁻¹)`, i.e. the map evaluated at `α = 0`.
    fn initial(&self) -> f64 {
        self.a_coeff * self.spectrum.resolvent_trace(0.0)
    }

    fn iterate(&self, e0: f64, eps: f64, max_iter: usize) -> Result<FixedPointSolution> {
        let mut prev = e0;
        let mut residual = f64::INFINITY;
        for t in 1..=max_iter {
            let next = self.apply(prev);
            residual = (next - prev).abs();
            if residual < eps {
                return Ok(FixedPointSolution {
                    e: next,
                    alpha: self.alpha(next),
                    iterations: t,
                    residual,
                });
            }
            prev = next;
        }
        Err(IsacError::FixedPointDiverged {
            iterations: max_iter,
            residual,
        })
    }
}

/// Plain fixed-point iteration for `e`, started from `e_0 = a Tr(M A⁻¹)`.
pub fn solve_fixed_point(
    m: &HermitianMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
    eps_fpe: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    if !(eps_fpe > 0.0) {
        return Err(IsacError::InvalidConfig("eps_fpe must be positive".into()));
    }
    let map = FixedPointMap::new(m, r, cfg)?;
    map.iterate(map.initial(), eps_fpe, max_iter)
}

/// Debug check for uniqueness: the same iteration started from `e_0 · {0.1, 1, 10}`.
pub fn solve_fixed_point_multistart(
    m: &HermitianMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
    eps_fpe: f64,
    max_iter: usize,
) -> Result<Vec<FixedPointSolution>> {
    let map = FixedPointMap::new(m, r, cfg)?;
    let e0 = map.initial();
    [0.1, 1.0, 10.0]
        .iter()
        .map(|s| map.iterate(s * e0, eps_fpe, max_iter))
        .collect()
}

/// `J_ae` together with the fixed point it used.
pub fn elmmse_asymptotic_with(
    m: &HermitianMatrix,
    r: &HermitianMatrix,
    cfg: &SystemConfig,
    eps_fpe: f64,
    max_iter: usize,
) -> Result<(f64, FixedPointSolution)> {
    let fp = solve_fixed_point(m, r, cfg, eps_fpe, max_iter)?;
    let a = prior_precision(r, cfg)?;
    let j = trace_inverse_with(&a, m.as_matrix(), fp.alpha * cfg.snr_weight())?;
    Ok((j, fp))
}

/// Deterministic equivalent `J_ae = Tr[A + α M/(N_r σ_s²)]⁻¹` with default tolerances.
pub fn elmmse_asymptotic(m: &HermitianMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    elmmse_asymptotic_with(m, r, cfg, DEFAULT_EPS_FPE, DEFAULT_MAX_FPE_ITER).map(|(j, _)| j)
}

/// High-SNR closed form: `α` replaced by `1 - N_t/L_d`.
pub fn elmmse_high_snr(m: &HermitianMatrix, r: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    check_dim("elmmse_high_snr", m, cfg)?;
    if cfg.data_len <= cfg.n_tx {
        return Err(IsacError::InvalidConfig(
            "high-SNR expression needs data_len > n_tx".into(),
        ));
    }
    let a = prior_precision(r, cfg)?;
    trace_inverse_with(&a, m.as_matrix(), cfg.high_snr_alpha() * cfg.snr_weight())
}

/// `log₂ det(I + H M Hᴴ / σ²)`; `-∞` when the argument is not positive definite.
pub fn capacity_bits(m: &CMatrix, h_c: &CMatrix, noise: f64) -> f64 {
    let n = h_c.nrows();
    let k = CMatrix::identity(n, n) + h_c * m * h_c.adjoint() * c64(1.0 / noise, 0.0);
    let k = HermitianMatrix::symmetrized(k).into_matrix();
    match log_det_hpd(&k) {
        Some(ld) => ld / std::f64::consts::LN_2,
        None => f64::NEG_INFINITY,
    }
}

/// Effective rate `(L_d / L) log₂ det(I + H_c M H_cᴴ / σ_c²)` in bits/s/Hz.
pub fn comm_rate(m: &HermitianMatrix, h_c: &CMatrix, cfg: &SystemConfig) -> f64 {
    cfg.rate_prefactor() * capacity_bits(m.as_matrix(), h_c, cfg.comm_noise)
}

/// Pilot-only sensing error `Tr[R⁻¹ + P_p/(N_t N_r σ_s²) I]⁻¹`.
pub fn pilot_only_mse(r: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    let a = prior_precision(r, cfg)?;
    trace_of_hpd_inverse(&a).ok_or(IsacError::NotPositiveDefinite("prior precision"))
}

/// Diagonal helper used by tests and experiments.
pub fn diag(values: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_diagonal(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_transmit, identity_correlation, random_permutation, Frame};

    fn cfg(n_tx: usize, n_rx: usize, data_len: usize, pilot_power: f64, data_power: f64) -> SystemConfig {
        SystemConfig {
            n_tx,
            n_rx,
            n_ue: 1,
            frame_len: n_tx + data_len,
            pilot_len: n_tx,
            data_len,
            pilot_power,
            data_power,
            sensing_noise: 1.0,
            comm_noise: 1.0,
        }
    }

    #[test]
    fn lmmse_zero_regressor_gives_zero_estimate() {
        let c = cfg(2, 2, 4, 1.0, 1.0);
        let y = CMatrix::from_element(2, 3, c64(1.0, 1.0));
        let x = CMatrix::zeros(2, 3);
        let h = lmmse_estimate(&y, &x, &identity_correlation(2), &c).unwrap();
        assert!(h.norm() == 0.0);
    }

    #[test]
    fn lmmse_scalar_case_halves_observation() {
        let c = cfg(1, 1, 2, 1.0, 1.0);
        let y = CMatrix::from_element(1, 1, c64(3.0, -1.0));
        let x = CMatrix::from_element(1, 1, c64(1.0, 0.0));
        let h = lmmse_estimate(&y, &x, &identity_correlation(1), &c).unwrap();
        assert!((h[(0, 0)] - c64(1.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn lmmse_noiseless_limit_recovers_channel() {
        let mut c = cfg(2, 3, 4, 1.0, 1.0);
        c.sensing_noise = 1e-12;
        let h_true = CMatrix::from_fn(3, 2, |i, j| c64(i as f64 + 1.0, j as f64 - 0.5));
        let x = crate::model::dft_pilots(2, 2).unwrap() * c64(1e3, 0.0);
        let y = &h_true * &x;
        let h = lmmse_estimate(&y, &x, &identity_correlation(2), &c).unwrap();
        assert!((h - &h_true).norm() < 1e-3 * h_true.norm());
    }

    #[test]
    fn lmmse_mse_examples() {
        let c = cfg(2, 1, 4, 2.0, 2.0);
        let r = identity_correlation(2);
        // X Xᴴ = N_r σ² I
        let x = crate::model::dft_pilots(2, 2).unwrap();
        assert!((lmmse_mse(&x, &r, &c).unwrap() - 1.0).abs() < 1e-14);
        assert!((lmmse_mse(&CMatrix::zeros(2, 5), &r, &c).unwrap() - 2.0).abs() < 1e-15);
        let singular = HermitianMatrix::zeros(2);
        assert!(lmmse_mse(&x, &singular, &c).is_err());
    }

    #[test]
    fn lmmse_mse_ignores_interleaving() {
        let c = SystemConfig::with_equal_symbol_power(4, 4, 1, 6, 8, 10.0);
        let r = identity_correlation(4);
        let frame = Frame::random(&c, 3).unwrap();
        let w = Precoder::isotropic(&c);
        let base = lmmse_mse(&assemble_transmit(&frame, &w, &c).unwrap(), &r, &c).unwrap();
        for seed in 0..5 {
            let permuted = Frame {
                perm: random_permutation(c.frame_len, seed),
                ..frame.clone()
            };
            let j = lmmse_mse(&assemble_transmit(&permuted, &w, &c).unwrap(), &r, &c).unwrap();
            assert!((j - base).abs() <= 1e-10 * base);
        }
    }

    #[test]
    fn monte_carlo_without_data_power_is_deterministic() {
        let c = cfg(2, 1, 4, 2.0, 1.0);
        let est = elmmse_monte_carlo(&Precoder::zeros(2), &identity_correlation(2), &c, 50, 1).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert!((est.mean - 1.0).abs() < 1e-14);
        assert!(elmmse_monte_carlo(&Precoder::zeros(2), &identity_correlation(2), &c, 1, 1).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let c = cfg(3, 2, 6, 1.0, 3.0);
        let w = Precoder::isotropic(&c);
        let r = identity_correlation(3);
        let a = elmmse_monte_carlo(&w, &r, &c, 200, 77).unwrap();
        let b = elmmse_monte_carlo(&w, &r, &c, 200, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lower_bound_examples() {
        let c = cfg(2, 1, 4, 2.0, 2.0);
        let r = identity_correlation(2);
        let lb = elmmse_lower_bound(&HermitianMatrix::zeros(2), &r, &c).unwrap();
        assert!((lb - 1.0).abs() < 1e-15);
        let mut last = lb;
        for p in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let v = elmmse_lower_bound(&HermitianMatrix::scaled_identity(2, p / 2.0), &r, &c).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn fixed_point_zero_covariance() {
        let c = cfg(2, 1, 4, 1.0, 1.0);
        let fp = solve_fixed_point(&HermitianMatrix::zeros(2), &identity_correlation(2), &c, 1e-8, 10).unwrap();
        assert_eq!(fp.e, 0.0);
        assert_eq!(fp.alpha, 1.0);
        assert_eq!(fp.iterations, 1);
    }

    /// Scalar reduction `e = (2 + e)/(4 + e)`, solved by bisection.
    fn bisection_oracle() -> f64 {
        let g = |e: f64| e - (2.0 + e) / (4.0 + e);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fixed_point_scalar_case_matches_bisection() {
        let c = cfg(2, 1, 4, 0.0, 2.0);
        let m = HermitianMatrix::identity(2);
        let fp = solve_fixed_point(&m, &identity_correlation(2), &c, 1e-14, 1000).unwrap();
        let oracle = bisection_oracle();
        assert!((oracle - (17f64.sqrt() - 3.0) / 2.0).abs() < 1e-15);
        assert!((fp.e - oracle).abs() < 1e-12);
        assert!((fp.alpha - 4.0 / (4.0 + 2.0 * oracle)).abs() < 1e-15);
        assert!((fp.alpha - 0.7807764064).abs() < 1e-9);

        let j = elmmse_asymptotic(&m, &identity_correlation(2), &c).unwrap();
        assert!((j - 2.0 / (1.0 + fp.alpha)).abs() < 1e-8);
        assert!((j - 1.1231056256).abs() < 1e-8);
    }

    #[test]
    fn fixed_point_multistart_agrees() {
        let c = cfg(4, 2, 12, 1.0, 40.0);
        let m = HermitianMatrix::from_real_diagonal(&[20.0, 10.0, 8.0, 2.0]);
        let sols = solve_fixed_point_multistart(&m, &identity_correlation(4), &c, 1e-12, 5000).unwrap();
        for s in &sols {
            assert!((s.e - sols[1].e).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_point_reports_divergence_when_budget_exhausted() {
        let c = cfg(2, 1, 4, 0.0, 2.0);
        let err = solve_fixed_point(&HermitianMatrix::identity(2), &identity_correlation(2), &c, 1e-14, 2);
        assert!(matches!(err, Err(IsacError::FixedPointDiverged { iterations: 2, .. })));
    }

    #[test]
    fn alpha_approaches_high_snr_limit() {
        let c = cfg(2, 1, 4, 0.0, 1e8);
        let m = c.isotropic_covariance();
        let fp = solve_fixed_point(&m, &identity_correlation(2), &c, 1e-12, 10_000).unwrap();
        assert!((fp.alpha - c.high_snr_alpha()).abs() < 1e-3);
        assert!((1.0_f64 / (1.0 - 2.0 / 4.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_equals_lower_bound_without_data() {
        let c = cfg(3, 2, 6, 1.5, 1.0);
        let r = HermitianMatrix::from_real_diagonal(&[1.0, 0.5, 2.0]);
        let z = HermitianMatrix::zeros(3);
        let lb = elmmse_lower_bound(&z, &r, &c).unwrap();
        assert!((elmmse_asymptotic(&z, &r, &c).unwrap() - lb).abs() < 1e-15);
        assert!((elmmse_high_snr(&z, &r, &c).unwrap() - lb).abs() < 1e-15);
        assert!((pilot_only_mse(&r, &c).unwrap() - lb).abs() < 1e-15);
    }

    #[test]
    fn high_snr_expression_close_to_asymptotic_at_40db() {
        let c = cfg(4, 1, 16, 0.0, 1e4);
        let m = c.isotropic_covariance();
        let r = identity_correlation(4);
        let exact = elmmse_asymptotic(&m, &r, &c).unwrap();
        let approx = elmmse_high_snr(&m, &r, &c).unwrap();
        assert!((approx - exact).abs() / exact < 0.01);
    }

    #[test]
    fn rate_examples() {
        let c = SystemConfig {
            frame_len: 8,
            data_len: 4,
            pilot_len: 4,
            n_tx: 2,
            n_ue: 2,
            comm_noise: 0.5,
            ..cfg(2, 1, 4, 1.0, 1.0)
        };
        let h = CMatrix::identity(2, 2);
        assert_eq!(comm_rate(&HermitianMatrix::zeros(2), &h, &c), 0.0);
        let r = comm_rate(&HermitianMatrix::scaled_identity(2, 0.5), &h, &c);
        assert!((r - 1.0).abs() < 1e-14);

        let c1 = SystemConfig {
            frame_len: 4,
            pilot_len: 0,
            data_len: 4,
            n_ue: 1,
            comm_noise: 1.0,
            ..c
        };
        let h = CMatrix::from_row_slice(1, 2, &[c64(1.0, 0.0), c64(0.0, 0.0)]);
        let r = comm_rate(&HermitianMatrix::from_real_diagonal(&[3.0, 5.0]), &h, &c1);
        assert!((r - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pilot_only_examples() {
        let c = cfg(2, 1, 4, 2.0, 1.0);
        assert!((pilot_only_mse(&identity_correlation(2), &c).unwrap() - 1.0).abs() < 1e-15);
        let c0 = cfg(2, 1, 4, 1e-300, 1.0);
        let r = HermitianMatrix::from_real_diagonal(&[3.0, 0.25]);
        assert!((pilot_only_mse(&r, &c0).unwrap() - 3.25).abs() < 1e-14);
    }

    #[test]
    fn pencil_trace_matches_direct_inverse() {
        let a = HermitianMatrix::from_real_diagonal(&[2.0, 1.0, 0.5]).into_matrix();
        let mut m = HermitianMatrix::from_real_diagonal(&[1.0, 3.0, 0.0]).into_matrix();
        m[(0, 1)] = c64(0.5, 0.5);
        m[(1, 0)] = c64(0.5, -0.5);
        let spec = PencilSpectrum::new(&a, &m).unwrap();
        let c = 0.7;
        let direct = {
            let inv = hpd_inverse(&(&a + &m * c64(c, 0.0))).unwrap();
            crate::linalg::real_trace_product(&m, &inv)
        };
        assert!((spec.resolvent_trace(c) - direct).abs() < 1e-13);
    }
}
