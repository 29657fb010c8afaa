use std::f64::consts::LN_2;

use super::ConstraintSet;
use crate::error::{IsacError, Result};
use crate::linalg::{c64, CMatrix, HermitianMatrix};

/// Power per eigenchannel `p_k = max(0, ν − 1/g_k)` with `Σ p_k = power`.
///
/// Returns the allocation (aligned with `gains`) and the water level `ν`.
/// Zero gains never receive power.
pub fn water_filling_powers(gains: &[f64], power: f64) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut nu = 0.0;
    let mut inv_sum = 0.0;
    let mut active = 0;
    for (i, &k) in order.iter().enumerate() {
        let candidate = (power + inv_sum + 1.0 / gains[k]) / (i + 1) as f64;
        if candidate <= 1.0 / gains[k] {
            break;
        }
        inv_sum += 1.0 / gains[k];
        active = i + 1;
        nu = candidate;
    }
    let mut p = vec![0.0; gains.len()];
    for &k in &order[..active] {
        p[k] = (nu - 1.0 / gains[k]).max(0.0);
    }
    (p, nu)
}

/// Capacity-achieving covariance for `log₂ det(I + H M Hᴴ/σ²)` under
/// `Tr M ≤ power`, with the capacity in bits per channel use.
pub fn water_filling(h_c: &CMatrix, power: f64, sigma2: f64) -> (HermitianMatrix, f64) {
    let n = h_c.ncols();
    let svd = h_c.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let gains: Vec<f64> = svd.singular_values.iter().map(|s| s * s / sigma2).collect();
    let (p, _) = water_filling_powers(&gains, power);
    let mut m = CMatrix::zeros(n, n);
    let mut capacity = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        if pk > 0.0 {
            let v = v_t.row(k).adjoint();
            m += &v * v.adjoint() * c64(pk, 0.0);
            capacity += (gains[k] * pk).ln_1p() / LN_2;
        }
    }
    (HermitianMatrix::symmetrized(m), capacity)
}

/// Strictly feasible point for the barrier.
///
/// Without a rate constraint this is `(P/(2N_t)) I`. Otherwise it is
/// `(1 − t) M_wf + t (P/(2N_t)) I` with the largest `t` that keeps half of the
/// rate headroom `R_max − R₀`.
pub fn phase1_feasible(cons: &ConstraintSet) -> Result<HermitianMatrix> {
    let n = cons.dim();
    let center = HermitianMatrix::scaled_identity(n, 0.5 * cons.power_cap / n as f64);
    if !cons.rate_active() {
        return Ok(center);
    }
    let (m_wf, r_max) = cons.max_rate();
    if cons.rate_min > r_max + super::RATE_TIGHT_TOL * r_max.max(1.0) {
        return Err(IsacError::Infeasible {
            rate_min: cons.rate_min,
            rate_max: r_max,
        });
    }
    let headroom = r_max - cons.rate_min;
    if headroom <= super::RATE_TIGHT_TOL * r_max.max(1.0) {
        return Err(IsacError::NotStrictlyFeasible(
            "rate target equals the water-filling maximum; the feasible set has no interior".into(),
        ));
    }
    let target = cons.rate_min + 0.5 * headroom;
    let blend = |t: f64| m_wf.scale(1.0 - t).add(&center.scale(t));
    if cons.rate(blend(1.0).as_matrix()) >= target {
        return Ok(center);
    }
    // The rate is concave along the segment and maximal at t = 0, hence nonincreasing.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cons.rate(blend(mid).as_matrix()) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(blend(lo))
}
