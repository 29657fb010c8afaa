use isac_core::convex::{water_filling, water_filling_powers};
use isac_core::linalg::complex_gaussian;
use isac_core::metrics::{
    capacity_bits, elmmse_asymptotic, elmmse_lower_bound, lmmse_mse, pilot_only_mse, solve_fixed_point,
};
use isac_core::model::{assemble_transmit, comm_channel};
use isac_core::sca::{surrogate, wirtinger_gradient};
use isac_core::{Frame, HermitianMatrix, Precoder, SystemConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(n: usize, ld_factor: usize, snr_db: f64) -> SystemConfig {
    SystemConfig::with_equal_symbol_power(n, n, 2, n, ld_factor * n, snr_db)
}

fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let b = complex_gaussian(n, n, 1.0, rng);
    HermitianMatrix::gram(&b)
        .scale(1.0 / n as f64)
        .add(&HermitianMatrix::scaled_identity(n, 0.05))
}

fn random_psd(n: usize, trace: f64, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let rank = rng.random_range(1..=n);
    let g = HermitianMatrix::gram(&complex_gaussian(n, rank, 1.0, rng));
    let t = g.trace();
    g.scale(trace / t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_ordered_and_positive(
        n in 1usize..6,
        ld_factor in 2usize..6,
        snr in -5.0f64..35.0,
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let cfg = config(n, ld_factor, snr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_hpd(n, &mut rng);
        let m = random_psd(n, frac * cfg.data_power + 1e-9, &mut rng);
        let lb = elmmse_lower_bound(&m, &r, &cfg).unwrap();
        let ae = elmmse_asymptotic(&m, &r, &cfg).unwrap();
        let po = pilot_only_mse(&r, &cfg).unwrap();
        prop_assert!(lb > 0.0);
        prop_assert!(lb <= ae * (1.0 + 1e-12));
        prop_assert!(ae <= po * (1.0 + 1e-12));
    }

    #[test]
    fn fixed_point_alpha_in_unit_interval(
        n in 1usize..6,
        ld_factor in 2usize..6,
        snr in -10.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let cfg = config(n, ld_factor, snr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_hpd(n, &mut rng);
        let m = random_psd(n, cfg.data_power, &mut rng);
        let fp = solve_fixed_point(&m, &r, &cfg, 1e-10, 100_000).unwrap();
        prop_assert!(fp.e >= 0.0);
        prop_assert!(fp.alpha > 0.0 && fp.alpha <= 1.0);
        prop_assert!(fp.alpha >= cfg.high_snr_alpha() - 1e-9);
    }

    #[test]
    fn block_mse_ignores_symbol_order(n in 1usize..5, seed in any::<u64>()) {
        let cfg = config(n, 3, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_hpd(n, &mut rng);
        let w = Precoder::new(complex_gaussian(n, n, 0.5, &mut rng)).unwrap();
        let base = Frame::random(&cfg, seed).unwrap();
        let mut perm = base.perm.clone();
        perm.reverse();
        let shuffled = Frame::new(base.pilot_syms.clone(), base.data_syms.clone(), perm).unwrap();
        let a = lmmse_mse(&assemble_transmit(&base, &w, &cfg).unwrap(), &r, &cfg).unwrap();
        let b = lmmse_mse(&assemble_transmit(&shuffled, &w, &cfg).unwrap(), &r, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn water_filling_spends_budget_and_beats_random(
        n in 1usize..6,
        power in 0.01f64..1e3,
        seed in any::<u64>(),
    ) {
        let cfg = config(n, 3, 10.0);
        let h = comm_channel(&cfg, seed);
        let (m, bits) = water_filling(&h, power, 1.0);
        prop_assert!((m.trace() - power).abs() <= 1e-9 * power);
        prop_assert!(m.min_eigenvalue() >= -1e-9 * power);
        prop_assert!((capacity_bits(m.as_matrix(), &h, 1.0) - bits).abs() <= 1e-9 * bits.max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for _ in 0..20 {
            let cand = random_psd(n, power * rng.random_range(0.01..=1.0), &mut rng);
            prop_assert!(capacity_bits(cand.as_matrix(), &h, 1.0) <= bits * (1.0 + 1e-9));
        }
    }

    #[test]
    fn water_filling_powers_are_nonnegative(
        gains in prop::collection::vec(0.0f64..100.0, 1..8),
        power in 0.0f64..100.0,
    ) {
        let (p, _) = water_filling_powers(&gains, power);
        prop_assert_eq!(p.len(), gains.len());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let total: f64 = p.iter().sum();
        if gains.iter().any(|&g| g > 0.0) {
            prop_assert!((total - power).abs() <= 1e-9 * power.max(1.0));
        }
    }

    #[test]
    fn gradient_is_hermitian_and_surrogate_touches(n in 1usize..5, seed in any::<u64>()) {
        let cfg = config(n, 4, 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_hpd(n, &mut rng);
        let m0 = random_psd(n, cfg.data_power, &mut rng).add(&HermitianMatrix::scaled_identity(n, 1e-3));
        let g = wirtinger_gradient(&m0, &r, &cfg).unwrap();
        let asym = (g.as_matrix() - g.as_matrix().adjoint()).norm();
        prop_assert!(asym <= 1e-12 * g.frobenius_norm().max(1e-300));
        let j0 = elmmse_asymptotic(&m0, &r, &cfg).unwrap();
        let s0 = surrogate(&m0, &m0, &r, &cfg).unwrap();
        prop_assert!((s0 - j0).abs() <= 1e-12 * j0);
    }
}
