use std::f64::consts::{PI, TAU};

use freqbin_qkd::channel::{db_to_linear, phase_from_path};
use freqbin_qkd::keyproc::skr_lower_bound;
use freqbin_qkd::phaselock::{fit_theta, sweep_fringe, unwrap};
use freqbin_qkd::qstate::{correlation_fidelity, noisy_state, outcome_probabilities, wrap_phase};
use freqbin_qkd::tomography::{mle_reconstruct, simulate_counts};
use freqbin_qkd::{CorrelationMatrix, LinkConfig, MeasurementSetting, SkrParams};
use proptest::prelude::*;

fn setting(x: bool, phi: f64) -> MeasurementSetting {
    if x {
        MeasurementSetting::x(phi)
    } else {
        MeasurementSetting::z()
    }
}

fn params(rate: f64) -> SkrParams {
    SkrParams { f: 1.16, sift_ratio: 0.5, qubit_rate: rate, alpha: 0.3, eta: 0.1 }
}

proptest! {
    #[test]
    fn outcome_tables_are_distributions(
        p in 0.0f64..=1.0, theta in -10.0f64..10.0,
        ax: bool, bx: bool, pa in 0.0f64..TAU, pb in 0.0f64..TAU,
    ) {
        let rho = noisy_state(p, theta).unwrap();
        let t = outcome_probabilities(&rho, &setting(ax, pa), &setting(bx, pb)).unwrap();
        let sum: f64 = t.iter().flatten().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(t.iter().flatten().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn z_basis_statistics_ignore_the_phase(p in 0.0f64..=1.0, t1 in -10.0f64..10.0, t2 in -10.0f64..10.0) {
        let z = MeasurementSetting::z();
        let a = outcome_probabilities(&noisy_state(p, t1).unwrap(), &z, &z).unwrap();
        let b = outcome_probabilities(&noisy_state(p, t2).unwrap(), &z, &z).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((a[i][j] - b[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_fidelity_is_symmetric_and_bounded(counts in prop::array::uniform4(prop::array::uniform4(1u64..500))) {
        let m = CorrelationMatrix::from_counts(&counts).unwrap();
        let ideal = CorrelationMatrix::ideal();
        let f1 = correlation_fidelity(&m, &ideal).unwrap();
        let f2 = correlation_fidelity(&ideal, &m).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-12);
        prop_assert!(f1 > 0.0 && f1 <= 1.0 + 1e-12);
        prop_assert!((correlation_fidelity(&m, &m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn key_rate_never_grows_with_errors(ez in 0.0f64..0.2, ex in 0.0f64..0.2, dz in 0.0f64..0.05, dx in 0.0f64..0.05) {
        let p = params(1e6);
        let base = skr_lower_bound(ez, ex, &p).unwrap();
        prop_assert!(skr_lower_bound(ez + dz, ex, &p).unwrap() <= base);
        prop_assert!(skr_lower_bound(ez, ex + dx, &p).unwrap() <= base);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn key_rate_is_linear_in_source_rate(ez in 0.0f64..0.2, ex in 0.0f64..0.2, r in 1.0f64..1e7, k in 0.1f64..10.0) {
        let a = skr_lower_bound(ez, ex, &params(r)).unwrap();
        let b = skr_lower_bound(ez, ex, &params(k * r)).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn unwrap_stays_within_half_a_turn(prev in -100.0f64..100.0, x in 0.0f64..TAU) {
        let u = unwrap(prev, x);
        prop_assert!((u - prev).abs() <= PI + 1e-9);
        prop_assert!((wrap_phase(u) - x).abs() < 1e-9 || (wrap_phase(u) - x).abs() > TAU - 1e-9);
    }

    #[test]
    fn path_phase_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0, nu in 1e9f64..1e11) {
        let sum = phase_from_path(a + b, nu);
        prop_assert!((sum - phase_from_path(a, nu) - phase_from_path(b, nu)).abs() < 1e-9 * sum.abs().max(1.0));
    }

    #[test]
    fn losses_multiply(a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let joint = db_to_linear(a + b);
        prop_assert!((joint / (db_to_linear(a) * db_to_linear(b)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fringe_fit_round_trips(theta in 0.0f64..TAU) {
        let fit = fit_theta(&sweep_fringe(theta, 24, 0.0, 0).unwrap()).unwrap();
        let d = (fit.theta - theta).rem_euclid(TAU);
        prop_assert!(d.min(TAU - d) < 1e-6);
    }

    #[test]
    fn config_survives_serialization(km in 0.0f64..50.0, p in 0.5f64..1.0, nrx in 0.0f64..5e6, seed: u64) {
        let mut c = LinkConfig::with_length(km);
        c.noise.p_werner = p;
        c.noise.receiver_noise_rate = nrx;
        c.seed = seed;
        let text = c.to_toml_string().unwrap();
        prop_assert_eq!(LinkConfig::from_toml_str(&text).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstruction_is_a_density_matrix(p in 0.3f64..1.0, theta in 0.0f64..TAU, shots in 20u64..2000, seed: u64) {
        let rho = noisy_state(p, theta).unwrap();
        let est = mle_reconstruct(&simulate_counts(&rho, shots, seed).unwrap()).unwrap();
        est.rho.validate().unwrap();
        prop_assert!(est.rho.eigenvalues().iter().all(|&l| l >= -1e-10));
        prop_assert!((est.rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
    }
}
