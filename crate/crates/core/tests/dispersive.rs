use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torwave::dispersive::{
    build_cutoffs, filtered_kernel, filtered_kernel_many, filtered_kernel_sp, stationary_phase, stationary_points,
    CutoffProfile, FnAmplitude, KernelPolicy, PointPair, QuadraticPhase,
};
use torwave::geometry::{prefactor_n, torus_from_radii, TorusGeometry};
use torwave::specfun::{kernel_k, Complex64};

fn geom() -> TorusGeometry {
    torus_from_radii(1.0, 2.0).unwrap()
}

#[test]
fn cutoff_examples() {
    let c = build_cutoffs(6.0, 0.05).unwrap();
    assert_eq!(c.phi(6.0), 1.0);
    assert_eq!(c.phi(12.0), 0.0);
    let (lo, hi) = c.psi_m_band(3.0).unwrap();
    assert_eq!(lo, 0.0);
    assert!((hi - 72f64.sqrt()).abs() < 1e-12);
    assert_eq!(c.psi_m(3.0, 0.5 * (lo + hi)), 1.0);
    assert!(build_cutoffs(4.0, 0.05).is_err());
    assert!(build_cutoffs(6.0, 1.0).is_err());
}

#[test]
fn stationary_point_example() {
    // m = 1, tN = 2, tau + tau' = 1.
    let pts = stationary_points(1.0, 2.0, 1.0, 0.6, 0.4).unwrap();
    let plus = pts.iter().find(|p| p.branch.outer == 1 && p.branch.inner == 1).unwrap();
    assert!((plus.k0 - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    let sigma = (plus.k0 * plus.k0 + 1.0).sqrt();
    assert!((plus.f_second - 2.0 / sigma.powi(3)).abs() < 1e-14);
    // tau = tau': the difference branch sits at k = 0 and is dropped.
    let pts = stationary_points(1.0, 2.0, 1.0, 0.5, 0.5).unwrap();
    assert!(pts.iter().all(|p| p.branch.inner == 1));
}

#[test]
fn zero_amplitude_gives_zero() {
    let rho = FnAmplitude::new(|_| Complex64::new(0.0, 0.0), -1.0, 1.0, 101);
    let f = QuadraticPhase { a: 1.0, x0: 0.0, c: 0.0 };
    let sp = stationary_phase(&rho, &f, 0.05, 0.0).unwrap();
    assert_eq!(sp.approx.norm(), 0.0);
    assert_eq!(sp.err_bound, 0.0);
}

#[test]
fn direct_and_stationary_phase_routes_agree() {
    let g = geom();
    let cut = build_cutoffs(6.0, 0.05).unwrap();
    let pair = PointPair { phi1: 2.4, phi2: 0.2, tau: 1.2, phi1_p: 2.0, phi2_p: 0.0, tau_p: 1.2 };
    for t in [1.0, 2.5] {
        let direct = filtered_kernel(t, &pair, &cut, &g, &KernelPolicy::default()).unwrap();
        let sp = filtered_kernel_sp(t, &pair, &cut, &g).unwrap();
        // The sum branch turns stationary once N t exceeds tau + tau'.
        let nt = prefactor_n(pair.tau, pair.phi1, &g) * t;
        assert_eq!(sp.stationary_modes > 0, nt > pair.tau + pair.tau_p, "t {t}");
        assert!((direct - sp.value).abs() <= sp.err_bound, "t {t}: {direct} vs {} (bound {})", sp.value, sp.err_bound);
    }
}

#[test]
fn coincident_points_at_time_zero_are_finite() {
    let cut = build_cutoffs(6.0, 0.2).unwrap();
    let pair = PointPair { phi1: 2.0, phi2: 1.0, tau: 0.9, phi1_p: 2.0, phi2_p: 1.0, tau_p: 0.9 };
    let v = filtered_kernel(0.0, &pair, &cut, &geom(), &KernelPolicy::default()).unwrap();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn pairing_with_data_is_bounded_by_the_sup() {
    // |<K(t; x, .), q>| <= sup|K| ||q||_1 over a quadrature grid of the source variables.
    let g = geom();
    let cut = build_cutoffs(6.0, 0.2).unwrap();
    let t = 1.5;
    let taus = [0.5, 0.8, 1.1];
    let phis: Vec<f64> = (0..8).map(|i| -PI + (i as f64 + 0.5) * PI / 4.0).collect();
    let mut kvals = Vec::new();
    for &tp in &taus {
        for &p1 in &phis {
            for &p2 in &phis[..4] {
                let pair = PointPair { phi1: 2.5, phi2: 0.0, tau: 0.9, phi1_p: p1, phi2_p: p2, tau_p: tp };
                kvals.push(filtered_kernel(t, &pair, &cut, &g, &KernelPolicy::default()).unwrap());
            }
        }
    }
    let sup = kvals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..10 {
        let q: Vec<f64> = kvals.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pairing: f64 = kvals.iter().zip(&q).map(|(k, q)| k * q).sum();
        let l1: f64 = q.iter().map(|v| v.abs()).sum();
        assert!(pairing.abs() <= sup * l1);
    }
}

#[test]
fn retained_orders_are_bounded() {
    for b in [5.0, 6.0, 9.0] {
        for h in [0.3, 0.1, 0.05, 0.01] {
            let g = geom();
            for (tau, phi1) in [(0.5, 2.0), (1.2, 3.0), (1.0, 1.0)] {
                let h1 = h * prefactor_n(tau, phi1, &g);
                let top = 1.5 * b / h1;
                let mu_max = CutoffProfile::mu_max(top) as f64;
                assert!(mu_max <= (3.0 * b / (2.0 * h1)).sqrt());
                assert!((mu_max + 1.0).powi(2) >= top);
            }
        }
    }
}

#[test]
fn scaled_kernel_is_even_in_time() {
    let cut = build_cutoffs(6.0, 0.1).unwrap();
    let pair = PointPair { phi1: 1.5, phi2: 0.4, tau: 1.1, phi1_p: 2.2, phi2_p: 0.0, tau_p: 0.7 };
    let v = filtered_kernel_many(&[2.0, -2.0], &pair, &cut, &geom(), &KernelPolicy::default()).unwrap();
    assert_eq!(v[0], v[1]);
}

/// |e_{k,mu}(tau) - sqrt(2/pi) cos(k tau + (2mu - 1) pi/4)| scaled by the
/// claimed decay |mu^2 - 1/4| coth(tau) / k.
fn correction_ratio(mu: u32, k: f64, tau: f64) -> f64 {
    let e = kernel_k(mu, k, tau).unwrap().value;
    let lead = (2.0 / PI).sqrt() * (k * tau + (2.0 * mu as f64 - 1.0) * PI / 4.0).cos();
    (e - lead).abs() / ((mu * mu) as f64 - 0.25).abs() / (1.0 / tau.tanh()) * k
}

#[test]
fn amplitude_correction_decays_like_one_over_k() {
    // Fit the constant on a fixed set, then check fresh points against it.
    let mut c = 0.0f64;
    for mu in 0..4u32 {
        for k in [10.0, 20.0, 40.0] {
            for tau in [1.0, 1.2, 1.5] {
                c = c.max(correction_ratio(mu, k, tau));
            }
        }
    }
    assert!(c > 0.0 && c < 2.0, "fitted constant {c}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mu = rng.gen_range(0..4u32);
        let k = rng.gen_range(10.0..80.0);
        let tau = rng.gen_range(1.0..1.6);
        let r = correction_ratio(mu, k, tau);
        assert!(r <= 1.5 * c, "mu {mu} k {k} tau {tau}: {r} > {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn curvature_at_stationary_points(m in 3.0f64..9.0, tn in 0.1f64..50.0, tau in 0.3f64..1.2, tau_p in 0.3f64..1.2) {
        // On the band sigma <= 3b/2 with m >= b/2 and b = 6: 1/|f''| <= (9^3 / 3^2) / (tN).
        if let Ok(pts) = stationary_points(m, tn, 1.0, tau, tau_p) {
            for p in pts {
                let sigma = (p.k0 * p.k0 + m * m).sqrt();
                if sigma <= 9.0 {
                    prop_assert!(p.f_second > 0.0);
                    prop_assert!(1.0 / p.f_second <= 81.0 / tn * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn stationary_phase_error_bound(a in 0.5f64..3.0, x0 in -0.5f64..0.5, width in 0.3f64..1.0, h in 0.01f64..0.2) {
        let rho = FnAmplitude::new(move |x: f64| Complex64::new((-((x - x0) / width).powi(2)).exp(), 0.0), x0 - 4.0 * width, x0 + 4.0 * width, 4001);
        let f = QuadraticPhase { a, x0, c: 0.0 };
        let sp = stationary_phase(&rho, &f, h, x0).unwrap();
        let direct = torwave::dispersive::oscillatory_integral(&rho, &f, h);
        prop_assert!((direct - sp.approx).norm() <= sp.err_bound);
    }
}
