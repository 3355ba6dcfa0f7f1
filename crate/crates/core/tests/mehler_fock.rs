use proptest::prelude::*;
use torwave::mehler_fock::{
    class_a_check, forward, inverse, LibraryProfile, MfError, MfPolicy, RadialProfile, SpectralDensity,
};
use torwave::oracle::{quad_oracle, roundtrip_error, roundtrip_sweep, Domain};
use torwave::quad::NodeSet;
use torwave::specfun::kernel_k;

fn small_policy() -> MfPolicy {
    MfPolicy { k_max: 4.0, ..MfPolicy::default() }
}

#[test]
fn forward_value_matches_adaptive_quadrature() {
    let policy = MfPolicy::default();
    let grid = policy.tau_grid();
    let g = |x: f64| if x > 40.0 { 0.0 } else { x.sinh() * (-2.0 * x.cosh()).exp() };
    let profile = RadialProfile::from_fn(&grid, Some(2.0), g);
    let at_one = NodeSet { nodes: vec![1.0], weights: vec![1.0] };
    let d = forward(&profile, 0, &at_one, &policy).unwrap();
    let oracle = quad_oracle(|x| g(x) * kernel_k(0, 1.0, x).unwrap().value, Domain::SemiInfinite(0.0), 1e-13).unwrap();
    assert!((d.values[0] - oracle.value).abs() < 1e-8, "{} vs {}", d.values[0], oracle.value);
}

#[test]
fn zero_density_inverts_to_zero() {
    let policy = small_policy();
    let d = SpectralDensity::zeros(&policy.k_grid(), 2);
    let back = inverse(&d, &policy.tau_grid(), &policy).unwrap();
    assert!(back.values.iter().all(|&v| v == 0.0));
}

#[test]
fn class_check_examples() {
    let grid = MfPolicy::default().tau_grid();
    assert!(class_a_check(&LibraryProfile::DoubleExp.sample(&grid)).pass);
    assert!(!class_a_check(&RadialProfile::from_fn(&grid, None, |x| (-0.5 * x).exp())).pass);
    assert!(!class_a_check(&RadialProfile::from_fn(&grid, None, |x| 1.0 / x)).pass);
    let slow = RadialProfile::from_fn(&grid, None, |x| (-0.5 * x).exp());
    assert!(matches!(roundtrip_error(&slow, 0, &MfPolicy::default()), Err(torwave::oracle::OracleError::Transform(MfError::Class(_)))));
}

#[test]
fn kernel_is_regular_at_small_k() {
    for mu in 0..4 {
        for x in [0.1, 1.0, 5.0] {
            let v = kernel_k(mu, 1e-6, x).unwrap().value;
            assert!(v.is_finite() && v.abs() < 1e-4, "mu {mu} x {x}: {v}");
        }
    }
}

#[test]
fn roundtrip_error_decays_like_one_over_k_max() {
    // Profiles linear at 0 carry a boundary layer of width ~ 1/k_max.
    let policy = MfPolicy::default();
    let grid = policy.tau_grid();
    let profiles = [LibraryProfile::SinhExpCosh.sample(&grid), LibraryProfile::GaussShell.sample(&grid)];
    let table = roundtrip_sweep(&profiles, 0, &policy, &[30.0, 60.0, 120.0]).unwrap();
    let linear: Vec<f64> = table[0].iter().map(|e| e.linf_rel).collect();
    for w in linear.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.5).contains(&ratio), "{linear:?}");
    }
    let smooth: Vec<f64> = table[1].iter().map(|e| e.linf_rel).collect();
    assert!(smooth[1] < smooth[0] && smooth[2] < smooth[1], "{smooth:?}");
    assert!(smooth[1] <= 1e-3);
}

#[test]
fn order_two_roundtrip_is_resolved() {
    // Halving the node spacing must not change the error: it is set by the k cut-off.
    let base = MfPolicy::default();
    let dense = MfPolicy { nodes_per_unit: 2 * base.nodes_per_unit, ..base };
    let e1 = roundtrip_error(&LibraryProfile::TanhPower.sample(&base.tau_grid()), 2, &base).unwrap();
    let e2 = roundtrip_error(&LibraryProfile::TanhPower.sample(&dense.tau_grid()), 2, &dense).unwrap();
    assert!(e1.linf_rel <= 1e-3 && e2.linf_rel <= 1e-3, "{e1:?} {e2:?}");
    assert!((e1.linf_rel - e2.linf_rel).abs() <= 0.25 * e2.linf_rel, "{e1:?} {e2:?}");
}

#[test]
fn forward_and_inverse_are_adjoint() {
    let policy = small_policy();
    let tau = policy.tau_grid();
    let kg = policy.k_grid();
    let g = LibraryProfile::GaussShell.sample(&tau);
    let mut f = SpectralDensity::zeros(&kg, 1);
    for (v, k) in f.values.iter_mut().zip(&kg.nodes) {
        *v = (-4.0 * (k - 2.0) * (k - 2.0)).exp();
    }
    let fg = forward(&g, 1, &kg, &policy).unwrap();
    let lhs: f64 = fg.values.iter().zip(&f.values).zip(&kg.weights).map(|((a, b), w)| a * b * w).sum();
    let back = inverse(&f, &tau, &policy).unwrap();
    let rhs: f64 = back.values.iter().zip(&g.values).zip(&tau.weights).map(|((a, b), w)| a * b * w).sum();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-3), "{lhs} vs {rhs}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forward_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, mu in 0u32..4) {
        let policy = small_policy();
        let grid = policy.tau_grid();
        let kg = policy.k_grid();
        let a = LibraryProfile::Bump.sample(&grid);
        let b = LibraryProfile::DoubleExpHigh.sample(&grid);
        let mut combo = a.clone();
        for (c, (x, y)) in combo.values.iter_mut().zip(a.values.iter().zip(&b.values)) {
            *c = alpha * x + beta * y;
        }
        combo.decay_rate = Some(2.0);
        prop_assume!(combo.sup_norm() > 1e-3);
        let fa = forward(&a, mu, &kg, &policy).unwrap();
        let fb = forward(&b, mu, &kg, &policy).unwrap();
        let fc = forward(&combo, mu, &kg, &policy).unwrap();
        let scale = fc.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for i in 0..kg.len() {
            prop_assert!((fc.values[i] - alpha * fa.values[i] - beta * fb.values[i]).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
