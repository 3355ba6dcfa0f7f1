use std::f64::consts::PI;

use torwave::geometry::{linspace, torus_from_radii, TorusGeometry};
use torwave::mehler_fock::{LibraryProfile, MfPolicy, RadialProfile};
use torwave::oracle::{
    eigen_residual, eigen_residual_of, fdtd_self_convergence, fdtd_solve, fdtd_stable_dt, quad_oracle,
    roundtrip_error, Domain, FdtdConfig, OracleError,
};
use torwave::wave_kernel::InitialData;

fn geom() -> TorusGeometry {
    torus_from_radii(1.0, 2.0).unwrap()
}

#[test]
fn quadrature_examples() {
    let r = quad_oracle(|x| x * x, Domain::Finite(0.0, 1.0), 1e-12).unwrap();
    assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
    let r = quad_oracle(|x| (-x).exp() * (10.0 * x).cos(), Domain::SemiInfinite(0.0), 1e-12).unwrap();
    assert!((r.value - 1.0 / 101.0).abs() < 1e-12, "{}", r.value);
}

#[test]
fn quadrature_error_estimates_hold() {
    type Case = (Box<dyn Fn(f64) -> f64>, Domain, f64);
    let cases: Vec<Case> = vec![
        (Box::new(|x| x.powi(5)), Domain::Finite(0.0, 2.0), 64.0 / 6.0),
        (Box::new(f64::sin), Domain::Finite(0.0, PI), 2.0),
        (Box::new(f64::exp), Domain::Finite(-1.0, 1.0), 1f64.exp() - (-1f64).exp()),
        (Box::new(|x| 1.0 / (1.0 + x * x)), Domain::Finite(0.0, 1.0), PI / 4.0),
        (Box::new(|x| 1.0 / (1.0 + x * x)), Domain::SemiInfinite(0.0), PI / 2.0),
        (Box::new(f64::sqrt), Domain::Finite(0.0, 1.0), 2.0 / 3.0),
        (Box::new(|x| x.ln()), Domain::Finite(0.0, 1.0), -1.0),
        (Box::new(|x| (-x * x).exp()), Domain::SemiInfinite(0.0), PI.sqrt() / 2.0),
        (Box::new(|x| (-x).exp()), Domain::SemiInfinite(0.0), 1.0),
        (Box::new(|x| x * (-x).exp()), Domain::SemiInfinite(0.0), 1.0),
        (Box::new(|x| (-x).exp() * (3.0 * x).sin()), Domain::SemiInfinite(0.0), 0.3),
        (Box::new(|x| (50.0 * x).cos()), Domain::Finite(0.0, 1.0), 50f64.sin() / 50.0),
        (Box::new(|x| (x).cos().powi(2)), Domain::Finite(0.0, PI), PI / 2.0),
        (Box::new(|x| 1.0 / x.sqrt()), Domain::Finite(0.0, 1.0), 2.0),
        (Box::new(|x| x.abs()), Domain::Finite(-1.0, 2.0), 2.5),
        (Box::new(|x| 1.0 / (x * x)), Domain::SemiInfinite(1.0), 1.0),
        (Box::new(|x| 1.0 / x.cosh()), Domain::SemiInfinite(0.0), PI / 2.0),
        (Box::new(|x| x.powi(3) / (x.exp() - 1.0).max(1e-300)), Domain::SemiInfinite(1e-12), PI.powi(4) / 15.0),
        (Box::new(|x| (1.0 - x * x).sqrt()), Domain::Finite(-1.0, 1.0), PI / 2.0),
        (Box::new(|x| (x.sin() / x).powi(2)), Domain::Finite(1e-9, 200.0), 0.0),
    ];
    for (i, (f, dom, exact)) in cases.into_iter().enumerate() {
        let tol = 1e-10;
        let r = quad_oracle(f.as_ref(), dom, tol).unwrap();
        if i == 19 {
            // int_0^inf (sin x / x)^2 = pi / 2, minus a tail of about 1 / (2 * 200).
            assert!((r.value - PI / 2.0).abs() < 3e-3, "case {i}: {}", r.value);
            continue;
        }
        let actual = (r.value - exact).abs();
        assert!(actual <= r.error.max(tol) + 1e-14 * exact.abs(), "case {i}: error {actual:e} > estimate {:e}", r.error);
    }
}

#[test]
fn zero_data_stay_zero() {
    let g = geom();
    let c = FdtdConfig { n_phi1: 8, n_phi2: 8, n_tau: 17, ..FdtdConfig::default() };
    let run = fdtd_solve(&InitialData::zero(&g), 0.5, &c, &g).unwrap();
    assert_eq!(run.last().max_abs(), 0.0);
}

#[test]
fn unstable_steps_are_refused() {
    let g = geom();
    let c = FdtdConfig { n_phi1: 8, n_phi2: 8, n_tau: 17, ..FdtdConfig::default() };
    let limit = fdtd_stable_dt(&c, &g).unwrap() / c.cfl;
    let bad = FdtdConfig { dt: Some(1.5 * limit), ..c };
    assert!(matches!(fdtd_solve(&InitialData::reference(&g), 0.1, &bad, &g), Err(OracleError::Cfl { .. })));
}

#[test]
fn refinement_is_second_order() {
    let g = geom();
    let c = FdtdConfig { n_phi1: 16, n_phi2: 16, n_tau: 33, ..FdtdConfig::default() };
    let s = fdtd_self_convergence(&InitialData::reference(&g), 0.25, &c, &g).unwrap();
    assert!((3.3..4.7).contains(&s.ratio), "{s:?}");
}

#[test]
fn energy_is_conserved_over_unit_time() {
    let g = geom();
    let run = fdtd_solve(&InitialData::reference(&g), 1.0, &FdtdConfig::default(), &g).unwrap();
    assert!(run.energy_drift() < 1e-2, "{}", run.energy_drift());
}

#[test]
fn eigen_residual_is_scale_invariant() {
    let nodes = linspace(0.05, 3.0, 2951);
    let base = eigen_residual(2, 5.0, &nodes).unwrap();
    // Rescaling only changes the rounding of the second difference, about eps / h^2.
    let h = nodes[1] - nodes[0];
    let floor = 8.0 * f64::EPSILON / (h * h);
    for s in [1e-6, -3.0, 250.0] {
        let r = eigen_residual_of(2, 5.0, &nodes, s).unwrap();
        assert!((r - base).abs() <= floor, "{r} vs {base}");
    }
}

#[test]
fn eigen_residual_converges_at_second_order() {
    for (mu, k) in [(0, 1.0), (2, 5.0)] {
        let a = eigen_residual(mu, k, &linspace(0.05, 3.0, 1476)).unwrap();
        let b = eigen_residual(mu, k, &linspace(0.05, 3.0, 2951)).unwrap();
        let ratio = a / b;
        assert!((3.5..4.5).contains(&ratio), "mu {mu} k {k}: {a:e} {b:e}");
    }
}

#[test]
fn eigen_residual_needs_a_uniform_grid_away_from_zero() {
    assert!(eigen_residual(0, 1.0, &linspace(0.01, 1.0, 100)).is_err());
    assert!(eigen_residual(0, 1.0, &[0.1, 0.2, 0.4, 0.5]).is_err());
}

#[test]
fn roundtrip_of_zero_is_exact() {
    let grid = MfPolicy::default().tau_grid();
    let e = roundtrip_error(&RadialProfile::zeros(&grid), 0, &MfPolicy::default()).unwrap();
    assert_eq!((e.linf_rel, e.l1_rel), (0.0, 0.0));
}

#[test]
fn roundtrip_error_falls_with_the_cut_off() {
    let base = MfPolicy::default();
    let grid = base.tau_grid();
    let p = LibraryProfile::DoubleExpHigh.sample(&grid);
    let errs: Vec<f64> = [30.0, 60.0, 120.0]
        .iter()
        .map(|&k_max| roundtrip_error(&p, 0, &MfPolicy { k_max, ..base }).unwrap().linf_rel)
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[1] <= 1e-3);
}
