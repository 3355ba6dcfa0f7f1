use std::f64::consts::PI;

use proptest::prelude::*;
use torwave::oracle::{quad_oracle, Domain};
use torwave::specfun::{
    c_norm, conical_p, conical_p_via, conical_p_weighted, gamma_complex, gamma_half_abs_sq, hankel1_asym,
    hankel_coefficient, kernel_k, olver_f, Complex64, ConicalParams, Regime,
};

fn gamma(z: Complex64) -> Complex64 {
    gamma_complex(z).unwrap().value
}

fn quad(f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    quad_oracle(f, Domain::Finite(a, b), 1e-13).unwrap().value
}

#[test]
fn gamma_reference_values() {
    assert!((gamma(Complex64::new(1.0, 0.0)) - 1.0).norm() < 1e-14);
    assert!((gamma(Complex64::new(0.5, 0.0)) - PI.sqrt()).norm() < 1e-14);
    let g = gamma(Complex64::new(0.0, 1.0)).norm_sqr();
    assert!((g - 0.272_029_054_982_133).abs() < 1e-13, "{g}");
}

#[test]
fn half_integer_gamma_values() {
    assert!((gamma_half_abs_sq(0, 0.0, 1).unwrap() - PI).abs() < 1e-14);
    assert!((gamma_half_abs_sq(1, 0.0, 1).unwrap() - PI / 4.0).abs() < 1e-14);
    let v = gamma_half_abs_sq(1, 1.0, 1).unwrap();
    let direct = gamma(Complex64::new(1.5, 1.0)).norm_sqr();
    assert!((v - direct).abs() < 1e-13 * direct);
    assert!((v - 0.338_8).abs() < 1e-4);
}

#[test]
fn normalisation_constants() {
    let th = PI.tanh();
    assert!((c_norm(1.0, 0) - th.sqrt()).abs() < 1e-14);
    assert!((c_norm(1.0, 0) - 0.998_134).abs() < 1e-6);
    assert!((c_norm(1.0, 1) - (th / 1.25).sqrt()).abs() < 1e-14);
    let k = 1e-4;
    assert!((c_norm(k, 0) / (k * PI.sqrt()) - 1.0).abs() < 1e-6);
}

#[test]
fn hypergeometric_examples() {
    let one = Complex64::new(1.0, 0.0);
    let c = Complex64::new(2.5, 0.3);
    let v = olver_f(Complex64::new(0.3, 1.0), Complex64::new(1.2, -0.4), c, 0.0).unwrap();
    assert!((v.value - 1.0 / gamma(c)).norm() < 1e-13);
    let v = olver_f(one, one, one, 0.5).unwrap();
    assert!((v.value - 2.0).norm() < 1e-13);

    // mu = 1, k = 2, z = 1/4 against the Euler integral
    // Gamma(b)Gamma(c-b) F = int_0^1 t^{b-1}(1-t)^{c-b-1}(1-zt)^{-a} dt.
    let (mu, k, z) = (1.0, 2.0, 0.25);
    let a = Complex64::new((mu + 0.5) / 2.0, k / 2.0);
    let b = Complex64::new((mu + 1.5) / 2.0, k / 2.0);
    let c = Complex64::new(mu + 1.0, 0.0);
    // t = 1 - u^4 removes the endpoint singularity of (1-t)^{c-b-1}.
    let integrand = |u: f64, part: fn(Complex64) -> f64| {
        let t = Complex64::new(1.0 - u.powi(4), 0.0);
        let uc = Complex64::new(u, 0.0);
        part(4.0 * t.powc(b - 1.0) * uc.powc(4.0 * (c - b) - 1.0) * (1.0 - z * t).powc(-a))
    };
    let re = quad(|t| integrand(t, |w| w.re), 0.0, 1.0);
    let im = quad(|t| integrand(t, |w| w.im), 0.0, 1.0);
    let expected = Complex64::new(re, im) / (gamma(b) * gamma(c - b));
    let v = olver_f(a, b, c, z).unwrap();
    assert!((v.value - expected).norm() < 1e-9 * expected.norm(), "{} vs {expected}", v.value);
}

#[test]
fn conical_examples() {
    let p = |mu, k, x| ConicalParams::new(mu, k, x).unwrap();
    assert_eq!(conical_p(p(0, 3.0, 0.0)).unwrap().value, 1.0);
    assert_eq!(conical_p_weighted(p(2, 3.0, 0.0)).unwrap().value, 0.0);

    // mu = 1, k = 40, x = 1 against the leading large-k term, O(1/k) relative.
    let (k, x) = (40.0f64, 1.0f64);
    let lead = k.sqrt() * (2.0 / (PI * x.sinh())).sqrt() * (x * k + PI / 4.0).cos();
    let env = k.sqrt() * (2.0 / (PI * x.sinh())).sqrt();
    let v = conical_p(p(1, k, x)).unwrap().value;
    assert!((v - lead).abs() < 2.0 / k * env, "{v} vs {lead}");

    // Kernel, mu = 0, k = 5, tau = 2.
    let (k, tau) = (5.0, 2.0);
    let v = kernel_k(0, k, tau).unwrap().value;
    let lead = (2.0 / PI).sqrt() * (k * tau - PI / 4.0).cos();
    assert!((v - lead).abs() < 1.0 / k, "{v} vs {lead}");
}

#[test]
fn kernel_vanishes_on_the_axis() {
    for mu in 1..5 {
        for k in [0.1, 1.0, 7.5, 40.0] {
            assert_eq!(kernel_k(mu, k, 0.0).unwrap().value, 0.0);
        }
    }
}

#[test]
fn invalid_parameters_are_refused() {
    assert!(ConicalParams::new(0, 0.0, 1.0).is_err());
    assert!(ConicalParams::new(0, -1.0, 1.0).is_err());
    assert!(ConicalParams::new(0, 1.0, -0.1).is_err());
    assert!(gamma_complex(Complex64::new(-3.0, 0.0)).is_err());
    assert!(hankel1_asym(5.0, 2.0, 3).is_err());
}

#[test]
fn hankel_expansion_against_integral_bessel_functions() {
    assert_eq!(hankel_coefficient(0, 2.7), 1.0);
    assert!((hankel_coefficient(1, 0.0) + 0.125).abs() < 1e-15);
    let z = 50.0;
    // J0 and Y0 from their integral representations.
    let j0 = quad(|t| (z * t.sin()).cos(), 0.0, PI) / PI;
    let euler = 0.577_215_664_901_532_9;
    let y0 = 4.0 / (PI * PI)
        * quad(|t| (z * t.cos()).cos() * (euler + (2.0 * z * t.sin().powi(2)).ln()), 0.0, PI / 2.0);
    let h = hankel1_asym(0.0, z, 3).unwrap();
    let gap = (h.value - Complex64::new(j0, y0)).norm();
    assert!(gap <= h.abs_err + 1e-12, "gap {gap:e}, bound {:e}", h.abs_err);
}

#[test]
fn large_order_decay() {
    let k = 2.0;
    for x in [0.5, 1.0] {
        let scaled: Vec<f64> = [10u32, 15, 20]
            .iter()
            .map(|&mu| {
                let p = conical_p(ConicalParams::new(mu, k, x).unwrap()).unwrap().value;
                p.abs() * gamma(Complex64::new(0.5 - mu as f64, k)).norm()
            })
            .collect();
        assert!(scaled[1] < scaled[0] && scaled[2] < scaled[1], "x = {x}: {scaled:?}");
        // Geometric: the second ratio is not much worse than the first.
        let (r1, r2) = (scaled[1] / scaled[0], scaled[2] / scaled[1]);
        assert!(r2 < r1.sqrt(), "ratios {r1} {r2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_formula(r in 0.1f64..7.5, th in -3.0f64..3.0) {
        let z = Complex64::from_polar(r, th);
        let lhs = gamma(z) * gamma(z + 0.5);
        let rhs = PI.sqrt() * Complex64::new(2.0, 0.0).powc(1.0 - 2.0 * z) * gamma(2.0 * z);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn imaginary_part_lowers_the_modulus(x in 0.05f64..10.0, y in -10.0f64..10.0) {
        let with = gamma(Complex64::new(x, y)).norm();
        let without = gamma(Complex64::new(x, 0.0)).norm();
        prop_assert!(with <= without * (1.0 + 1e-12));
    }

    #[test]
    fn large_k_route_agrees_with_exact_route(mu in 0u32..3, k in 15.0f64..25.0, x in 0.8f64..1.2) {
        let p = ConicalParams::new(mu, k, x).unwrap();
        let exact = conical_p(p).unwrap();
        let approx = conical_p_via(p, Regime::LargeK).unwrap();
        prop_assert!((exact.value - approx.value).abs() <= exact.abs_err + approx.abs_err);
    }

    #[test]
    fn weighted_conical_bound(mu in 1u32..5, k in 1.0f64..10.0, x in 0.01f64..2.0) {
        let w = conical_p_weighted(ConicalParams::new(mu, k, x).unwrap()).unwrap().value;
        let g = gamma(Complex64::new(-0.5 - mu as f64, k)).norm();
        prop_assert!(w.abs() <= x.sinh().powf(mu as f64 + 0.5) / g * (1.0 + 1e-9));
    }

    #[test]
    fn kernel_matches_the_hypergeometric_series(mu in 0u32..5, k in 0.1f64..8.0, x in 0.01f64..1.3) {
        // P^{-mu} = tanh(x/2)^mu sum_n (1/2+ik)_n (1/2-ik)_n w^n / (n! Gamma(mu+1+n)),
        // w = (1 - cosh x)/2, then K = (-1)^mu c sqrt(sinh x) prod P^{-mu}.
        let w = 0.5 * (1.0 - x.cosh());
        let mut term = 1.0 / (1..=mu).map(f64::from).product::<f64>();
        let mut sum = term;
        for n in 0..400 {
            let nf = n as f64;
            term *= ((nf + 0.5).powi(2) + k * k) * w / ((nf + 1.0) * (mu as f64 + 1.0 + nf));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        let p_neg = (0.5 * x).tanh().powi(mu as i32) * sum;
        let prod: f64 = (1..=mu).map(|l| (l as f64 - 0.5).powi(2) + k * k).product();
        let sign = if mu % 2 == 0 { 1.0 } else { -1.0 };
        let expected = sign * c_norm(k, mu) * x.sinh().sqrt() * prod * p_neg;
        let got = kernel_k(mu, k, x).unwrap();
        prop_assert!((got.value - expected).abs() <= got.abs_err + 1e-9 * (1.0 + expected.abs()),
            "{} vs {expected}", got.value);
    }
}
