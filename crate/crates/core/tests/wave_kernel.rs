use torwave::geometry::{torus_from_radii, GridSpec, TorusGeometry};
use torwave::wave_kernel::{
    eps_margin, mode_coefficients, synthesize, InitialData, ModeIndex, MuRule, TruncationPolicy,
};

fn geom() -> TorusGeometry {
    torus_from_radii(1.0, 2.0).unwrap()
}

fn policy(m_max: u32) -> TruncationPolicy {
    TruncationPolicy { m_max, mu_rule: MuRule::Fixed { mu_max: 6 }, n_angle: 64, ..TruncationPolicy::default() }
}

fn grid(g: &TorusGeometry) -> GridSpec {
    let m = eps_margin(g);
    GridSpec { n_phi1: 8, n_phi2: 8, n_tau: 6, tau_min: m, tau_max: g.tau1 - m }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn solution_is_even_in_time() {
    let g = geom();
    let data = InitialData::reference(&g);
    let p = policy(6);
    let a = synthesize(&data, 0.3, &grid(&g), &g, &p).unwrap();
    let b = synthesize(&data, -0.3, &grid(&g), &g, &p).unwrap();
    assert!(max_diff(&a.field.values, &b.field.values) <= 1e-12 * a.field.max_abs());
}

#[test]
fn initial_velocity_vanishes() {
    // (u(d) - u(0)) / d is O(d), so halving d halves it.
    let g = geom();
    let data = InitialData::reference(&g);
    let p = policy(6);
    let u0 = synthesize(&data, 0.0, &grid(&g), &g, &p).unwrap().field;
    let rate = |d: f64| {
        let u = synthesize(&data, d, &grid(&g), &g, &p).unwrap().field;
        max_diff(&u.values, &u0.values) / d
    };
    let (r1, r2) = (rate(0.02), rate(0.01));
    assert!((r1 / r2 - 2.0).abs() < 0.2, "{r1} {r2}");
}

#[test]
fn synthesis_is_linear_in_the_data() {
    let g = geom();
    let a = InitialData::reference(&g);
    // Same support as the reference, so all three runs share quadrature nodes.
    let (lo, hi) = (a.eps0, a.support_tau_max);
    let b = InitialData::from_fn(
        move |p1: f64, p2: f64, t: f64| {
            let s = ((t - lo) * (hi - t)).max(0.0);
            s * s * s * p1.cos() * (2.0 * p2).sin()
        },
        lo,
        hi,
    )
    .unwrap();
    let p = policy(6);
    let (alpha, beta) = (1.7, -0.6);
    let sa = synthesize(&a, 0.2, &grid(&g), &g, &p).unwrap().field;
    let sb = synthesize(&b, 0.2, &grid(&g), &g, &p).unwrap().field;
    let sc = synthesize(&InitialData::combine(alpha, &a, beta, &b), 0.2, &grid(&g), &g, &p).unwrap().field;
    let expected: Vec<f64> = sa.values.iter().zip(&sb.values).map(|(x, y)| alpha * x + beta * y).collect();
    assert!(max_diff(&sc.values, &expected) <= 1e-10 * sc.max_abs());
}

#[test]
fn doubling_the_mode_range_stays_within_the_tail_estimate() {
    let g = geom();
    let data = InitialData::reference(&g);
    for t in [0.0, 0.2] {
        let coarse = synthesize(&data, t, &grid(&g), &g, &policy(4)).unwrap();
        let fine = synthesize(&data, t, &grid(&g), &g, &policy(8)).unwrap();
        let change = max_diff(&coarse.field.values, &fine.field.values);
        assert!(change <= coarse.mode_tail, "t {t}: change {change:e}, tail {:e}", coarse.mode_tail);
    }
}

#[test]
fn coefficients_decay_faster_than_fourth_power() {
    // Smooth data: the local decay exponent keeps growing and passes 4.
    let g = geom();
    let data = InitialData::reference(&g);
    let p = TruncationPolicy { n_angle: 128, ..TruncationPolicy::default() };
    let sup = |m: u32, mu: u32| mode_coefficients(&data, ModeIndex { m, mu }, &p, &g).unwrap().sup();
    let exponent = |s0: f64, s1: f64, n0: u32, n1: u32| (s0 / s1).ln() / (n1 as f64 / n0 as f64).ln();
    for fixed in [1, 2] {
        let along_m: Vec<f64> = [(4, 8), (8, 16)].iter().map(|&(a, b)| exponent(sup(a, fixed), sup(b, fixed), a, b)).collect();
        let along_mu: Vec<f64> = [(4, 8), (8, 16)].iter().map(|&(a, b)| exponent(sup(fixed, a), sup(fixed, b), a, b)).collect();
        for e in [along_m, along_mu] {
            assert!(e[1] > e[0] && e[1] > 4.0, "exponents {e:?}");
        }
    }
}

#[test]
fn zero_data_stay_zero_at_any_time() {
    let g = geom();
    let s = synthesize(&InitialData::zero(&g), 0.7, &grid(&g), &g, &policy(4)).unwrap();
    assert_eq!(s.field.max_abs(), 0.0);
}
