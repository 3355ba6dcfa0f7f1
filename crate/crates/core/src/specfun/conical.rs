use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;

use super::bessel::bessel_j;
use super::gamma::{c_norm, ln_gamma, ln_gamma_real, ln_half_product};
use super::hyper::gauss_series;
use super::{trace, ConicalParams, EvalResult, Regime, SpecfunError};
use crate::quad::gauss_legendre;

/// Absolute tolerance on the unit-scale kernel used by the dispatcher.
pub const KERNEL_TOL: f64 = 1e-8;

const EXP_SERIES_MAX_Y: f64 = 0.97;
const SERIES_MAX_KX: f64 = 25.0;
const SERIES_MAX_X: f64 = 2.0;

fn sign(mu: u32) -> f64 {
    if mu % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// ln sqrt(k tanh(pi k) prod_l ((l-1/2)^2 + k^2)), the factor turning
/// sqrt(sinh x) P^{-mu} into the normalised kernel.
fn ln_big_norm(mu: u32, k: f64) -> f64 {
    0.5 * (k.ln() + (PI * k).tanh().ln() + ln_half_product(mu, k))
}

/// Hypergeometric series in tanh^2 x.
fn route_series(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    let th = x.tanh();
    let z = th * th;
    let a = Complex64::new(0.5 * (mu as f64 + 0.5), 0.5 * k);
    let b = a + 0.5;
    let c = Complex64::new(mu as f64 + 1.0, 0.0);
    let s = gauss_series(a, b, c, z, 1e-17, 20_000)?;
    let phase = Complex64::from_polar(1.0, -k * x.cosh().ln());
    let ln_pref = ln_big_norm(mu, k) - mu as f64 * std::f64::consts::LN_2 + (mu as f64 + 0.5) * th.ln()
        - ln_gamma_real(mu as f64 + 1.0);
    let pref = ln_pref.exp();
    let value = sign(mu) * pref * (phase * s.value).re;
    let abs_err = pref * s.abs_err + 8.0 * f64::EPSILON * value.abs();
    Ok(EvalResult::new(value, abs_err, Regime::Series))
}

/// Ratio g(s)/sinh(x) of the substituted Mehler-Dirichlet integrand.
fn dirichlet_ratio(x: f64, s: f64) -> f64 {
    let d = x * s * s;
    let half = 0.5 * d;
    let sinhc = if half == 0.0 { 1.0 } else { half.sinh() / half };
    let big = x - half;
    // sinh(big)/sinh(x) without overflow
    let ratio = (big - x).exp() * (-(-2.0 * big).exp_m1()) / (-(-2.0 * x).exp_m1());
    x * sinhc * ratio
}

/// Mehler-Dirichlet integral with t = x(1 - s^2).
fn route_integral(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    let panels = ((k * x / 4.0).ceil() + (2.0 * x.sqrt()).ceil() + 2.0) as usize;
    if panels > 200_000 {
        return Err(SpecfunError::Convergence(format!("integral route needs {panels} panels")));
    }
    let expo = mu as f64 - 0.5;
    let integrand = |s: f64| -> f64 {
        let q = dirichlet_ratio(x, s);
        (k * x * (1.0 - s * s)).cos() * s.powi(2 * mu as i32) * q.powf(expo)
    };
    let eval = |n: usize| -> (f64, f64) {
        let rule = gauss_legendre(n);
        let mut sum = 0.0;
        let mut mass = 0.0;
        let w = 1.0 / panels as f64;
        for p in 0..panels {
            let lo = p as f64 * w;
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                let s = lo + 0.5 * w * (t + 1.0);
                let f = integrand(s);
                sum += 0.5 * w * wt * f;
                mass += 0.5 * w * wt * f.abs();
            }
        }
        (sum, mass)
    };
    let (fine, mass) = eval(24);
    let (coarse, _) = eval(16);
    let ln_pref = ln_big_norm(mu, k) + 0.5 * FRAC_2_PI.ln() - ln_gamma_real(mu as f64 + 0.5) + (2.0 * x).ln();
    let pref = ln_pref.exp();
    let value = sign(mu) * pref * fine;
    let abs_err = pref * ((fine - coarse).abs() + 8.0 * f64::EPSILON * mass * (panels as f64).sqrt());
    Ok(EvalResult::new(value, abs_err, Regime::IntegralRep))
}

/// arg Gamma(ik) - arg Gamma(1/2 + mu + ik), with its rounding error.
fn connection_phase(mu: u32, k: f64) -> (f64, f64) {
    let lg0 = ln_gamma(Complex64::new(0.0, k));
    let lg1 = ln_gamma(Complex64::new(0.5 + mu as f64, k));
    let theta = lg0.im - lg1.im;
    let err = 16.0 * f64::EPSILON * (lg0.norm() + lg1.norm() + 1.0);
    (theta, err)
}

/// Connection formula around x = infinity, series in e^{-2x}.
fn route_exp_series(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    exp_series_with_phase(mu, k, x, connection_phase(mu, k))
}

fn exp_series_with_phase(mu: u32, k: f64, x: f64, phase: (f64, f64)) -> Result<EvalResult<f64>, SpecfunError> {
    let y = (-2.0 * x).exp();
    let a = Complex64::new(0.5 + mu as f64, 0.0);
    let b = Complex64::new(0.5 + mu as f64, -k);
    let c = Complex64::new(1.0, -k);
    let s = gauss_series(a, b, c, y, 1e-17, 4000)?;
    let (theta, theta_err) = phase;
    let pref = FRAC_2_PI.sqrt() * ((mu as f64 + 0.5) * (-y).ln_1p()).exp();
    let rot = Complex64::from_polar(1.0, theta + k * x);
    let value = sign(mu) * pref * (rot * s.value).re;
    let phase_err = (theta_err + 2.0 * f64::EPSILON * k * x) * s.value.norm();
    let abs_err = pref * (s.abs_err + phase_err) + 8.0 * f64::EPSILON * value.abs();
    Ok(EvalResult::new(value, abs_err, Regime::ExpSeries))
}

fn largek_envelope(mu: u32, k: f64, x: f64) -> f64 {
    ((mu as f64 - 0.5) * k.ln()).exp() * (FRAC_2_PI / x.sinh()).sqrt()
}

fn stirling_guard(mu: u32, k: f64, x: f64) -> Result<(), SpecfunError> {
    if (mu as f64) > k.sqrt() {
        Err(SpecfunError::RegimeGap { mu, k, x, tol: f64::NAN })
    } else {
        Ok(())
    }
}

/// Leading large-k term for P^mu (unnormalised).
fn largek_p(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    stirling_guard(mu, k, x)?;
    if x <= 0.0 {
        return Err(SpecfunError::RegimeGap { mu, k, x, tol: f64::NAN });
    }
    let env = largek_envelope(mu, k, x);
    let value = env * (x * k + 0.25 * PI * (2.0 * mu as f64 - 1.0)).cos();
    let m2 = (mu as f64 * mu as f64 - 0.25).abs();
    let coth = 1.0 / x.tanh();
    let kx = k * x.min(1.0);
    let rel = (m2 * coth + 0.5) / (2.0 * k) + (1.0 + m2) * (1.0 + m2) / (kx * kx);
    Ok(EvalResult::new(value, env * rel, Regime::LargeK))
}

/// Leading Bessel term near the axis (small x, fixed k scale).
fn route_bessel(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    let kx = k * x;
    let norm = (0.5 * ((PI * k).tanh().ln() + ln_half_product(mu, k)) - mu as f64 * k.ln()).exp();
    let value = sign(mu) * norm * kx.sqrt() * bessel_j(mu, kx);
    let m2 = (mu as f64 * mu as f64 - 0.25).abs();
    // First omitted term of the uniform expansion scales like x^2 (mu^2 - 1/4)/6
    // relative to the Bessel envelope, plus a 1/k^2 normalisation drift.
    let env = norm * kx.sqrt().min(1.0);
    let abs_err = env * ((1.0 + m2) * x * x / 3.0 + (1.0 + m2) / (k * k + 1.0) * x);
    Ok(EvalResult::new(value, abs_err, Regime::BesselUniform))
}

/// Large-order leading term of P^{-mu} with the alternating-series bound.
fn route_large_mu(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    let s = (0.5 * x).sinh().powi(2);
    let mf = mu as f64;
    let ratio = |n: f64| ((n + 0.5).powi(2) + k * k) * s / ((mf + 1.0 + n) * (n + 1.0));
    let mut worst: f64 = s;
    for n in 0..400 {
        worst = worst.max(ratio(n as f64));
    }
    if worst >= 1.0 {
        return Err(SpecfunError::RegimeGap { mu, k, x, tol: f64::NAN });
    }
    let lead_ln = mf * (0.5 * x).tanh().ln() - ln_gamma_real(mf + 1.0);
    let lead = lead_ln.exp();
    let first = lead * ratio(0.0);
    let scale = (ln_big_norm(mu, k) + 0.5 * x.sinh().ln()).exp();
    let value = sign(mu) * scale * lead;
    Ok(EvalResult::new(value, scale * first, Regime::LargeMu))
}

fn check_params(mu: u32, k: f64, x: f64) -> Result<(), SpecfunError> {
    ConicalParams::new(mu, k, x).map(|_| ())
}

/// The normalised kernel K^mu(k, x) through a chosen route.
pub fn kernel_k_via(mu: u32, k: f64, x: f64, route: Regime) -> Result<EvalResult<f64>, SpecfunError> {
    check_params(mu, k, x)?;
    if x == 0.0 {
        return Ok(EvalResult::new(0.0, 0.0, route));
    }
    match route {
        Regime::Series => route_series(mu, k, x),
        Regime::IntegralRep => route_integral(mu, k, x),
        Regime::ExpSeries => route_exp_series(mu, k, x),
        Regime::BesselUniform => route_bessel(mu, k, x),
        Regime::LargeMu => route_large_mu(mu, k, x),
        Regime::LargeK => {
            let p = largek_p(mu, k, x)?;
            let f = c_norm(k, mu) * x.sinh().sqrt();
            Ok(EvalResult::new(p.value * f, p.abs_err * f, Regime::LargeK))
        }
    }
}

/// Exact routes in order of preference for this input, and whether the
/// input sits within 10% of a switching threshold.
fn preferred_routes(mu: u32, k: f64, x: f64) -> (Vec<Regime>, bool) {
    let kx = k * x;
    let y = (-2.0 * x).exp();
    let exp_ok = kx >= mu as f64 + 2.0 && y <= EXP_SERIES_MAX_Y;
    let series_ok = kx <= SERIES_MAX_KX && x <= SERIES_MAX_X;
    let near = |v: f64, t: f64| (v - t).abs() <= 0.1 * t;
    let boundary = near(kx, mu as f64 + 2.0)
        || near(y, EXP_SERIES_MAX_Y)
        || near(kx, SERIES_MAX_KX)
        || near(x, SERIES_MAX_X);
    let mut routes = Vec::with_capacity(3);
    if exp_ok {
        routes.push(Regime::ExpSeries);
    }
    if series_ok {
        routes.push(Regime::Series);
    }
    routes.push(Regime::IntegralRep);
    for r in [Regime::ExpSeries, Regime::Series] {
        if !routes.contains(&r) {
            routes.push(r);
        }
    }
    (routes, boundary)
}

/// The normalised Mehler-Fock kernel K^mu(k, x) = c_{k,mu} sqrt(sinh x) P^mu_{ik-1/2}(cosh x).
///
/// Dispatches between the convergent representations by their error
/// estimates. Inputs near a switching threshold are evaluated twice and
/// the discrepancy is folded into `abs_err`.
pub fn kernel_k(mu: u32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    kernel_k_tol(mu, k, x, KERNEL_TOL)
}

/// As [`kernel_k`] with an explicit absolute tolerance.
pub fn kernel_k_tol(mu: u32, k: f64, x: f64, tol: f64) -> Result<EvalResult<f64>, SpecfunError> {
    check_params(mu, k, x)?;
    if x == 0.0 {
        return Ok(EvalResult::new(0.0, 0.0, Regime::Series));
    }
    let (routes, boundary) = preferred_routes(mu, k, x);
    let mut best: Option<EvalResult<f64>> = None;
    let mut chosen = None;
    for (i, &r) in routes.iter().enumerate() {
        let Ok(v) = kernel_k_via(mu, k, x, r) else { continue };
        if v.abs_err <= tol {
            chosen = Some((i, v));
            break;
        }
        if best.map_or(true, |b| v.abs_err < b.abs_err) {
            best = Some(v);
        }
    }
    let Some((i, mut v)) = chosen else {
        trace::record("kernel_k", mu, k, x, None, best.map(|b| b.abs_err));
        return Err(SpecfunError::RegimeGap { mu, k, x, tol });
    };
    if boundary {
        for &r in routes.iter().skip(i + 1) {
            if let Ok(w) = kernel_k_via(mu, k, x, r) {
                if w.abs_err <= tol {
                    v.abs_err = v.abs_err.max((v.value - w.value).abs());
                    break;
                }
            }
        }
    }
    trace::record("kernel_k", mu, k, x, Some(v.regime), Some(v.abs_err));
    Ok(v)
}

/// K^mu(k, x) at several arguments sharing the same (mu, k).
///
/// The Gamma-function phase of the connection series is computed once and
/// reused at every argument where that series applies; the remaining
/// arguments are dispatched one by one.
pub fn kernel_k_multi(mu: u32, k: f64, xs: &[f64]) -> Result<Vec<EvalResult<f64>>, SpecfunError> {
    for &x in xs {
        check_params(mu, k, x)?;
    }
    let mut phase = None;
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let exp_ok = x > 0.0 && k * x >= mu as f64 + 2.0 && (-2.0 * x).exp() <= EXP_SERIES_MAX_Y;
        if exp_ok {
            let ph = *phase.get_or_insert_with(|| connection_phase(mu, k));
            let v = exp_series_with_phase(mu, k, x, ph)?;
            if v.abs_err <= KERNEL_TOL {
                out.push(v);
                continue;
            }
        }
        out.push(kernel_k(mu, k, x)?);
    }
    Ok(out)
}

/// Kernel with a signed order; negative orders go through the order switch
/// and satisfy (-1)^mu K_{-mu} = K_mu.
pub fn kernel_k_signed(mu: i32, k: f64, x: f64) -> Result<EvalResult<f64>, SpecfunError> {
    let m = mu.unsigned_abs();
    let v = kernel_k(m, k, x)?;
    if mu >= 0 {
        Ok(v)
    } else {
        Ok(EvalResult::new(sign(m) * v.value, v.abs_err, v.regime))
    }
}

/// The conical function P^mu_{ik-1/2}(cosh x).
pub fn conical_p(p: ConicalParams) -> Result<EvalResult<f64>, SpecfunError> {
    let ConicalParams { mu, k, x } = p;
    if x == 0.0 {
        let v = if mu == 0 { 1.0 } else { 0.0 };
        return Ok(EvalResult::new(v, 0.0, Regime::Series));
    }
    let f = c_norm(k, mu) * x.sinh().sqrt();
    // Scale the tolerance to the natural size of P^mu.
    let tol = KERNEL_TOL * (1.0 + x.tanh().sqrt());
    let kv = kernel_k_tol(mu, k, x, tol)?;
    Ok(EvalResult::new(kv.value / f, kv.abs_err / f, kv.regime))
}

/// P^mu_{ik-1/2}(cosh x) through a chosen route.
pub fn conical_p_via(p: ConicalParams, route: Regime) -> Result<EvalResult<f64>, SpecfunError> {
    let ConicalParams { mu, k, x } = p;
    if route == Regime::LargeK {
        return largek_p(mu, k, x);
    }
    if x == 0.0 {
        let v = if mu == 0 { 1.0 } else { 0.0 };
        return Ok(EvalResult::new(v, 0.0, route));
    }
    let f = c_norm(k, mu) * x.sinh().sqrt();
    let kv = kernel_k_via(mu, k, x, route)?;
    Ok(EvalResult::new(kv.value / f, kv.abs_err / f, kv.regime))
}

/// sqrt(sinh x) P^mu_{ik-1/2}(cosh x).
pub fn conical_p_weighted(p: ConicalParams) -> Result<EvalResult<f64>, SpecfunError> {
    if p.x == 0.0 {
        return Ok(EvalResult::new(0.0, 0.0, Regime::Series));
    }
    let f = c_norm(p.k, p.mu);
    let kv = kernel_k(p.mu, p.k, p.x)?;
    Ok(EvalResult::new(kv.value / f, kv.abs_err / f, kv.regime))
}

/// P^{-mu}_{ik-1/2}(cosh x), obtained from the positive order by the
/// order switch for arguments above one.
pub fn conical_p_negative(p: ConicalParams) -> Result<EvalResult<f64>, SpecfunError> {
    let ConicalParams { mu, k, x } = p;
    if x == 0.0 {
        let v = if mu == 0 { 1.0 } else { 0.0 };
        return Ok(EvalResult::new(v, 0.0, Regime::Series));
    }
    let kv = kernel_k(mu, k, x)?;
    let f = ln_big_norm(mu, k).exp() * x.sinh().sqrt();
    Ok(EvalResult::new(sign(mu) * kv.value / f, kv.abs_err / f, kv.regime))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: u32, k: f64, x: f64) -> ConicalParams {
        ConicalParams::new(mu, k, x).unwrap()
    }

    #[test]
    fn exact_routes_agree_where_they_overlap() {
        let cases = [
            (0, 0.5, 0.3),
            (0, 3.0, 1.0),
            (1, 2.0, 1.5),
            (2, 5.0, 0.8),
            (3, 7.0, 1.2),
            (3, 1.0, 0.05),
            (5, 10.0, 1.0),
            (0, 12.0, 1.9),
        ];
        for (mu, k, x) in cases {
            let s = kernel_k_via(mu, k, x, Regime::Series).unwrap();
            let i = kernel_k_via(mu, k, x, Regime::IntegralRep).unwrap();
            assert!(
                (s.value - i.value).abs() <= s.abs_err + i.abs_err + 1e-13,
                "series/integral mu={mu} k={k} x={x}: {} vs {}",
                s.value,
                i.value
            );
            if k * x >= mu as f64 + 2.0 {
                let e = kernel_k_via(mu, k, x, Regime::ExpSeries).unwrap();
                assert!(
                    (s.value - e.value).abs() <= s.abs_err + e.abs_err + 1e-13,
                    "series/exp mu={mu} k={k} x={x}: {} vs {}",
                    s.value,
                    e.value
                );
            }
        }
    }

    #[test]
    fn integral_and_exp_series_agree_far_out() {
        for (mu, k, x) in [(0, 1.0, 6.0), (2, 0.7, 10.0), (1, 30.0, 4.0), (3, 80.0, 2.5)] {
            let i = kernel_k_via(mu, k, x, Regime::IntegralRep).unwrap();
            let e = kernel_k_via(mu, k, x, Regime::ExpSeries).unwrap();
            assert!(
                (i.value - e.value).abs() <= i.abs_err + e.abs_err + 1e-12,
                "mu={mu} k={k} x={x}: {} vs {}",
                i.value,
                e.value
            );
        }
    }

    #[test]
    fn order_one_matches_derivative_definition() {
        // P^1(cosh x) = sinh x d/d(cosh x) P^0 = d/dx P^0(cosh x)
        for (k, x) in [(1.5, 0.7), (4.0, 1.3), (0.4, 2.0)] {
            let h = 1e-4;
            let f = |xx: f64| conical_p(p(0, k, xx)).unwrap().value;
            let d = (f(x + h) - f(x - h)) / (2.0 * h);
            let p1 = conical_p(p(1, k, x)).unwrap().value;
            assert!((d - p1).abs() < 1e-6 * (1.0 + p1.abs()), "k={k} x={x}: {d} vs {p1}");
        }
    }

    #[test]
    fn order_two_matches_second_derivative_definition() {
        // P^2(u) = (u^2 - 1) d^2/du^2 P^0(u), u = cosh x
        let (k, x) = (2.5_f64, 0.9_f64);
        let u = x.cosh();
        let h = 1e-3;
        let f = |uu: f64| conical_p(p(0, k, uu.acosh())).unwrap().value;
        let d2 = (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h);
        let p2 = conical_p(p(2, k, x)).unwrap().value;
        assert!((d2 * (u * u - 1.0) - p2).abs() < 1e-5 * (1.0 + p2.abs()), "{} vs {p2}", d2 * (u * u - 1.0));
    }

    #[test]
    fn multi_matches_single() {
        for (mu, k) in [(0, 0.5), (3, 40.0), (7, 200.0)] {
            let xs = [0.3, 1.0, 2.5];
            let many = kernel_k_multi(mu, k, &xs).unwrap();
            for (x, m) in xs.iter().zip(&many) {
                let one = kernel_k(mu, k, *x).unwrap();
                assert!((one.value - m.value).abs() <= one.abs_err + m.abs_err);
            }
        }
    }

    #[test]
    fn legendre_at_one() {
        assert_eq!(conical_p(p(0, 3.0, 0.0)).unwrap().value, 1.0);
        assert_eq!(conical_p_weighted(p(2, 3.0, 0.0)).unwrap().value, 0.0);
        assert_eq!(kernel_k(2, 3.0, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn small_x_limit_of_negative_order() {
        // P^{-mu}(cosh x) ~ (x/2)^mu / mu!
        for mu in 0..4u32 {
            let x = 1e-4;
            let v = conical_p_negative(p(mu, 2.0, x)).unwrap().value;
            let lead = (0.5 * x).powi(mu as i32) / ln_gamma_real(mu as f64 + 1.0).exp();
            assert!((v / lead - 1.0).abs() < 1e-6, "mu={mu}");
        }
    }

    #[test]
    fn large_k_leading_term() {
        let exact = conical_p(p(1, 40.0, 1.0)).unwrap();
        let asym = conical_p_via(p(1, 40.0, 1.0), Regime::LargeK).unwrap();
        let env = largek_envelope(1, 40.0, 1.0);
        let dev = (exact.value - asym.value).abs() / env;
        assert!(dev < 1.0 / 40.0, "dev {dev}");
        assert!(dev <= asym.abs_err / env);
    }

    #[test]
    fn stirling_guard_refuses_large_order() {
        assert!(matches!(
            conical_p_via(p(5, 16.0, 1.0), Regime::LargeK),
            Err(SpecfunError::RegimeGap { .. })
        ));
    }

    #[test]
    fn approximate_routes_stay_within_estimates() {
        for (mu, k, x) in [(0, 5.0, 0.05), (2, 20.0, 0.1), (1, 3.0, 0.3)] {
            let exact = kernel_k(mu, k, x).unwrap();
            let b = kernel_k_via(mu, k, x, Regime::BesselUniform).unwrap();
            assert!((exact.value - b.value).abs() <= b.abs_err + exact.abs_err, "bessel mu={mu} k={k} x={x}");
        }
        for (mu, k, x) in [(10, 2.0, 0.5), (20, 2.0, 1.0), (15, 1.0, 1.0)] {
            let exact = kernel_k(mu, k, x).unwrap();
            let l = kernel_k_via(mu, k, x, Regime::LargeMu).unwrap();
            assert!((exact.value - l.value).abs() <= l.abs_err + exact.abs_err, "largemu mu={mu} k={k} x={x}");
        }
    }
}
