use std::f64::consts::PI;

use num_complex::Complex64;

use super::gamma::ln_gamma_real;
use super::{EvalResult, Regime, SpecfunError};

/// Coefficient a_k(nu) of the Hankel asymptotic expansion.
pub fn hankel_coefficient(k: u32, nu: f64) -> f64 {
    let four_nu2 = 4.0 * nu * nu;
    let mut num = 1.0;
    for j in 1..=k {
        let odd = (2 * j - 1) as f64;
        num *= (four_nu2 - odd * odd) / (j as f64 * 8.0);
    }
    num
}

/// Partial sum of the large-argument expansion of H^(1)_nu(z) with
/// `ell` terms. `abs_err` is the remainder bound for real positive z.
pub fn hankel1_asym(nu: f64, z: f64, ell: u32) -> Result<EvalResult<Complex64>, SpecfunError> {
    if ell == 0 {
        return Err(SpecfunError::InvalidParam("ell must be at least 1".into()));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(SpecfunError::InvalidParam(format!("order must be non-negative, got {nu}")));
    }
    if !(z >= 1.0 && z >= nu) || !z.is_finite() {
        return Err(SpecfunError::Domain(format!(
            "Hankel expansion needs z >= max(1, nu); got z={z}, nu={nu}"
        )));
    }
    let omega = z - 0.5 * nu * PI - 0.25 * PI;
    let pref = (2.0 / (PI * z)).sqrt();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut ik = Complex64::new(1.0, 0.0);
    let mut zk = 1.0;
    for k in 0..ell {
        sum += ik * hankel_coefficient(k, nu) / zk;
        ik *= Complex64::new(0.0, 1.0);
        zk *= z;
    }
    let phase = Complex64::from_polar(1.0, omega);
    let value = pref * phase * sum;
    let rem = 2.0 * hankel_coefficient(ell, nu).abs() / zk * ((nu * nu - 0.25).abs() / z).exp();
    let abs_err = pref * rem + 4.0 * f64::EPSILON * value.norm();
    Ok(EvalResult::new(value, abs_err, Regime::LargeK))
}

/// Bessel function J_n(x) of integer order for x >= 0.
///
/// Power series where it has no cancellation, otherwise the periodic
/// trapezoidal rule applied to the Bessel integral.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    assert!(x >= 0.0 && x.is_finite());
    let nf = n as f64;
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x * x <= 4.0 * (nf + 1.0) || x < 2.0 {
        let half = 0.5 * x;
        let lead = (nf * half.ln() - ln_gamma_real(nf + 1.0)).exp();
        let mut term = 1.0;
        let mut sum = 1.0;
        let q = -half * half;
        for j in 1..200 {
            let jf = j as f64;
            term *= q / (jf * (jf + nf));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return lead * sum;
    }
    let m = (x + nf + 48.0).ceil() as usize;
    let h = 2.0 * PI / m as f64;
    let s: f64 = (0..m)
        .map(|j| {
            let th = j as f64 * h;
            (nf * th - x * th.sin()).cos()
        })
        .sum();
    s / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hankel_coefficients() {
        for nu in [0.0, 0.3, 2.0, 7.5] {
            assert_eq!(hankel_coefficient(0, nu), 1.0);
        }
        assert_eq!(hankel_coefficient(1, 0.0), -1.0 / 8.0);
        assert!((hankel_coefficient(2, 0.0) - 9.0 / 128.0).abs() < 1e-16);
        // half-integer orders terminate
        assert_eq!(hankel_coefficient(1, 0.5), 0.0);
    }

    #[test]
    fn half_order_is_exact() {
        // H^(1)_{1/2}(z) = -i sqrt(2/(pi z)) e^{iz}
        let z = 3.7;
        let h = hankel1_asym(0.5, z, 1).unwrap();
        let exact = Complex64::new(0.0, -1.0) * (2.0 / (PI * z)).sqrt() * Complex64::from_polar(1.0, z);
        assert!((h.value - exact).norm() < 1e-15);
        assert!(h.abs_err < 1e-14);
    }

    #[test]
    fn domain_is_enforced() {
        assert!(hankel1_asym(5.0, 3.0, 2).is_err());
        assert!(hankel1_asym(0.0, 0.5, 2).is_err());
        assert!(hankel1_asym(0.0, 5.0, 0).is_err());
    }

    #[test]
    fn bessel_known_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 10.0) - 0.043_472_746_168_861_44).abs() < 1e-14);
        assert!((bessel_j(0, 50.0) - 0.055_812_327_669_251_86).abs() < 1e-14);
        assert!((bessel_j(5, 1.0) - 2.497_577_302_112_344e-4).abs() < 1e-18);
        // switch point between the two methods
        let x = 2.0 * (3.0_f64 + 1.0).sqrt();
        let a = bessel_j(3, x * (1.0 - 1e-12));
        let b = bessel_j(3, x * (1.0 + 1e-12));
        assert!((a - b).abs() < 1e-12);
    }
}
