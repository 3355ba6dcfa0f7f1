use std::f64::consts::PI;

use num_complex::Complex64;

use super::{EvalResult, Regime, SpecfunError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// B_{2j} / (2j (2j - 1)) for j = 1..=10
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43867.0 / 244_188.0,
    -174_611.0 / 125_400.0,
];

const STIRLING_MIN_MODULUS: f64 = 16.0;

fn stirling(z: Complex64) -> Complex64 {
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut corr = Complex64::new(0.0, 0.0);
    let mut p = inv;
    for c in STIRLING {
        corr += p * c;
        p *= inv2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + corr
}

/// Distance from `z` to the nearest nonpositive integer, if that is the
/// nearest integer at all.
fn pole_distance(z: Complex64) -> Option<f64> {
    let n = z.re.round();
    if n <= 0.0 {
        Some(((z.re - n).powi(2) + z.im * z.im).sqrt())
    } else {
        None
    }
}

/// ln sin(pi z) on some branch, without overflow for large |Im z|.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let n = z.re.round();
    let d = Complex64::new(z.re - n, z.im);
    let parity = if (n as i64).rem_euclid(2) == 1 { Complex64::new(0.0, PI) } else { Complex64::new(0.0, 0.0) };
    let i = Complex64::new(0.0, 1.0);
    let ln_2i = Complex64::new(2.0, 0.0).ln() + Complex64::new(0.0, 0.5 * PI);
    let core = if d.im.abs() < 20.0 {
        (d * PI).sin().ln()
    } else if d.im > 0.0 {
        // sin(pi d) = -e^{-i pi d} (1 - e^{2 i pi d}) / (2i)
        -i * PI * d + (1.0 - (i * 2.0 * PI * d).exp()).ln() - ln_2i + i * PI
    } else {
        // sin(pi d) = e^{i pi d} (1 - e^{-2 i pi d}) / (2i)
        i * PI * d + (1.0 - (-i * 2.0 * PI * d).exp()).ln() - ln_2i
    };
    core + parity
}

/// Principal-ish branch of ln Gamma(z): the real part is ln|Gamma(z)|, the
/// imaginary part is a continuous argument in the right half plane.
///
/// Poles are not checked here; callers that need that use [`gamma_complex`].
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.0 {
        // Reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        return Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma(Complex64::new(1.0, 0.0) - z);
    }
    if z.norm() >= STIRLING_MIN_MODULUS {
        return stirling(z);
    }
    let mut shifted = z;
    let mut log_prod = Complex64::new(0.0, 0.0);
    while shifted.norm() < STIRLING_MIN_MODULUS {
        log_prod += shifted.ln();
        shifted += 1.0;
    }
    stirling(shifted) - log_prod
}

/// ln Gamma for positive real arguments.
pub fn ln_gamma_real(x: f64) -> f64 {
    ln_gamma(Complex64::new(x, 0.0)).re
}

/// Complex Gamma function with a relative error estimate.
pub fn gamma_complex(z: Complex64) -> Result<EvalResult<Complex64>, SpecfunError> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(SpecfunError::Domain(format!("gamma argument {z} is not finite")));
    }
    if let Some(d) = pole_distance(z) {
        if d < 1e-12 {
            return Err(SpecfunError::Pole { re: z.re, im: z.im });
        }
    }
    let lg = ln_gamma(z);
    let value = lg.exp();
    let log_mag = if z.re < 0.0 {
        ln_gamma(Complex64::new(1.0, 0.0) - z).norm()
    } else {
        lg.norm()
    };
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(SpecfunError::Domain(format!("gamma({z}) overflows")));
    }
    // exp() turns the absolute error of the logarithm into a relative one.
    let rel = 8.0 * f64::EPSILON * (1.0 + log_mag + z.norm());
    Ok(EvalResult::new(value, rel * value.norm(), Regime::Series))
}

/// |Gamma(1/2 + sign*n + i y)|^2 in closed form.
pub fn gamma_half_abs_sq(n: u32, y: f64, sign: i32) -> Result<f64, SpecfunError> {
    let base = PI / (PI * y).cosh();
    let mut prod = 1.0;
    for l in 1..=n {
        let lf = l as f64 - 0.5;
        prod *= lf * lf + y * y;
    }
    match sign {
        1 => Ok(base * prod),
        -1 => {
            if prod == 0.0 {
                Err(SpecfunError::Domain("product vanishes for sign = -1".into()))
            } else {
                Ok(base / prod)
            }
        }
        _ => Err(SpecfunError::InvalidParam(format!("sign must be +1 or -1, got {sign}"))),
    }
}

/// ln of prod_{l=1}^{mu} ((l - 1/2)^2 + k^2).
pub fn ln_half_product(mu: u32, k: f64) -> f64 {
    (1..=mu)
        .map(|l| {
            let lf = l as f64 - 0.5;
            (lf * lf + k * k).ln()
        })
        .sum()
}

/// Normalisation constant c_{k,mu} of the Mehler-Fock kernel.
pub fn c_norm(k: f64, mu: u32) -> f64 {
    assert!(k > 0.0, "c_norm needs k > 0");
    let ln_c2 = k.ln() + (PI * k).tanh().ln() - ln_half_product(mu, k);
    (0.5 * ln_c2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn small_values() {
        assert!((gamma_complex(c(1.0, 0.0)).unwrap().value - 1.0).norm() < 1e-15);
        let half = gamma_complex(c(0.5, 0.0)).unwrap().value;
        assert!((half.re - PI.sqrt()).abs() < 1e-13);
        let g5 = gamma_complex(c(5.0, 0.0)).unwrap().value;
        assert!((g5.re - 24.0).abs() < 1e-13);
        let gneg = gamma_complex(c(-0.5, 0.0)).unwrap().value;
        assert!((gneg.re + 2.0 * PI.sqrt()).abs() < 1e-13);
        let g = gamma_complex(c(0.0, 1.0)).unwrap().value;
        assert!((g.norm_sqr() / (PI / PI.sinh()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn factorials_up_to_thirty() {
        let mut f = 1.0_f64;
        for n in 1..30 {
            let g = gamma_complex(c(n as f64 + 1.0, 0.0)).unwrap();
            f *= n as f64;
            assert!((g.value.re / f - 1.0).abs() < 1e-13, "n={n}");
            assert!(g.abs_err <= 1e-12 * f);
        }
    }

    #[test]
    fn large_imaginary_parts_stay_finite() {
        // |Gamma(iy)|^2 = pi / (y sinh(pi y))
        for y in [30.0, 300.0, 3000.0] {
            let lg = ln_gamma(c(0.0, y));
            let expected = 0.5 * (PI.ln() - y.ln() - (PI * y - 2.0_f64.ln()));
            assert!((lg.re - expected).abs() < 1e-12 * y, "y={y}");
            let lg2 = ln_gamma(c(-2.5, y));
            assert!(lg2.re.is_finite() && lg2.im.is_finite());
        }
        // argument continuity across the reflection threshold
        let a = ln_gamma(c(-1e-9, 50.0));
        let b = ln_gamma(c(1e-9, 50.0));
        let d = (a.im - b.im).rem_euclid(2.0 * PI);
        assert!(d < 1e-6 || 2.0 * PI - d < 1e-6);
    }

    #[test]
    fn poles_are_reported() {
        for n in [0.0, -1.0, -7.0] {
            assert!(matches!(gamma_complex(c(n, 0.0)), Err(SpecfunError::Pole { .. })));
        }
        assert!(gamma_complex(c(-3.0 + 1e-9, 0.0)).is_ok());
    }

    #[test]
    fn half_abs_sq_closed_forms() {
        assert!((gamma_half_abs_sq(0, 0.0, 1).unwrap() - PI).abs() < 1e-15);
        assert!((gamma_half_abs_sq(1, 0.0, 1).unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((gamma_half_abs_sq(1, 1.0, 1).unwrap() - PI / PI.cosh() * 1.25).abs() < 1e-15);
        assert!(gamma_half_abs_sq(2, 0.0, 0).is_err());
    }

    #[test]
    fn norm_constants() {
        assert!((c_norm(1.0, 0) - PI.tanh().sqrt()).abs() < 1e-14);
        assert!((c_norm(1.0, 1) - (PI.tanh() / 1.25).sqrt()).abs() < 1e-14);
        let k = 1e-6;
        assert!((c_norm(k, 0) / (k * PI.sqrt()) - 1.0).abs() < 1e-9);
    }
}
