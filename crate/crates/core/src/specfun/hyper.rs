use num_complex::Complex64;

use super::gamma::gamma_complex;
use super::{EvalResult, Regime, SpecfunError};
use crate::quad::tanh_sinh_unit;

/// Partial sum of a Gauss series together with its error budget.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesSum {
    pub value: Complex64,
    pub abs_err: f64,
}

const MAX_TERMS: usize = 200_000;

/// Unregularised Gauss series F(a, b; c; z) for real z in [0, 1).
///
/// Stops once the geometric tail bound falls below `tol * |sum|`. The
/// bound uses the larger of the current term ratio and `z`.
pub(crate) fn gauss_series(
    a: Complex64,
    b: Complex64,
    c: Complex64,
    z: f64,
    tol: f64,
    max_terms: usize,
) -> Result<SeriesSum, SpecfunError> {
    if !(0.0..1.0).contains(&z) {
        return Err(SpecfunError::Domain(format!("series needs z in [0, 1), got {z}")));
    }
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut abs_sum = 1.0;
    let mut rounding = 0.0;
    let mut prev_ratio = f64::INFINITY;
    for n in 0..max_terms.min(MAX_TERMS) {
        let nf = n as f64;
        let den = (c + nf) * (nf + 1.0);
        if den.norm() == 0.0 {
            return Err(SpecfunError::Domain("series denominator vanishes".into()));
        }
        let ratio = (a + nf) * (b + nf) / den * z;
        term *= ratio;
        sum += term;
        let t = term.norm();
        abs_sum += t;
        rounding += t * (nf + 2.0);
        if t == 0.0 {
            return Ok(SeriesSum {
                value: sum,
                abs_err: 2.0 * f64::EPSILON * rounding,
            });
        }
        let r = ratio.norm();
        // Later ratios stay below max(r, z) once they fall or sit below z.
        let settled = r <= prev_ratio || r <= z;
        prev_ratio = r;
        let rb = r.max(z);
        if settled && rb < 1.0 {
            let tail = t * rb / (1.0 - rb);
            if tail <= tol * sum.norm() || tail <= f64::MIN_POSITIVE {
                let abs_err = tail + 2.0 * f64::EPSILON * (rounding + abs_sum);
                return Ok(SeriesSum { value: sum, abs_err });
            }
        }
    }
    Err(SpecfunError::Convergence(format!(
        "Gauss series did not converge for a={a}, b={b}, c={c}, z={z}"
    )))
}

fn is_nonpositive_integer(c: Complex64) -> Option<u32> {
    if c.im == 0.0 && c.re <= 0.0 && c.re == c.re.round() {
        Some((-c.re) as u32)
    } else {
        None
    }
}

/// Regularised hypergeometric function F(a,b;c;z)/Gamma(c) by its power series.
pub fn olver_f_series(a: Complex64, b: Complex64, c: Complex64, z: f64) -> Result<EvalResult<Complex64>, SpecfunError> {
    if let Some(n) = is_nonpositive_integer(c) {
        // Limit form: (a)_{n+1} (b)_{n+1} z^{n+1} F(a+n+1, b+n+1; n+2; z) / Gamma(n+2)
        let mut coef = Complex64::new(1.0, 0.0);
        for j in 0..=n {
            let jf = j as f64;
            coef *= (a + jf) * (b + jf) * z;
        }
        let np1 = n as f64 + 1.0;
        let inner = olver_f_series(a + np1, b + np1, Complex64::new(np1 + 1.0, 0.0), z)?;
        return Ok(EvalResult::new(coef * inner.value, coef.norm() * inner.abs_err, Regime::Series));
    }
    let rg = gamma_complex(c)?;
    let s = gauss_series(a, b, c, z, 1e-16, MAX_TERMS)?;
    let value = s.value / rg.value;
    let rel_g = rg.abs_err / rg.value.norm();
    let abs_err = s.abs_err / rg.value.norm() + value.norm() * rel_g;
    Ok(EvalResult::new(value, abs_err, Regime::Series))
}

/// Regularised hypergeometric function via the Euler integral,
/// valid for Re c > Re b > 0.
pub fn olver_f_integral(a: Complex64, b: Complex64, c: Complex64, z: f64) -> Result<EvalResult<Complex64>, SpecfunError> {
    if !(c.re > b.re && b.re > 0.0) {
        return Err(SpecfunError::Domain(format!(
            "Euler integral needs Re c > Re b > 0 (b={b}, c={c})"
        )));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(SpecfunError::Domain(format!("integral route needs z in [0, 1), got {z}")));
    }
    let bm1 = b - 1.0;
    let cbm1 = c - b - 1.0;
    let integrand = |x: f64, xc: f64| -> Complex64 {
        let lx = x.ln();
        let lxc = xc.ln();
        let one_minus_zx = 1.0 - z * x;
        (bm1 * lx + cbm1 * lxc - a * one_minus_zx.ln()).exp()
    };
    let (integral, diff) = tanh_sinh_unit(integrand, 14, 1e-15);
    let abs_integrand = |x: f64, xc: f64| -> f64 { integrand(x, xc).norm() };
    let (mass, _) = tanh_sinh_unit(abs_integrand, 10, 1e-10);
    let gb = gamma_complex(b)?;
    let gcb = gamma_complex(c - b)?;
    let denom = gb.value * gcb.value;
    let value = integral / denom;
    let rel = gb.abs_err / gb.value.norm() + gcb.abs_err / gcb.value.norm();
    let abs_err = (diff + 16.0 * f64::EPSILON * mass) / denom.norm() + value.norm() * rel;
    Ok(EvalResult::new(value, abs_err, Regime::IntegralRep))
}

/// Olver's regularised hypergeometric function for z in [0, 1).
///
/// Uses the power series when it converges to the target accuracy and
/// falls back to the Euler integral otherwise.
pub fn olver_f(a: Complex64, b: Complex64, c: Complex64, z: f64) -> Result<EvalResult<Complex64>, SpecfunError> {
    let tol = 1e-10;
    let series = olver_f_series(a, b, c, z);
    if let Ok(s) = &series {
        if s.abs_err <= tol * s.value.norm().max(1e-300) {
            return Ok(*s);
        }
    }
    let integral = olver_f_integral(a, b, c, z);
    match (series, integral) {
        (_, Ok(i)) if i.abs_err <= tol * i.value.norm().max(1e-300) => Ok(i),
        (Ok(s), Ok(i)) => {
            let best = if s.abs_err <= i.abs_err { s } else { i };
            Err(SpecfunError::Convergence(format!(
                "best route reached only abs_err {:e} for |F| = {:e}",
                best.abs_err,
                best.value.norm()
            )))
        }
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}
