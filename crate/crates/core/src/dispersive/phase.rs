use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DispersiveError;
use crate::quad::NodeSet;

/// Sign pair selecting one of the four phase combinations
/// k(tau + inner*tau') * outer - tN sqrt(k^2 + m^2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub outer: i8,
    pub inner: i8,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch { outer: 1, inner: 1 },
        Branch { outer: 1, inner: -1 },
        Branch { outer: -1, inner: 1 },
        Branch { outer: -1, inner: -1 },
    ];

    /// Signed distance outer * (tau + inner * tau').
    pub fn distance(&self, tau: f64, tau_p: f64) -> f64 {
        self.outer as f64 * (tau + self.inner as f64 * tau_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub k0: f64,
    pub branch: Branch,
    pub f_second: f64,
}

/// Stationary points in k of tN sqrt(k^2 + m^2) - d k over the branches
/// with 0 < d < tN; at such a point tNk/sqrt(k^2+m^2) = d.
pub fn stationary_points(m: f64, t: f64, n: f64, tau: f64, tau_p: f64) -> Result<Vec<PhasePoint>, DispersiveError> {
    if !(m > 0.0) {
        return Err(DispersiveError::Param(format!("m must be positive, got {m}")));
    }
    if !(t > 0.0 && n > 0.0) {
        return Err(DispersiveError::Param(format!("t and N must be positive, got t={t}, N={n}")));
    }
    let tn = t * n;
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let d = branch.distance(tau, tau_p);
        if d <= 0.0 || d >= tn {
            continue;
        }
        let k0 = m * d / (tn * tn - d * d).sqrt();
        let sigma = (k0 * k0 + m * m).sqrt();
        out.push(PhasePoint { k0, branch, f_second: tn * m * m / sigma.powi(3) });
    }
    if out.is_empty() {
        return Err(DispersiveError::NoStationaryPoint(format!(
            "m={m}, tN={tn}, tau={tau}, tau'={tau_p}"
        )));
    }
    Ok(out)
}

/// Compactly supported amplitude of an oscillatory integral.
pub trait Amplitude {
    fn eval(&self, x: f64) -> Complex64;
    fn support(&self) -> (f64, f64);
    /// L^1 norm of the function plus the total variation (jumps included).
    fn w11_norm(&self) -> f64;
    /// Points where the amplitude is not smooth.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Piecewise linear amplitude through samples, zero outside the sampled
/// range. A repeated abscissa encodes a jump.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAmplitude {
    pub xs: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SampledAmplitude {
    pub fn new(xs: Vec<f64>, values: Vec<Complex64>) -> Result<Self, DispersiveError> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(DispersiveError::Param("amplitude needs at least two matching samples".into()));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(DispersiveError::Param("amplitude abscissae must be sorted".into()));
        }
        Ok(Self { xs, values })
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self, DispersiveError> {
        let n = n.max(2);
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, values)
    }
}

impl Amplitude for SampledAmplitude {
    fn eval(&self, x: f64) -> Complex64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return Complex64::new(0.0, 0.0);
        }
        let i = self.xs.partition_point(|&v| v <= x);
        if i == 0 {
            return self.values[0];
        }
        if i == self.xs.len() {
            return *self.values.last().unwrap();
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let s = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
        self.values[i - 1] * (1.0 - s) + self.values[i] * s
    }

    fn support(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn w11_norm(&self) -> f64 {
        let mut l1 = 0.0;
        let mut tv = self.values[0].norm() + self.values.last().unwrap().norm();
        for i in 1..self.xs.len() {
            let dx = self.xs[i] - self.xs[i - 1];
            l1 += 0.5 * dx * (self.values[i].norm() + self.values[i - 1].norm());
            tv += (self.values[i] - self.values[i - 1]).norm();
        }
        l1 + tv
    }

    fn breaks(&self) -> Vec<f64> {
        self.xs.clone()
    }
}

/// Amplitude given by a closure on a compact interval.
pub struct FnAmplitude<F> {
    pub f: F,
    pub lo: f64,
    pub hi: f64,
    w11: f64,
}

impl<F: Fn(f64) -> Complex64> FnAmplitude<F> {
    /// The W^{1,1} norm is measured on `samples` equally spaced points.
    pub fn new(f: F, lo: f64, hi: f64, samples: usize) -> Self {
        let s = SampledAmplitude::from_fn(lo, hi, samples, &f).expect("sorted by construction");
        let w11 = s.w11_norm();
        Self { f, lo, hi, w11 }
    }
}

impl<F: Fn(f64) -> Complex64> Amplitude for FnAmplitude<F> {
    fn eval(&self, x: f64) -> Complex64 {
        if x < self.lo || x > self.hi {
            Complex64::new(0.0, 0.0)
        } else {
            (self.f)(x)
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn w11_norm(&self) -> f64 {
        self.w11
    }
}

pub trait Phase {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

/// f(x) = c + a (x - x0)^2 / 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPhase {
    pub a: f64,
    pub x0: f64,
    pub c: f64,
}

impl Phase for QuadraticPhase {
    fn value(&self, x: f64) -> f64 {
        self.c + 0.5 * self.a * (x - self.x0).powi(2)
    }
    fn d1(&self, x: f64) -> f64 {
        self.a * (x - self.x0)
    }
    fn d2(&self, _x: f64) -> f64 {
        self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpApprox {
    pub approx: Complex64,
    pub err_bound: f64,
}

/// Leading stationary phase term of the integral of rho(x) e^{i f(x)/h}
/// at the stationary point x0, with the error bound ||rho||_{W^{1,1}} h^{1/2}.
pub fn stationary_phase(rho: &dyn Amplitude, f: &dyn Phase, h: f64, x0: f64) -> Result<SpApprox, DispersiveError> {
    if !(h > 0.0 && h < 0.5) {
        return Err(DispersiveError::Param(format!("h must lie in (0, 1/2), got {h}")));
    }
    let f2 = f.d2(x0);
    if !f2.is_finite() || f2.abs() < 1e-12 {
        return Err(DispersiveError::Degenerate(f2));
    }
    let f1 = f.d1(x0);
    if f1.abs() > 1e-8 * (1.0 + f2.abs()) {
        return Err(DispersiveError::Param(format!("f'(x0) = {f1:e} is not zero")));
    }
    let arg = f.value(x0) / h + f2.signum() * PI / 4.0;
    let approx = rho.eval(x0) * Complex64::from_polar(1.0, arg) * (2.0 * PI * h / f2.abs()).sqrt();
    Ok(SpApprox { approx, err_bound: rho.w11_norm() * h.sqrt() })
}

/// Integral of rho(x) e^{i f(x)/h} over the support of rho by composite
/// Gauss-Legendre panels sized to the local phase rate.
pub fn oscillatory_integral(rho: &dyn Amplitude, f: &dyn Phase, h: f64) -> Complex64 {
    let (lo, hi) = rho.support();
    if hi <= lo {
        return Complex64::new(0.0, 0.0);
    }
    let probes = 512;
    let rate = (0..=probes)
        .map(|i| f.d1(lo + (hi - lo) * i as f64 / probes as f64).abs())
        .fold(0.0, f64::max)
        / h;
    let width = (8.0 / rate.max(1e-300)).min((hi - lo) / 16.0);
    let nodes = NodeSet::with_max_width(lo, hi, &rho.breaks(), width, 20);
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x, &w) in nodes.nodes.iter().zip(&nodes.weights) {
        sum += rho.eval(x) * Complex64::from_polar(w, f.value(x) / h);
    }
    sum
}
