//! Quadrature rules shared by the transforms and the oracles.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build_rule(n: usize) -> GaussRule {
    assert!(n >= 1, "Gauss rule needs at least one node");
    if n == 1 {
        return GaussRule { nodes: vec![0.0], weights: vec![2.0] };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let theta = std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// Cached Gauss-Legendre rule with `n` nodes.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build_rule(n))).clone()
}

/// A list of nodes with matching weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeSet {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal panels of `n` nodes each.
    pub fn uniform(a: f64, b: f64, panels: usize, n: usize) -> Self {
        let breaks: Vec<f64> = (0..=panels)
            .map(|i| a + (b - a) * i as f64 / panels as f64)
            .collect();
        Self::from_breaks(&breaks, n)
    }

    /// Composite rule over consecutive breakpoints.
    pub fn from_breaks(breaks: &[f64], n: usize) -> Self {
        let rule = gauss_legendre(n);
        let mut out = NodeSet::default();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                out.nodes.push(mid + half * x);
                out.weights.push(half * wt);
            }
        }
        out
    }

    /// Composite rule whose panels never exceed `max_width` and which
    /// always break at the given interior points.
    pub fn with_max_width(a: f64, b: f64, interior: &[f64], max_width: f64, n: usize) -> Self {
        let mut fixed: Vec<f64> = vec![a];
        fixed.extend(interior.iter().copied().filter(|&x| x > a && x < b));
        fixed.push(b);
        fixed.sort_by(f64::total_cmp);
        let mut breaks = vec![a];
        for w in fixed.windows(2) {
            let len = w[1] - w[0];
            if len <= 0.0 {
                continue;
            }
            let pieces = (len / max_width).ceil().max(1.0) as usize;
            for i in 1..=pieces {
                breaks.push(w[0] + len * i as f64 / pieces as f64);
            }
        }
        Self::from_breaks(&breaks, n)
    }
}

/// Double-exponential (tanh-sinh) quadrature on (0, 1) for integrands
/// with algebraic endpoint singularities. The integrand receives both
/// `x` and `1 - x`, each computed without cancellation.
///
/// Returns the estimate together with the difference between the last
/// two levels.
pub fn tanh_sinh_unit<T>(mut f: impl FnMut(f64, f64) -> T, max_level: usize, tol: f64) -> (T, f64)
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default + Norm,
{
    use std::f64::consts::FRAC_PI_2;
    let t_max = 4.5;
    let mut h = 0.5;
    let mut eval = |t: f64| -> T {
        let s = FRAC_PI_2 * t.sinh();
        let c = s.cosh();
        // x = (1 + tanh s)/2 = e^s/(2 cosh s), 1 - x = e^-s/(2 cosh s)
        let x = 0.5 * (-s).exp() / c;
        let xc = 0.5 * s.exp() / c;
        let w = 0.5 * FRAC_PI_2 * t.cosh() / (c * c);
        if x <= 0.0 || xc <= 0.0 || !w.is_finite() || w == 0.0 {
            return T::default();
        }
        f(x, xc) * w
    };
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum = sum + eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut diff = f64::INFINITY;
    for _ in 0..max_level {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            sum = sum + eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * h;
        diff = (next + estimate * -1.0).norm();
        estimate = next;
        if diff <= tol * estimate.norm().max(1e-300) {
            break;
        }
    }
    (estimate, diff)
}

/// Magnitude used by the adaptive rules.
pub trait Norm {
    fn norm(&self) -> f64;
}

impl Norm for f64 {
    fn norm(&self) -> f64 {
        self.abs()
    }
}

impl Norm for num_complex::Complex64 {
    fn norm(&self) -> f64 {
        num_complex::Complex64::norm(*self)
    }
}
