//! The Mehler-Fock transform pair of order mu.
//!
//! `forward` maps a radial profile G(x) to F(k) = int G(x) K^mu(k, x) dx and
//! `inverse` maps F back through int F(k) K^mu(k, x) dk. Both sides are
//! sampled on composite Gauss-Legendre grids, so every profile and density
//! carries the quadrature weights of its nodes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::NodeSet;
use crate::specfun::{kernel_k_multi, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MfError {
    #[error("profile is not in the admissible class: {0}")]
    Class(String),
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
}

impl From<std::io::Error> for MfError {
    fn from(e: std::io::Error) -> Self {
        MfError::Io(e.to_string())
    }
}

impl From<csv::Error> for MfError {
    fn from(e: csv::Error) -> Self {
        MfError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MfError {
    fn from(e: serde_json::Error) -> Self {
        MfError::Io(e.to_string())
    }
}

/// Discretisation of both sides of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfPolicy {
    pub k_max: f64,
    pub tau_max: f64,
    /// Gauss-Legendre nodes per unit interval, on both axes.
    pub nodes_per_unit: usize,
    /// Largest tolerated truncation tail, relative to the size of the input.
    pub tail_tol: f64,
}

impl Default for MfPolicy {
    fn default() -> Self {
        Self { k_max: 60.0, tau_max: 12.0, nodes_per_unit: 64, tail_tol: 1e-8 }
    }
}

fn unit_panels(hi: f64, n: usize) -> NodeSet {
    let panels = hi.ceil().max(1.0) as usize;
    NodeSet::uniform(0.0, hi, panels, n)
}

impl MfPolicy {
    pub fn k_grid(&self) -> NodeSet {
        unit_panels(self.k_max, self.nodes_per_unit)
    }

    pub fn tau_grid(&self) -> NodeSet {
        unit_panels(self.tau_max, self.nodes_per_unit)
    }
}

/// A sampled function of tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub tau_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    /// Claimed exponential decay rate at infinity.
    pub decay_rate: Option<f64>,
}

impl RadialProfile {
    pub fn from_fn(grid: &NodeSet, decay_rate: Option<f64>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            tau_nodes: grid.nodes.clone(),
            weights: grid.weights.clone(),
            values: grid.nodes.iter().map(|&x| f(x)).collect(),
            decay_rate,
        }
    }

    pub fn zeros(grid: &NodeSet) -> Self {
        Self::from_fn(grid, None, |_| 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v.abs() * w).sum()
    }
}

/// A sampled function of the spectral parameter k for a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub k_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub mu: u32,
}

impl SpectralDensity {
    pub fn zeros(grid: &NodeSet, mu: u32) -> Self {
        Self { k_nodes: grid.nodes.clone(), weights: grid.weights.clone(), values: vec![0.0; grid.len()], mu }
    }
}

/// Values K^mu(k_i, x_j), stored row by row in k.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub mu: u32,
    pub k_nodes: Vec<f64>,
    pub tau_nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl KernelMatrix {
    pub fn build(mu: u32, k_nodes: &[f64], tau_nodes: &[f64]) -> Result<Self, MfError> {
        let rows: Result<Vec<Vec<f64>>, SpecfunError> = k_nodes
            .par_iter()
            .map(|&k| kernel_k_multi(mu, k, tau_nodes).map(|r| r.into_iter().map(|e| e.value).collect()))
            .collect();
        let values = rows?.concat();
        Ok(Self { mu, k_nodes: k_nodes.to_vec(), tau_nodes: tau_nodes.to_vec(), values })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.tau_nodes.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Number of leading k rows with k below `k_max`.
    pub fn rows_below(&self, k_max: f64) -> usize {
        self.k_nodes.partition_point(|&k| k <= k_max)
    }

    fn check_tau(&self, profile_nodes: &[f64]) -> Result<(), MfError> {
        if profile_nodes != self.tau_nodes.as_slice() {
            return Err(MfError::Quadrature("profile nodes differ from the kernel matrix nodes".into()));
        }
        Ok(())
    }

    /// H_mu on the first `rows` k nodes; `weights` are the k weights kept
    /// alongside.
    pub fn forward(&self, profile: &RadialProfile, k_weights: &[f64], rows: usize) -> Result<SpectralDensity, MfError> {
        self.check_tau(&profile.tau_nodes)?;
        let gw: Vec<f64> = profile.values.iter().zip(&profile.weights).map(|(g, w)| g * w).collect();
        let values = (0..rows).map(|i| dot(self.row(i), &gw)).collect();
        Ok(SpectralDensity {
            k_nodes: self.k_nodes[..rows].to_vec(),
            weights: k_weights[..rows].to_vec(),
            values,
            mu: self.mu,
        })
    }

    /// G_mu at the matrix tau nodes, using the first `density.values.len()` rows.
    pub fn inverse(&self, density: &SpectralDensity, tau_weights: &[f64]) -> Result<RadialProfile, MfError> {
        let rows = density.values.len();
        if rows > self.k_nodes.len() || density.k_nodes[..] != self.k_nodes[..rows] {
            return Err(MfError::Quadrature("density nodes differ from the kernel matrix nodes".into()));
        }
        let mut values = vec![0.0; self.tau_nodes.len()];
        for i in 0..rows {
            let c = density.values[i] * density.weights[i];
            if c == 0.0 {
                continue;
            }
            for (v, k) in values.iter_mut().zip(self.row(i)) {
                *v += c * k;
            }
        }
        Ok(RadialProfile {
            tau_nodes: self.tau_nodes.clone(),
            weights: tau_weights.to_vec(),
            values,
            decay_rate: None,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of [`class_a_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub pass: bool,
    pub integrable: bool,
    pub l1_norm: f64,
    /// Fitted slope of log|G| over the tail; -inf when the tail vanishes.
    pub tail_slope: f64,
    pub tail_samples: usize,
    pub decays: bool,
    /// Fitted exponent p in |G| ~ x^p near zero.
    pub zero_exponent: f64,
    pub bounded_near_zero: bool,
    pub diagnostics: Vec<String>,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Checks integrability, decay faster than e^{-x} and boundedness at zero
/// on the sampled range.
pub fn class_a_check(profile: &RadialProfile) -> ClassReport {
    let mut diagnostics = Vec::new();
    let n = profile.values.len();
    let finite = profile.values.iter().all(|v| v.is_finite());
    let l1 = profile.l1_norm();
    let integrable = finite && l1.is_finite();
    if !integrable {
        diagnostics.push("non-finite samples or L1 norm".to_string());
    }

    // Tail: last quarter of the nodes, reduced to block maxima so that
    // zeros of oscillating profiles do not spoil the log fit.
    let tail_start = n - n / 4;
    let tail_samples = n - tail_start;
    let (tail_slope, decays) = if tail_samples < 16 {
        diagnostics.push(format!("only {tail_samples} tail samples, at least 16 needed"));
        (f64::NAN, false)
    } else {
        let block = 4;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for chunk in (tail_start..n).collect::<Vec<_>>().chunks(block) {
            let (mut best, mut at) = (0.0f64, profile.tau_nodes[chunk[0]]);
            for &i in chunk {
                if profile.values[i].abs() > best {
                    best = profile.values[i].abs();
                    at = profile.tau_nodes[i];
                }
            }
            if best > 0.0 {
                xs.push(at);
                ys.push(best.ln());
            }
        }
        if xs.len() < 2 {
            (f64::NEG_INFINITY, true)
        } else {
            let s = least_squares_slope(&xs, &ys);
            if !(s < -1.0) {
                diagnostics.push(format!("tail decays like exp({s:.3} x), not faster than exp(-x)"));
            }
            (s, s < -1.0)
        }
    };

    // Near zero: fit log|G| against log x on the nodes below 5% of the range.
    let x_cut = 0.05 * profile.tau_nodes[n - 1];
    let (lx, ly): (Vec<f64>, Vec<f64>) = profile
        .tau_nodes
        .iter()
        .zip(&profile.values)
        .filter(|(x, v)| **x <= x_cut && v.abs() > 0.0)
        .map(|(x, v)| (x.ln(), v.abs().ln()))
        .unzip();
    let zero_exponent = if lx.len() >= 2 { least_squares_slope(&lx, &ly) } else { f64::INFINITY };
    let bounded_near_zero = zero_exponent > -0.05;
    if !bounded_near_zero {
        diagnostics.push(format!("grows like x^{zero_exponent:.3} at zero"));
    }
    ClassReport {
        pass: integrable && decays && bounded_near_zero,
        integrable,
        l1_norm: l1,
        tail_slope,
        tail_samples,
        decays,
        zero_exponent,
        bounded_near_zero,
        diagnostics,
    }
}

/// |K^mu| is bounded by one on the ranges used here; the tails below rely on it.
const KERNEL_BOUND: f64 = 1.0;

fn forward_tail(profile: &RadialProfile, report: &ClassReport) -> f64 {
    let n = profile.values.len();
    let last = profile.values[n - 1].abs().max(profile.values[n.saturating_sub(4)..].iter().fold(0.0, |m, v| m.max(v.abs())));
    if last == 0.0 {
        return 0.0;
    }
    let rate = profile.decay_rate.unwrap_or(-report.tail_slope);
    if !(rate > 0.0) {
        return f64::INFINITY;
    }
    KERNEL_BOUND * last / rate
}

/// H_mu(G, k) at the nodes of `k_grid`.
pub fn forward(profile: &RadialProfile, mu: u32, k_grid: &NodeSet, policy: &MfPolicy) -> Result<SpectralDensity, MfError> {
    let report = class_a_check(profile);
    if !report.pass {
        return Err(MfError::Class(report.diagnostics.join("; ")));
    }
    let tail = forward_tail(profile, &report);
    let scale = profile.sup_norm();
    if tail > policy.tail_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(MfError::Quadrature(format!("tau tail estimate {tail:e} exceeds tolerance")));
    }
    let m = KernelMatrix::build(mu, &k_grid.nodes, &profile.tau_nodes)?;
    m.forward(profile, &k_grid.weights, k_grid.len())
}

/// Estimate of the contribution of k beyond the last node, from a power
/// law fitted to the block maxima of |F| over the upper half of the nodes.
pub fn inverse_tail(density: &SpectralDensity) -> f64 {
    let n = density.values.len();
    if n < 16 {
        return f64::INFINITY;
    }
    let start = n / 2;
    let blocks = 8;
    let len = (n - start) / blocks;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in 0..blocks {
        let r = start + b * len..start + (b + 1) * len;
        let (mut best, mut at) = (0.0f64, density.k_nodes[r.start]);
        for i in r {
            if density.values[i].abs() > best {
                best = density.values[i].abs();
                at = density.k_nodes[i];
            }
        }
        if best > 0.0 {
            xs.push(at.ln());
            ys.push(best.ln());
        }
    }
    if xs.len() < 2 {
        return 0.0;
    }
    let p = least_squares_slope(&xs, &ys);
    let k_last = density.k_nodes[n - 1];
    let f_last = ys.last().map_or(0.0, |y| y.exp());
    if p < -1.0 {
        KERNEL_BOUND * f_last * k_last / (-p - 1.0)
    } else {
        f64::INFINITY
    }
}

/// G_mu(F, x) at the nodes of `tau_grid`.
pub fn inverse(density: &SpectralDensity, tau_grid: &NodeSet, policy: &MfPolicy) -> Result<RadialProfile, MfError> {
    if density.values.iter().all(|&v| v == 0.0) {
        return Ok(RadialProfile::zeros(tau_grid));
    }
    let tail = inverse_tail(density);
    let l1: f64 = density.values.iter().zip(&density.weights).map(|(v, w)| v.abs() * w).sum();
    if !(tail <= policy.tail_tol.max(1e-3) * l1) {
        return Err(MfError::Quadrature(format!("k tail estimate {tail:e} is not resolved")));
    }
    let m = KernelMatrix::build(density.mu, &density.k_nodes, &tau_grid.nodes)?;
    m.inverse(density, &tau_grid.weights)
}

/// Named profiles used by tests and the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryProfile {
    /// sinh(x) exp(-2 cosh x)
    SinhExpCosh,
    /// tanh(x)^{5/2} exp(-3x)
    TanhPower,
    /// exp(-2x) (1 - exp(-x))
    DoubleExp,
    /// Smooth bump supported on [0.3, 4].
    Bump,
    /// tanh(x)^4 exp(-(x - 1.5)^2)
    GaussShell,
    /// tanh(x)^{9/2} exp(-2x)
    TanhHighPower,
    /// sinh(x)^4 exp(-2 cosh x)
    SinhPowerExpCosh,
    /// exp(-2x) (1 - exp(-x))^5
    DoubleExpHigh,
}

impl LibraryProfile {
    pub const ALL: [LibraryProfile; 8] = [
        LibraryProfile::SinhExpCosh,
        LibraryProfile::TanhPower,
        LibraryProfile::DoubleExp,
        LibraryProfile::Bump,
        LibraryProfile::GaussShell,
        LibraryProfile::TanhHighPower,
        LibraryProfile::SinhPowerExpCosh,
        LibraryProfile::DoubleExpHigh,
    ];

    /// The roundtrip set. Its members vanish at zero at least as fast as
    /// the order-3 kernel, so truncating the k integral leaves no boundary
    /// layer there.
    pub const ROUNDTRIP_SET: [LibraryProfile; 5] = [
        LibraryProfile::Bump,
        LibraryProfile::GaussShell,
        LibraryProfile::TanhHighPower,
        LibraryProfile::SinhPowerExpCosh,
        LibraryProfile::DoubleExpHigh,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LibraryProfile::SinhExpCosh => "sinh_exp_cosh",
            LibraryProfile::TanhPower => "tanh_power",
            LibraryProfile::DoubleExp => "double_exp",
            LibraryProfile::Bump => "bump",
            LibraryProfile::GaussShell => "gauss_shell",
            LibraryProfile::TanhHighPower => "tanh_high_power",
            LibraryProfile::SinhPowerExpCosh => "sinh_power_exp_cosh",
            LibraryProfile::DoubleExpHigh => "double_exp_high",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LibraryProfile::SinhExpCosh => x.sinh() * (-2.0 * x.cosh()).exp(),
            LibraryProfile::TanhPower => x.tanh().powf(2.5) * (-3.0 * x).exp(),
            LibraryProfile::DoubleExp => (-2.0 * x).exp() * -(-x).exp_m1(),
            LibraryProfile::Bump => {
                crate::dispersive::Plateau { outer_lo: 0.3, inner_lo: 1.5, inner_hi: 1.5, outer_hi: 4.0 }.eval(x)
            }
            LibraryProfile::GaussShell => x.tanh().powi(4) * (-(x - 1.5) * (x - 1.5)).exp(),
            LibraryProfile::TanhHighPower => x.tanh().powf(4.5) * (-2.0 * x).exp(),
            LibraryProfile::SinhPowerExpCosh => x.sinh().powi(4) * (-2.0 * x.cosh()).exp(),
            LibraryProfile::DoubleExpHigh => (-2.0 * x).exp() * (-(-x).exp_m1()).powi(5),
        }
    }

    pub fn decay_rate(&self) -> f64 {
        match self {
            LibraryProfile::TanhPower => 3.0,
            _ => 2.0,
        }
    }

    pub fn sample(&self, grid: &NodeSet) -> RadialProfile {
        RadialProfile::from_fn(grid, Some(self.decay_rate()), |x| self.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    kind: String,
    mu: Option<u32>,
    nodes: usize,
    decay_rate: Option<f64>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_columns(path: &Path, header: [&str; 3], cols: [&[f64]; 3]) -> Result<(), MfError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..cols[0].len() {
        w.write_record([cols[0][i], cols[1][i], cols[2][i]].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn read_columns(path: &Path) -> Result<[Vec<f64>; 3], MfError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for rec in r.records() {
        let rec = rec?;
        for (c, col) in out.iter_mut().enumerate() {
            let field = rec.get(c).ok_or_else(|| MfError::Io(format!("{}: short row", path.display())))?;
            col.push(field.trim().parse().map_err(|e| MfError::Io(format!("{}: {e}", path.display())))?);
        }
    }
    Ok(out)
}

fn write_sidecar(path: &Path, s: &Sidecar) -> Result<(), MfError> {
    fs::write(sidecar_path(path), serde_json::to_string_pretty(s)? + "\n")?;
    Ok(())
}

fn read_sidecar(path: &Path) -> Result<Sidecar, MfError> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?)
}

/// Writes `tau,weight,value` rows plus a JSON sidecar next to the CSV.
pub fn write_profile(path: &Path, p: &RadialProfile) -> Result<(), MfError> {
    write_columns(path, ["tau", "weight", "value"], [&p.tau_nodes, &p.weights, &p.values])?;
    write_sidecar(path, &Sidecar { kind: "profile".into(), mu: None, nodes: p.values.len(), decay_rate: p.decay_rate })
}

pub fn read_profile(path: &Path) -> Result<RadialProfile, MfError> {
    let meta = read_sidecar(path)?;
    let [tau_nodes, weights, values] = read_columns(path)?;
    if meta.kind != "profile" || meta.nodes != values.len() {
        return Err(MfError::Io(format!("{}: sidecar does not describe this profile", path.display())));
    }
    Ok(RadialProfile { tau_nodes, weights, values, decay_rate: meta.decay_rate })
}

pub fn write_density(path: &Path, d: &SpectralDensity) -> Result<(), MfError> {
    write_columns(path, ["k", "weight", "value"], [&d.k_nodes, &d.weights, &d.values])?;
    write_sidecar(path, &Sidecar { kind: "density".into(), mu: Some(d.mu), nodes: d.values.len(), decay_rate: None })
}

pub fn read_density(path: &Path) -> Result<SpectralDensity, MfError> {
    let meta = read_sidecar(path)?;
    let [k_nodes, weights, values] = read_columns(path)?;
    match meta.mu {
        Some(mu) if meta.kind == "density" && meta.nodes == values.len() => {
            Ok(SpectralDensity { k_nodes, weights, values, mu })
        }
        _ => Err(MfError::Io(format!("{}: sidecar does not describe this density", path.display()))),
    }
}
