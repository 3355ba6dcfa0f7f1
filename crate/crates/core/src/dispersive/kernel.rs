use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutoff::CutoffProfile;
use super::phase::{stationary_phase, Amplitude, Phase, SampledAmplitude};
use super::DispersiveError;
use crate::geometry::{prefactor_n, TorusGeometry};
use crate::quad::NodeSet;
use crate::specfun::kernel_k_multi;

/// A source point (phi1, phi2, tau) and a target point (phi1', phi2', tau').
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub phi1: f64,
    pub phi2: f64,
    pub tau: f64,
    pub phi1_p: f64,
    pub phi2_p: f64,
    pub tau_p: f64,
}

impl PointPair {
    pub fn dphi1(&self) -> f64 {
        self.phi1 - self.phi1_p
    }

    pub fn dphi2(&self) -> f64 {
        self.phi2 - self.phi2_p
    }
}

/// Resolution of the direct k quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPolicy {
    pub nodes_per_panel: usize,
    /// Largest phase change (radians) allowed across one panel.
    pub panel_phase: f64,
    pub max_nodes: usize,
}

impl Default for KernelPolicy {
    fn default() -> Self {
        Self { nodes_per_panel: 20, panel_phase: 16.0, max_nodes: 400_000 }
    }
}

impl KernelPolicy {
    /// Same policy with panels half as wide.
    pub fn refined(&self) -> Self {
        Self { panel_phase: 0.5 * self.panel_phase, ..*self }
    }
}

fn epsilon(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        2.0
    }
}

const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
const TWO_PI_HI: f64 = 6.283_185_307_179_586;
const TWO_PI_LO: f64 = 2.449_293_598_294_706_4e-16;
const INV_TWO_PI: f64 = 0.159_154_943_091_895_35;

/// cos(x) for |x| < 2^40, accurate to a few ulp of 1, written without
/// library calls so the time loop in the kernel vectorises.
#[inline(always)]
pub(crate) fn fast_cos(x: f64) -> f64 {
    let q = (x * INV_TWO_PI + ROUND_SHIFT) - ROUND_SHIFT;
    let r = (x - q * TWO_PI_HI) - q * TWO_PI_LO;
    let z = r * r;
    // Taylor coefficients (-1)^n / (2n)! for n = 14 down to 0.
    let mut p = 1.0 / 3.048_883_446_117_138_6e29;
    p = p * z - 1.0 / 4.032_914_611_266_056_5e26;
    p = p * z + 1.0 / 6.204_484_017_332_394e23;
    p = p * z - 1.0 / 1.124_000_727_777_607_7e21;
    p = p * z + 1.0 / 2.432_902_008_176_64e18;
    p = p * z - 1.0 / 6.402_373_705_728e15;
    p = p * z + 1.0 / 20_922_789_888_000.0;
    p = p * z - 1.0 / 87_178_291_200.0;
    p = p * z + 1.0 / 479_001_600.0;
    p = p * z - 1.0 / 3_628_800.0;
    p = p * z + 1.0 / 40_320.0;
    p = p * z - 1.0 / 720.0;
    p = p * z + 1.0 / 24.0;
    p = p * z - 0.5;
    p * z + 1.0
}

fn mu_count(k: f64) -> usize {
    let mut n = 0usize;
    while ((n * n) as f64) < k {
        n += 1;
    }
    n
}

/// Per-node factors of the filtered kernel that depend on the source point
/// and the first angle difference; `values[i * nt + j]` is node i, time j.
#[derive(Debug, Clone)]
pub struct TimeFactors {
    pub nt: usize,
    pub n_nodes: usize,
    pub values: Vec<f64>,
}

/// Values of e_{k,mu}(tau) on a k quadrature grid for a set of tau levels
/// and every order with mu^2 < k.
///
/// The grid covers (0, sigma_max] and resolves oscillations up to `rate`
/// radians per unit k, so one table serves every point pair whose cutoff
/// and phase fit inside those limits.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub levels: Vec<f64>,
    pub sigma_max: f64,
    pub rate: f64,
    pub k_nodes: Vec<f64>,
    pub k_weights: Vec<f64>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn build(levels: &[f64], sigma_max: f64, rate: f64, policy: &KernelPolicy) -> Result<Self, DispersiveError> {
        if levels.is_empty() || levels.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(DispersiveError::Param("tau levels must be positive".into()));
        }
        if !(sigma_max > 0.0 && rate > 0.0) {
            return Err(DispersiveError::Param(format!("bad grid limits sigma={sigma_max}, rate={rate}")));
        }
        let breaks: Vec<f64> = (1..).map(|mu: usize| (mu * mu) as f64).take_while(|&k| k < sigma_max).collect();
        let width = (policy.panel_phase / rate).min(sigma_max / 48.0);
        let grid = NodeSet::with_max_width(0.0, sigma_max, &breaks, width, policy.nodes_per_panel);
        if grid.len() > policy.max_nodes {
            return Err(DispersiveError::Resolution(format!(
                "{} k nodes exceed the limit {}",
                grid.len(),
                policy.max_nodes
            )));
        }
        let blocks: Vec<Vec<f64>> = grid
            .nodes
            .par_iter()
            .map(|&k| -> Result<Vec<f64>, DispersiveError> {
                let n_mu = mu_count(k);
                let mut block = vec![0.0; n_mu * levels.len()];
                for mu in 0..n_mu {
                    let vals = kernel_k_multi(mu as u32, k, levels)?;
                    for (l, v) in vals.iter().enumerate() {
                        block[l * n_mu + mu] = v.value;
                    }
                }
                Ok(block)
            })
            .collect::<Result<_, _>>()?;
        let mut offsets = Vec::with_capacity(grid.len() + 1);
        offsets.push(0);
        for &k in &grid.nodes {
            offsets.push(offsets.last().unwrap() + mu_count(k));
        }
        let total = *offsets.last().unwrap();
        let mut values = vec![0.0; total * levels.len()];
        for (i, block) in blocks.iter().enumerate() {
            let n_mu = offsets[i + 1] - offsets[i];
            for l in 0..levels.len() {
                let dst = l * total + offsets[i];
                values[dst..dst + n_mu].copy_from_slice(&block[l * n_mu..(l + 1) * n_mu]);
            }
        }
        Ok(Self {
            levels: levels.to_vec(),
            sigma_max,
            rate,
            k_nodes: grid.nodes,
            k_weights: grid.weights,
            offsets,
            values,
        })
    }

    fn row(&self, level: usize, i: usize) -> &[f64] {
        let total = *self.offsets.last().unwrap();
        let base = level * total;
        &self.values[base + self.offsets[i]..base + self.offsets[i + 1]]
    }

    /// Quadrature weight times the time and m dependent factor
    /// sum_m eps_m cos(m dphi1) phi(h N sigma) cos(N t sigma) at every k node
    /// below the cutoff, for a source point with conformal factor `n`.
    ///
    /// The result depends on the pair only through N and dphi1, so it can
    /// be shared by every target with the same source and dphi1.
    pub fn time_factors(&self, ts: &[f64], n: f64, dphi1: f64, cut: &CutoffProfile) -> Result<TimeFactors, DispersiveError> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(DispersiveError::Param(format!("N = {n} at the source point")));
        }
        let h1 = cut.h * n;
        let sigma_lo = 0.5 * cut.b / h1;
        let sigma_hi = 1.5 * cut.b / h1;
        let t_max = ts.iter().fold(0.0_f64, |a, &t| a.max(t.abs()));
        let rate = n * t_max + 2.0 * self.levels.iter().fold(0.0_f64, |a, &l| a.max(l));
        if sigma_hi > self.sigma_max * (1.0 + 1e-12) {
            return Err(DispersiveError::Resolution(format!(
                "cutoff reaches sigma={sigma_hi} beyond the table limit {}",
                self.sigma_max
            )));
        }
        if rate > self.rate * (1.0 + 1e-12) {
            return Err(DispersiveError::Resolution(format!(
                "phase rate {rate} exceeds the table rate {}",
                self.rate
            )));
        }
        let m_top = sigma_hi.ceil() as usize + 1;
        let cos_m: Vec<f64> = (0..=m_top).map(|m| epsilon(m) * (m as f64 * dphi1).cos()).collect();
        let freqs: Vec<f64> = ts.iter().map(|&t| n * t.abs()).collect();
        let nt = ts.len();
        let n_nodes = self.k_nodes.partition_point(|&k| k < sigma_hi);
        let mut values = vec![0.0; n_nodes * nt];
        for (i, acc) in values.chunks_exact_mut(nt).enumerate() {
            let k = self.k_nodes[i];
            let k2 = k * k;
            let m_start = if k >= sigma_lo { 0 } else { (sigma_lo * sigma_lo - k2).sqrt().floor() as usize };
            for (m, &cm) in cos_m.iter().enumerate().skip(m_start) {
                let sigma = (k2 + (m * m) as f64).sqrt();
                if sigma >= sigma_hi {
                    break;
                }
                let w = cm * cut.phi(h1 * sigma);
                if w == 0.0 {
                    continue;
                }
                for (v, &f) in acc.iter_mut().zip(&freqs) {
                    *v += w * fast_cos(f * sigma);
                }
            }
            let wk = self.k_weights[i];
            acc.iter_mut().for_each(|v| *v *= wk);
        }
        Ok(TimeFactors { nt, n_nodes, values })
    }

    /// Combine time factors with the order sum for target level `lb`,
    /// source level `la` and second angle difference `dphi2`.
    pub fn combine(&self, tf: &TimeFactors, la: usize, lb: usize, dphi2: f64) -> Result<Vec<f64>, DispersiveError> {
        if la >= self.levels.len() || lb >= self.levels.len() {
            return Err(DispersiveError::Param("table level out of range".into()));
        }
        let n_mu_max = mu_count(self.sigma_max);
        let cos_mu: Vec<f64> = (0..=n_mu_max).map(|mu| epsilon(mu) * (mu as f64 * dphi2).cos()).collect();
        let mut out = vec![0.0; tf.nt];
        for (i, b) in tf.values.chunks_exact(tf.nt).enumerate().take(tf.n_nodes) {
            let a: f64 = self.row(la, i).iter().zip(self.row(lb, i)).zip(&cos_mu).map(|((x, y), c)| c * x * y).sum();
            for (o, v) in out.iter_mut().zip(b) {
                *o += a * v;
            }
        }
        let norm = 1.0 / (4.0 * PI * PI);
        Ok(out.into_iter().map(|v| v * norm).collect())
    }

    /// Filtered kernel at the times `ts` for a pair whose tau and tau' are
    /// the table levels `levels.0` and `levels.1`.
    pub fn evaluate(
        &self,
        ts: &[f64],
        pair: &PointPair,
        levels: (usize, usize),
        cut: &CutoffProfile,
        geom: &TorusGeometry,
    ) -> Result<Vec<f64>, DispersiveError> {
        let n = prefactor_n(pair.tau, pair.phi1, geom);
        let tf = self.time_factors(ts, n, pair.dphi1(), cut)?;
        self.combine(&tf, levels.0, levels.1, pair.dphi2())
    }
}

fn check_pair(pair: &PointPair) -> Result<(), DispersiveError> {
    let ok = [pair.phi1, pair.phi2, pair.phi1_p, pair.phi2_p].iter().all(|v| v.is_finite())
        && pair.tau > 0.0
        && pair.tau_p > 0.0
        && pair.tau.is_finite()
        && pair.tau_p.is_finite();
    if ok {
        Ok(())
    } else {
        Err(DispersiveError::Param(format!("point pair must be finite and interior: {pair:?}")))
    }
}

/// The filtered kernel phi(hD_t) psi(D_phi2) G at several times, by direct
/// quadrature of the k integral with the exact kernel functions.
pub fn filtered_kernel_many(
    ts: &[f64],
    pair: &PointPair,
    cut: &CutoffProfile,
    geom: &TorusGeometry,
    policy: &KernelPolicy,
) -> Result<Vec<f64>, DispersiveError> {
    check_pair(pair)?;
    let n = prefactor_n(pair.tau, pair.phi1, geom);
    if !(n > 0.0 && n.is_finite()) {
        return Err(DispersiveError::Param(format!("N = {n} at the source point")));
    }
    let sigma_hi = 1.5 * cut.b / (cut.h * n);
    let t_max = ts.iter().fold(0.0_f64, |a, &t| a.max(t.abs()));
    let rate = n * t_max + 2.0 * pair.tau.max(pair.tau_p);
    let table = KernelTable::build(&[pair.tau, pair.tau_p], sigma_hi, rate, policy)?;
    table.evaluate(ts, pair, (0, 1), cut, geom)
}

pub fn filtered_kernel(
    t: f64,
    pair: &PointPair,
    cut: &CutoffProfile,
    geom: &TorusGeometry,
    policy: &KernelPolicy,
) -> Result<f64, DispersiveError> {
    Ok(filtered_kernel_many(&[t], pair, cut, geom, policy)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpKernelEstimate {
    pub value: f64,
    /// Sum over modes of the stationary phase and integration by parts bounds.
    pub err_bound: f64,
    pub stationary_modes: usize,
}

/// Leading oscillatory amplitude of e_{k,mu}(tau) = Re[A e^{ik tau}]:
/// the large-argument form for tau >= 1 and the Hankel expansion of the
/// Bessel approximation below.
fn leading_amplitude(mu: usize, k: f64, tau: f64) -> Complex64 {
    let beta = (2.0 * mu as f64 - 1.0) * PI / 4.0;
    let c = if tau >= 1.0 { 1.0 / tau.tanh() } else { 1.0 / tau };
    let corr = ((mu * mu) as f64 - 0.25) * c / (2.0 * k);
    Complex64::from_polar((2.0 / PI).sqrt(), beta) * Complex64::new(1.0, corr)
}

/// f(kappa) = d kappa + s nt sqrt(kappa^2 + mh^2) in the rescaled variable.
struct ModePhase {
    d: f64,
    nt: f64,
    s: f64,
    mh: f64,
}

impl Phase for ModePhase {
    fn value(&self, x: f64) -> f64 {
        self.d * x + self.s * self.nt * (x * x + self.mh * self.mh).sqrt()
    }
    fn d1(&self, x: f64) -> f64 {
        self.d + self.s * self.nt * x / (x * x + self.mh * self.mh).sqrt()
    }
    fn d2(&self, x: f64) -> f64 {
        self.s * self.nt * self.mh * self.mh / (x * x + self.mh * self.mh).powf(1.5)
    }
}

const SP_SAMPLES: usize = 160;

/// The filtered kernel at t > 0 assembled from the leading asymptotic
/// amplitudes of the kernel functions and one-dimensional stationary phase
/// in k for every (m, mu) mode with m > 0.
pub fn filtered_kernel_sp(
    t: f64,
    pair: &PointPair,
    cut: &CutoffProfile,
    geom: &TorusGeometry,
) -> Result<SpKernelEstimate, DispersiveError> {
    check_pair(pair)?;
    if !(t > 0.0) {
        return Err(DispersiveError::Param(format!("stationary phase needs t > 0, got {t}")));
    }
    let n = prefactor_n(pair.tau, pair.phi1, geom);
    let h1 = cut.h * n;
    if !(h1 > 0.0 && h1 < 0.5) {
        return Err(DispersiveError::Param(format!("h N = {h1} outside (0, 1/2)")));
    }
    let nt = n * t;
    let (lo_s, hi_s) = (0.5 * cut.b, 1.5 * cut.b);
    let norm = 1.0 / (4.0 * PI * PI);
    let mut value = 0.0;
    let mut err_bound = 0.0;
    let mut stationary_modes = 0;
    let m_top = (hi_s / h1).ceil() as usize;
    for m in 1..=m_top {
        let mh = h1 * m as f64;
        if mh >= hi_s {
            break;
        }
        let kappa_lo = (lo_s * lo_s - mh * mh).max(0.0).sqrt();
        let kappa_hi = (hi_s * hi_s - mh * mh).sqrt();
        let wm = epsilon(m) * (m as f64 * pair.dphi1()).cos();
        for mu in 0..mu_count(kappa_hi / h1) {
            // The expansions hold for k >= 1; below that the mode is dropped.
            let start = kappa_lo.max(h1 * (mu * mu) as f64).max(h1);
            if start >= kappa_hi {
                continue;
            }
            let wmu = epsilon(mu) * (mu as f64 * pair.dphi2()).cos();
            let weight = norm * wm * wmu;
            for inner in [1.0, -1.0] {
                let d_signed = pair.tau + inner * pair.tau_p;
                let d = d_signed.abs();
                let sample = |kappa: f64| -> Complex64 {
                    let k = kappa / h1;
                    let a = leading_amplitude(mu, k, pair.tau);
                    let b = leading_amplitude(mu, k, pair.tau_p);
                    let mut c = if inner > 0.0 { a * b } else { a * b.conj() };
                    if d_signed < 0.0 {
                        c = c.conj();
                    }
                    let sigma = (kappa * kappa + mh * mh).sqrt();
                    c * (0.25 * cut.phi(sigma) / h1)
                };
                let rho = SampledAmplitude::from_fn(start, kappa_hi, SP_SAMPLES, sample)?;
                let w11 = rho.w11_norm();
                let sup = rho.values.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
                let l1: f64 = rho
                    .xs
                    .windows(2)
                    .zip(rho.values.windows(2))
                    .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0].norm() + v[1].norm()))
                    .sum();
                // Branch with e^{+i nt sigma}: the phase derivative never vanishes.
                let non_stat = ModePhase { d, nt, s: 1.0, mh };
                let min_d1 = non_stat.d1(start).min(non_stat.d1(kappa_hi)).abs();
                err_bound += weight.abs() * ibp_bound(h1, w11, sup, l1, min_d1);
                let f = ModePhase { d, nt, s: -1.0, mh };
                if d > 0.0 && d < nt {
                    let k0 = mh * d / (nt * nt - d * d).sqrt();
                    let sp = stationary_phase(&rho, &f, h1, k0)?;
                    value += weight * sp.approx.re;
                    err_bound += weight.abs() * sp.err_bound;
                    if sp.approx.norm() > 0.0 {
                        stationary_modes += 1;
                    }
                } else {
                    let min_d1 = f.d1(start).abs().min(f.d1(kappa_hi).abs());
                    err_bound += weight.abs() * ibp_bound(h1, w11, sup, l1, min_d1);
                }
            }
        }
    }
    Ok(SpKernelEstimate { value, err_bound, stationary_modes })
}

/// One integration by parts against e^{i f / h} with |f'| >= min_d1 and f'
/// monotone, capped by the trivial L^1 bound.
fn ibp_bound(h: f64, w11: f64, sup: f64, l1: f64, min_d1: f64) -> f64 {
    if min_d1 > 0.0 {
        (h * (w11 + 2.0 * sup) / min_d1).min(l1)
    } else {
        l1
    }
}
