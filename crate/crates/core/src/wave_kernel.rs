//! Mode-by-mode solution operator for the modified wave equation.
//!
//! The data are split into angular Fourier modes, each radial coefficient is
//! sent through the order-mu Mehler-Fock transform, multiplied by
//! cos(N sigma t) with sigma = sqrt(k^2 + m^2), and transformed back.
//! With the angular measure normalised, a single mode reads
//!
//! u = (1 / 4 pi^2) e^{i(m phi1 + mu phi2)} int cos(N sigma t) K(k, tau) F(k) dk,
//!
//! and the real field is assembled from the cosine-paired sums over m, mu >= 0.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersive::kernel::fast_cos;
use crate::dispersive::Plateau;
use crate::geometry::{
    apply_poschl_teller, prefactor_n, stencil_tau_range, wrap_pi, FieldGrid, GeometryError, GridSpec, TorusGeometry,
};
use crate::mehler_fock::RadialProfile;
use crate::quad::NodeSet;
use crate::specfun::{kernel_k_multi, SpecfunError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveError {
    #[error("initial data violate the support condition: {0}")]
    Support(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m: u32,
    pub mu: u32,
}

/// Which orders mu enter the k integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MuRule {
    /// Order mu is kept at k only when mu^2 < k.
    KTruncation,
    /// Orders 0..=mu_max at every k.
    Fixed { mu_max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub m_max: u32,
    pub mu_rule: MuRule,
    pub k_max: f64,
    /// Gauss-Legendre nodes per unit of k at t = 0; scaled up with t.
    pub k_nodes_per_unit: usize,
    /// Gauss-Legendre nodes per unit of tau' for the radial coefficients.
    pub tau_nodes_per_unit: usize,
    /// Trapezoidal nodes per angle for the Fourier coefficients.
    pub n_angle: usize,
    pub max_k_nodes: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            m_max: 32,
            mu_rule: MuRule::Fixed { mu_max: 32 },
            k_max: 60.0,
            k_nodes_per_unit: 16,
            tau_nodes_per_unit: 64,
            n_angle: 128,
            max_k_nodes: 200_000,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<(), WaveError> {
        if self.m_max == 0 || !(self.k_max > 0.0) || self.k_nodes_per_unit == 0 || self.tau_nodes_per_unit == 0 {
            return Err(WaveError::Param("truncation parameters must be positive".into()));
        }
        if self.n_angle < 2 * (self.m_max.max(self.mu_cap()) as usize) + 2 {
            return Err(WaveError::Param(format!(
                "{} angular nodes cannot resolve the retained modes",
                self.n_angle
            )));
        }
        Ok(())
    }

    /// Largest order that can enter.
    pub fn mu_cap(&self) -> u32 {
        match self.mu_rule {
            MuRule::KTruncation => crate::dispersive::CutoffProfile::mu_max(self.k_max),
            MuRule::Fixed { mu_max } => mu_max,
        }
    }

    pub fn mu_active(&self, mu: u32, k: f64) -> bool {
        match self.mu_rule {
            MuRule::KTruncation => (mu as f64) * (mu as f64) < k,
            MuRule::Fixed { mu_max } => mu <= mu_max,
        }
    }

    /// k nodes whose density grows like 1 + n_max t + tau_max, so that
    /// the phase of cos(N sigma t) K(k, tau) K(k, tau') stays resolved.
    pub fn k_grid(&self, n_max_t: f64, tau_max: f64) -> Result<NodeSet, WaveError> {
        let scale = (1.0 + n_max_t.abs() + tau_max) / (1.0 + tau_max);
        let per_unit = (self.k_nodes_per_unit as f64 * scale).ceil() as usize;
        let panels = self.k_max.ceil().max(1.0) as usize;
        if per_unit.saturating_mul(panels) > self.max_k_nodes {
            return Err(WaveError::Resolution(format!(
                "{} k nodes needed for N t = {n_max_t}, the limit is {}",
                per_unit * panels,
                self.max_k_nodes
            )));
        }
        Ok(NodeSet::uniform(0.0, self.k_max, panels, per_unit))
    }
}

type DataFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DataSource {
    Closure(DataFn),
    /// Sampled data, interpolated linearly (periodically in the angles).
    Grid(FieldGrid),
}

impl std::fmt::Debug for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Closure(_) => f.write_str("Closure"),
            DataSource::Grid(g) => write!(f, "Grid{:?}", g.shape()),
        }
    }
}

/// Initial displacement q, vanishing for tau' < eps0 and tau' > support_tau_max.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub source: DataSource,
    pub eps0: f64,
    pub support_tau_max: f64,
}

/// Half-width of the angular bumps in the reference datum.
pub const REFERENCE_ANGLE_HALF_WIDTH: f64 = 2.0;
pub const REFERENCE_EPS0: f64 = 0.3;

fn centred_bump(x: f64, half_width: f64) -> f64 {
    Plateau { outer_lo: -half_width, inner_lo: 0.0, inner_hi: 0.0, outer_hi: half_width }.eval(x)
}

impl InitialData {
    pub fn from_fn(
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        eps0: f64,
        support_tau_max: f64,
    ) -> Result<Self, WaveError> {
        if !(eps0 > 0.0 && support_tau_max > eps0) {
            return Err(WaveError::Param(format!("need 0 < eps0 < support_tau_max, got {eps0}, {support_tau_max}")));
        }
        Ok(Self { source: DataSource::Closure(Arc::new(f)), eps0, support_tau_max })
    }

    pub fn from_grid(grid: FieldGrid, eps0: f64, support_tau_max: f64) -> Result<Self, WaveError> {
        if !(eps0 > 0.0 && support_tau_max > eps0) {
            return Err(WaveError::Param(format!("need 0 < eps0 < support_tau_max, got {eps0}, {support_tau_max}")));
        }
        Ok(Self { source: DataSource::Grid(grid), eps0, support_tau_max })
    }

    /// The fixed tensor bump: a bump on (0.3, 0.9 tau1) in tau' times
    /// bumps of half-width 2 centred at phi1 = pi and phi2 = pi, with
    /// maximum one.
    pub fn reference(geom: &TorusGeometry) -> Self {
        let lo = REFERENCE_EPS0;
        let hi = 0.9 * geom.tau1;
        let mid = 0.5 * (lo + hi);
        let radial = Plateau { outer_lo: lo, inner_lo: mid, inner_hi: mid, outer_hi: hi };
        let f = move |p1: f64, p2: f64, t: f64| {
            radial.eval(t)
                * centred_bump(wrap_pi(p1 - PI), REFERENCE_ANGLE_HALF_WIDTH)
                * centred_bump(wrap_pi(p2 - PI), REFERENCE_ANGLE_HALF_WIDTH)
        };
        Self { source: DataSource::Closure(Arc::new(f)), eps0: lo, support_tau_max: hi }
    }

    pub fn zero(geom: &TorusGeometry) -> Self {
        Self { source: DataSource::Closure(Arc::new(|_, _, _| 0.0)), eps0: REFERENCE_EPS0, support_tau_max: 0.9 * geom.tau1 }
    }

    /// alpha a + beta b, supported on the union of the supports.
    pub fn combine(alpha: f64, a: &InitialData, beta: f64, b: &InitialData) -> Self {
        let (fa, fb) = (a.clone(), b.clone());
        let f = move |p1, p2, t| alpha * fa.eval(p1, p2, t) + beta * fb.eval(p1, p2, t);
        Self {
            source: DataSource::Closure(Arc::new(f)),
            eps0: a.eps0.min(b.eps0),
            support_tau_max: a.support_tau_max.max(b.support_tau_max),
        }
    }

    pub fn eval(&self, phi1: f64, phi2: f64, tau: f64) -> f64 {
        match &self.source {
            DataSource::Closure(f) => f(phi1, phi2, tau),
            DataSource::Grid(g) => interpolate(g, phi1, phi2, tau),
        }
    }

    /// Samples q below eps0 and above support_tau_max.
    pub fn check_support(&self, geom: &TorusGeometry) -> Result<(), WaveError> {
        let n = 24;
        let outside = (0..n)
            .map(|i| self.eps0 * i as f64 / n as f64)
            .chain((1..=n).map(|i| self.support_tau_max + (geom.tau1 - self.support_tau_max) * i as f64 / n as f64));
        for t in outside {
            for i in 0..n {
                for j in 0..n {
                    let p1 = -PI + 2.0 * PI * (i as f64 + 0.5) / n as f64;
                    let p2 = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    let v = self.eval(p1, p2, t);
                    if v.abs() > 1e-14 {
                        return Err(WaveError::Support(format!("q({p1:.3}, {p2:.3}, {t:.3}) = {v:e}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn interpolate(g: &FieldGrid, phi1: f64, phi2: f64, tau: f64) -> f64 {
    let (n1, n2, nt) = g.shape();
    let t0 = g.tau[0];
    let ht = g.tau[1] - g.tau[0];
    let s = (tau - t0) / ht;
    if s < 0.0 || s > (nt - 1) as f64 {
        return 0.0;
    }
    let l = (s.floor() as usize).min(nt - 2);
    let ft = s - l as f64;
    let locate = |x: f64, nodes: &[f64], n: usize| {
        let h = nodes[1] - nodes[0];
        let s = (x - nodes[0]) / h;
        let s = s.rem_euclid(n as f64);
        let i = (s.floor() as usize) % n;
        (i, (i + 1) % n, s - s.floor())
    };
    let (i0, i1, f1) = locate(phi1, &g.phi1, n1);
    let (j0, j1, f2) = locate(phi2, &g.phi2, n2);
    let mut v = 0.0;
    for (i, wi) in [(i0, 1.0 - f1), (i1, f1)] {
        for (j, wj) in [(j0, 1.0 - f2), (j1, f2)] {
            for (ll, wl) in [(l, 1.0 - ft), (l + 1, ft)] {
                v += wi * wj * wl * g.get(i, j, ll);
            }
        }
    }
    v
}

/// Radial coefficients of one mode: f_{m,mu} and f_{m,-mu} on the tau' nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub index: ModeIndex,
    pub tau_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
    /// max |f| (m^2 + mu^2), which stays bounded for smooth data.
    pub weighted_sup: f64,
}

impl ModeCoefficients {
    pub fn sup(&self) -> f64 {
        self.plus.iter().chain(&self.minus).fold(0.0, |m, z| m.max(z.norm()))
    }

    fn profile(&self, values: Vec<f64>) -> RadialProfile {
        RadialProfile { tau_nodes: self.tau_nodes.clone(), weights: self.weights.clone(), values, decay_rate: None }
    }

    /// Real part of f_{m,mu} as a radial profile.
    pub fn plus_re(&self) -> RadialProfile {
        self.profile(self.plus.iter().map(|z| z.re).collect())
    }

    pub fn plus_im(&self) -> RadialProfile {
        self.profile(self.plus.iter().map(|z| z.im).collect())
    }
}

/// Quadrature nodes in tau' covering the support of the data.
pub fn coefficient_nodes(data: &InitialData, policy: &TruncationPolicy) -> NodeSet {
    let len = data.support_tau_max - data.eps0;
    let panels = len.ceil().max(2.0) as usize;
    let per_panel = ((policy.tau_nodes_per_unit as f64 * len / panels as f64).ceil() as usize).max(8);
    NodeSet::uniform(data.eps0, data.support_tau_max, panels, per_panel)
}

/// Fourier coefficients f_{m, mu}(tau') for m in [-m_max, m_max] and
/// mu in [0, mu_max], by the trapezoidal rule; indexed [j][m + m_max][mu].
fn fourier_table(data: &InitialData, nodes: &[f64], m_max: usize, mu_max: usize, n: usize) -> Vec<Vec<Vec<Complex64>>> {
    let h = 2.0 * PI / n as f64;
    let phi1: Vec<f64> = (0..n).map(|i| -PI + h * i as f64).collect();
    let phi2: Vec<f64> = (0..n).map(|i| h * i as f64).collect();
    let tw2: Vec<Vec<Complex64>> =
        (0..=mu_max).map(|mu| phi2.iter().map(|&p| Complex64::from_polar(h, -(mu as f64) * p)).collect()).collect();
    let tw1: Vec<Vec<Complex64>> = (0..=2 * m_max)
        .map(|mi| {
            let m = mi as f64 - m_max as f64;
            phi1.iter().map(|&p| Complex64::from_polar(h, -m * p)).collect()
        })
        .collect();
    nodes
        .par_iter()
        .map(|&t| {
            let mut s = vec![vec![Complex64::new(0.0, 0.0); mu_max + 1]; n];
            let mut row = vec![0.0; n];
            for (a, &p1) in phi1.iter().enumerate() {
                for (b, &p2) in phi2.iter().enumerate() {
                    row[b] = data.eval(p1, p2, t);
                }
                if row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for mu in 0..=mu_max {
                    s[a][mu] = row.iter().zip(&tw2[mu]).map(|(v, w)| w * v).sum();
                }
            }
            (0..=2 * m_max)
                .map(|mi| (0..=mu_max).map(|mu| (0..n).map(|a| s[a][mu] * tw1[mi][a]).sum()).collect())
                .collect()
        })
        .collect()
}

fn assemble_modes(
    table: &[Vec<Vec<Complex64>>],
    grid: &NodeSet,
    m_max: usize,
    mu_max: usize,
) -> Vec<ModeCoefficients> {
    let mut out = Vec::with_capacity((m_max + 1) * (mu_max + 1));
    for m in 0..=m_max {
        for mu in 0..=mu_max {
            let plus: Vec<Complex64> = table.iter().map(|r| r[m_max + m][mu]).collect();
            // f_{m,-mu} is the conjugate of f_{-m,mu} for real data.
            let minus: Vec<Complex64> = table.iter().map(|r| r[m_max - m][mu].conj()).collect();
            let sup = plus.iter().chain(&minus).fold(0.0f64, |a, z| a.max(z.norm()));
            out.push(ModeCoefficients {
                index: ModeIndex { m: m as u32, mu: mu as u32 },
                tau_nodes: grid.nodes.clone(),
                weights: grid.weights.clone(),
                plus,
                minus,
                weighted_sup: sup * (m * m + mu * mu) as f64,
            });
        }
    }
    out
}

/// f_{m,mu}(tau') = int int q e^{-i m phi1'} e^{-i mu phi2'} dphi1' dphi2'
/// on the coefficient nodes, together with f_{m,-mu}.
pub fn mode_coefficients(
    data: &InitialData,
    idx: ModeIndex,
    policy: &TruncationPolicy,
    geom: &TorusGeometry,
) -> Result<ModeCoefficients, WaveError> {
    data.check_support(geom)?;
    let grid = coefficient_nodes(data, policy);
    let n = policy.n_angle.max(2 * (idx.m.max(idx.mu) as usize) + 2);
    let (m, mu) = (idx.m as usize, idx.mu as usize);
    let table = fourier_table(data, &grid.nodes, m, mu, n);
    let all = assemble_modes(&table, &grid, m, mu);
    Ok(all.into_iter().find(|c| c.index == idx).expect("requested mode is in the table"))
}

/// Kernel values K^mu(k_i, x_j) for every node, row-major in k.
fn kernel_rows(mu: u32, ks: &[f64], xs: &[f64]) -> Result<Vec<f64>, WaveError> {
    let rows: Result<Vec<Vec<f64>>, SpecfunError> = ks
        .par_iter()
        .map(|&k| kernel_k_multi(mu, k, xs).map(|r| r.into_iter().map(|e| e.value).collect()))
        .collect();
    Ok(rows?.concat())
}

/// One mode of the propagator applied to a real radial coefficient, at a
/// single point (tau, phi1):
/// int cos(N(tau, phi1) sqrt(m^2 + k^2) t) K(k, tau) [int coeff K(k, .)] dk.
pub fn mode_propagate(
    coeff: &RadialProfile,
    idx: ModeIndex,
    t: f64,
    tau: f64,
    phi1: f64,
    geom: &TorusGeometry,
    policy: &TruncationPolicy,
) -> Result<f64, WaveError> {
    if coeff.values.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let n = prefactor_n(tau, phi1, geom);
    let tau_max = coeff.tau_nodes.iter().fold(tau, |m, &x| m.max(x));
    let kg = policy.k_grid(n * t, tau_max)?;
    let mut xs = coeff.tau_nodes.clone();
    xs.push(tau);
    let nx = xs.len();
    let kv = kernel_rows(idx.mu, &kg.nodes, &xs)?;
    let m2 = (idx.m as f64).powi(2);
    let mut total = 0.0;
    for (i, (&k, &w)) in kg.nodes.iter().zip(&kg.weights).enumerate() {
        if !policy.mu_active(idx.mu, k) {
            continue;
        }
        let row = &kv[i * nx..(i + 1) * nx];
        let f: f64 = coeff.values.iter().zip(&coeff.weights).zip(row).map(|((v, cw), kk)| v * cw * kk).sum();
        total += w * (n * (k * k + m2).sqrt() * t).cos() * row[nx - 1] * f;
    }
    Ok(total)
}

/// Field returned by [`synthesize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub field: FieldGrid,
    /// Bound on the modes beyond the truncation, from their coefficients.
    pub mode_tail: f64,
    /// Estimate of the k integral beyond k_max.
    pub k_tail: f64,
    pub modes_used: usize,
    pub k_nodes: usize,
}

/// Smallest interior distance from tau = 0 accepted for output grids.
pub fn eps_margin(geom: &TorusGeometry) -> f64 {
    0.05 * geom.tau1
}

const NEGLIGIBLE: f64 = 1e-13;

struct ModeSpectrum {
    idx: ModeIndex,
    weight: f64,
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
    lo: usize,
    hi: usize,
}

/// u(t) on a product grid, summed over the retained modes.
pub fn synthesize(
    data: &InitialData,
    t: f64,
    spec: &GridSpec,
    geom: &TorusGeometry,
    policy: &TruncationPolicy,
) -> Result<Synthesis, WaveError> {
    policy.validate()?;
    data.check_support(geom)?;
    if spec.tau_min < eps_margin(geom) || spec.tau_max > geom.tau1 {
        return Err(WaveError::Grid(format!(
            "output tau range [{}, {}] must lie in [{}, {}]",
            spec.tau_min,
            spec.tau_max,
            eps_margin(geom),
            geom.tau1
        )));
    }
    let mut field = spec.build(t)?;
    let (n1, n2, nt) = field.shape();
    let m_max = policy.m_max as usize;
    let mu_max = policy.mu_cap() as usize;

    let cgrid = coefficient_nodes(data, policy);
    // Twice the retained range, so the dropped shells can be measured.
    let n_angle = policy.n_angle.max(4 * m_max.max(mu_max) + 2);
    let table = fourier_table(data, &cgrid.nodes, 2 * m_max, 2 * mu_max.max(1), n_angle);
    let all = assemble_modes(&table, &cgrid, 2 * m_max, 2 * mu_max.max(1));
    let eps = |n: u32| if n == 0 { 1.0 } else { 2.0 };
    let norm = 1.0 / (4.0 * PI * PI);
    let mut mode_tail = 0.0;
    let mut kept = Vec::new();
    for c in all {
        let (m, mu) = (c.index.m, c.index.mu);
        if m as usize > m_max || mu as usize > mu_max {
            mode_tail += norm * eps(m) * eps(mu) * 0.5 * (c.plus.iter().fold(0.0f64, |a, z| a.max(z.norm())) + c.minus.iter().fold(0.0f64, |a, z| a.max(z.norm())));
        } else {
            kept.push(c);
        }
    }
    let scale = kept.iter().fold(0.0f64, |a, c| a.max(c.sup()));
    if scale == 0.0 {
        return Ok(Synthesis { field, mode_tail: 0.0, k_tail: 0.0, modes_used: 0, k_nodes: 0 });
    }
    kept.retain(|c| c.sup() > NEGLIGIBLE * scale);

    let n_max = (0..n1)
        .flat_map(|i| field.tau.iter().map(move |&tt| (i, tt)))
        .fold(0.0f64, |a, (i, tt)| a.max(prefactor_n(tt, field.phi1[i], geom)));
    let tau_top = spec.tau_max.max(data.support_tau_max);
    let kg = policy.k_grid(n_max * t, tau_top)?;
    let nk = kg.len();

    // Per order: kernel at the coefficient nodes (to transform) and at the
    // output nodes (to synthesise).
    let mut orders: Vec<u32> = kept.iter().map(|c| c.index.mu).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut out_kernel: Vec<Option<Vec<f64>>> = vec![None; mu_max + 1];
    let mut spectra = Vec::with_capacity(kept.len());
    let mut k_tail = 0.0;
    let last_unit = kg.nodes.partition_point(|&k| k <= policy.k_max - 1.0);
    for &mu in &orders {
        let kin = kernel_rows(mu, &kg.nodes, &cgrid.nodes)?;
        let kout = kernel_rows(mu, &kg.nodes, &field.tau)?;
        let nc = cgrid.len();
        for c in kept.iter().filter(|c| c.index.mu == mu) {
            let transform = |f: &[Complex64]| -> Vec<Complex64> {
                (0..nk)
                    .map(|i| {
                        if !policy.mu_active(mu, kg.nodes[i]) {
                            return Complex64::new(0.0, 0.0);
                        }
                        let row = &kin[i * nc..(i + 1) * nc];
                        f.iter().zip(&cgrid.weights).zip(row).map(|((z, w), kk)| z * (w * kk)).sum::<Complex64>()
                    })
                    .collect()
            };
            let plus = transform(&c.plus);
            let minus = transform(&c.minus);
            let fmax = plus.iter().chain(&minus).fold(0.0f64, |a, z| a.max(z.norm()));
            let live = |i: &usize| plus[*i].norm().max(minus[*i].norm()) > NEGLIGIBLE * fmax;
            let lo = (0..nk).find(live).unwrap_or(nk);
            let hi = (0..nk).rev().find(live).map_or(lo, |i| i + 1);
            let weight = norm * eps(c.index.m) * eps(mu) * 0.5;
            k_tail += weight
                * (last_unit..nk)
                    .map(|i| kg.weights[i] * (plus[i].norm() + minus[i].norm()))
                    .sum::<f64>();
            spectra.push(ModeSpectrum { idx: c.index, weight, plus, minus, lo, hi });
        }
        out_kernel[mu as usize] = Some(kout);
    }

    // Layer by layer in tau: fold kernel and weights into the spectra,
    // then sum against cos(N sigma t) for every phi1.
    let sigma: Vec<Vec<f64>> =
        (0..=m_max).map(|m| kg.nodes.iter().map(|k| (k * k + (m * m) as f64).sqrt()).collect()).collect();
    let layers: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|l| {
            let g: Vec<(Vec<Complex64>, Vec<Complex64>)> = spectra
                .iter()
                .map(|s| {
                    let kout = out_kernel[s.idx.mu as usize].as_ref().expect("kernel built for every kept order");
                    let fold = |f: &[Complex64]| -> Vec<Complex64> {
                        (s.lo..s.hi).map(|i| f[i] * (kg.weights[i] * kout[i * nt + l])).collect()
                    };
                    (fold(&s.plus), fold(&s.minus))
                })
                .collect();
            let mut layer = vec![0.0; n1 * n2];
            let mut cosines = vec![vec![1.0; nk]; m_max + 1];
            let mut sums = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); spectra.len()];
            for i in 0..n1 {
                let phi1 = field.phi1[i];
                if t != 0.0 {
                    let nt_ = prefactor_n(field.tau[l], phi1, geom) * t;
                    for (m, row) in cosines.iter_mut().enumerate() {
                        for (c, s) in row.iter_mut().zip(&sigma[m]) {
                            *c = fast_cos(nt_ * s);
                        }
                    }
                }
                // The k sums depend on phi1 only through the cosines.
                if i == 0 || t != 0.0 {
                    for ((s, (gp, gm)), a) in spectra.iter().zip(&g).zip(sums.iter_mut()) {
                        let c = &cosines[s.idx.m as usize][s.lo..s.hi];
                        let mut ap = Complex64::new(0.0, 0.0);
                        let mut am = Complex64::new(0.0, 0.0);
                        for ((cc, p), q) in c.iter().zip(gp).zip(gm) {
                            ap += p * cc;
                            am += q * cc;
                        }
                        *a = (ap, am);
                    }
                }
                // Per mu: sums over m of e^{i m phi1} A_{m, +-mu}.
                let mut xp = vec![Complex64::new(0.0, 0.0); mu_max + 1];
                let mut xm = vec![Complex64::new(0.0, 0.0); mu_max + 1];
                for (s, (ap, am)) in spectra.iter().zip(&sums) {
                    let e = Complex64::from_polar(s.weight, s.idx.m as f64 * phi1);
                    xp[s.idx.mu as usize] += e * ap;
                    xm[s.idx.mu as usize] += e * am;
                }
                for j in 0..n2 {
                    let phi2 = field.phi2[j];
                    let mut v = 0.0;
                    for mu in 0..=mu_max {
                        let e = Complex64::from_polar(1.0, mu as f64 * phi2);
                        v += (e * xp[mu]).re + (e.conj() * xm[mu]).re;
                    }
                    layer[i * n2 + j] = v;
                }
            }
            layer
        })
        .collect();
    for (l, layer) in layers.iter().enumerate() {
        for i in 0..n1 {
            for j in 0..n2 {
                let idx = field.index(i, j, l);
                field.values[idx] = layer[i * n2 + j];
            }
        }
    }
    Ok(Synthesis { field, mode_tail, k_tail, modes_used: spectra.len(), k_nodes: nk })
}

/// max |(u(t+d) - 2u(t) + u(t-d))/d^2 - Delta_P u(t)| over the interior,
/// divided by max |u(t)|.
pub fn pde_residual(states: [&FieldGrid; 3], geom: &TorusGeometry) -> Result<f64, WaveError> {
    pde_residual_with(states, |f| Ok(apply_poschl_teller(f, geom)?))
}

/// As [`pde_residual`] with the spatial operator supplied by the caller.
pub fn pde_residual_with(
    states: [&FieldGrid; 3],
    op: impl Fn(&FieldGrid) -> Result<FieldGrid, WaveError>,
) -> Result<f64, WaveError> {
    let [a, b, c] = states;
    if !a.same_grid(b) || !b.same_grid(c) {
        return Err(WaveError::Grid("states live on different grids".into()));
    }
    let d1 = b.time_stamp - a.time_stamp;
    let d2 = c.time_stamp - b.time_stamp;
    if !(d1 > 0.0) || (d1 - d2).abs() > 1e-9 * d1 {
        return Err(WaveError::Grid(format!("time steps must be uniform and positive, got {d1} and {d2}")));
    }
    let scale = b.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let lap = op(b)?;
    let (n1, n2, _) = b.shape();
    let mut worst: f64 = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for l in stencil_tau_range(b) {
                let idx = b.index(i, j, l);
                let utt = (a.values[idx] - 2.0 * b.values[idx] + c.values[idx]) / (d1 * d1);
                worst = worst.max((utt - lap.values[idx]).abs());
            }
        }
    }
    Ok(worst / scale)
}
