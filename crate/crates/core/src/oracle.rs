//! Brute-force references used to check the spectral pipeline: a leapfrog
//! solver for u_tt = Delta_P u, a finite-difference residual for the
//! radial eigenfunctions, adaptive Gauss-Kronrod quadrature and the
//! Mehler-Fock roundtrip error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    linspace, periodic_phi1, periodic_phi2, prefactor_n, FieldGrid, GeometryError, GridSpec, TorusGeometry,
};
use crate::mehler_fock::{class_a_check, KernelMatrix, MfError, MfPolicy, RadialProfile};
use crate::specfun::{kernel_k_multi, SpecfunError};
use crate::wave_kernel::{pde_residual, synthesize, InitialData, TruncationPolicy, WaveError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("solution grew to {ratio:.3e} times its initial size at t = {t}")]
    Blowup { t: f64, ratio: f64 },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Transform(#[from] MfError),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
}

/// Resolution of the leapfrog solver. Walls with u = 0 sit at `tau_min`
/// and at tau1; the angles are periodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdtdConfig {
    pub n_phi1: usize,
    pub n_phi2: usize,
    /// Number of tau nodes including both walls.
    pub n_tau: usize,
    pub tau_min: f64,
    pub cfl: f64,
    /// Explicit time step; by default `cfl` times the stability limit.
    pub dt: Option<f64>,
    /// Keep a frame every this many steps (0: only the first and last).
    pub frame_every: usize,
}

impl Default for FdtdConfig {
    fn default() -> Self {
        Self { n_phi1: 64, n_phi2: 64, n_tau: 128, tau_min: 0.05, cfl: 0.9, dt: None, frame_every: 0 }
    }
}

impl FdtdConfig {
    /// (d phi1, d phi2, d tau) for the given geometry.
    pub fn steps(&self, geom: &TorusGeometry) -> (f64, f64, f64) {
        let tp = 2.0 * std::f64::consts::PI;
        (tp / self.n_phi1 as f64, tp / self.n_phi2 as f64, (geom.tau1 - self.tau_min) / (self.n_tau - 1) as f64)
    }

    /// Every step halved.
    pub fn refined(&self) -> Self {
        Self {
            n_phi1: 2 * self.n_phi1,
            n_phi2: 2 * self.n_phi2,
            n_tau: 2 * (self.n_tau - 1) + 1,
            dt: self.dt.map(|d| 0.5 * d),
            ..*self
        }
    }

    pub fn validate(&self, geom: &TorusGeometry) -> Result<(), OracleError> {
        if self.n_phi1 < 4 || self.n_phi2 < 4 || self.n_tau < 5 {
            return Err(OracleError::Grid("need at least 4 angular and 5 radial nodes".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_min < geom.tau1) {
            return Err(OracleError::Grid(format!("tau_min must lie in (0, {})", geom.tau1)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(OracleError::Param("cfl must lie in (0, 1]".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(OracleError::Param("time step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Coefficients of the discrete operator L = N^2 A on one grid, where
/// A = d11 + d_tautau + csch^2(tau) (d22 + 1/4) is symmetric.
struct Stencil {
    n1: usize,
    n2: usize,
    nt: usize,
    inv1: f64,
    inv2: f64,
    invt: f64,
    /// N^2 at (i, l).
    n2_at: Vec<f64>,
    /// csch^2 at l.
    csch2: Vec<f64>,
}

impl Stencil {
    fn new(phi1: &[f64], tau: &[f64], steps: (f64, f64, f64), n2: usize, geom: &TorusGeometry) -> Self {
        let (h1, h2, ht) = steps;
        let nt = tau.len();
        let n2_at = phi1
            .iter()
            .flat_map(|&p| tau.iter().map(move |&t| prefactor_n(t, p, geom).powi(2)))
            .collect();
        let csch2 = tau.iter().map(|t| 1.0 / t.sinh().powi(2)).collect();
        Self { n1: phi1.len(), n2, nt, inv1: 1.0 / (h1 * h1), inv2: 1.0 / (h2 * h2), invt: 1.0 / (ht * ht), n2_at, csch2 }
    }

    /// Gershgorin bound on the spectrum of -L.
    fn lambda_max(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n1 {
            for l in 1..self.nt - 1 {
                let s = 4.0 * self.inv1 + 4.0 * self.invt + self.csch2[l] * 4.0 * self.inv2;
                worst = worst.max(self.n2_at[i * self.nt + l] * s);
            }
        }
        worst
    }

    /// A u on the interior layers; the wall layers are left at zero.
    fn apply_a(&self, u: &[f64], out: &mut [f64]) {
        let (n1, n2, nt) = (self.n1, self.n2, self.nt);
        out.par_chunks_mut(n2 * nt).enumerate().for_each(|(i, slab)| {
            let ip = (i + 1) % n1;
            let im = (i + n1 - 1) % n1;
            for j in 0..n2 {
                let jp = (j + 1) % n2;
                let jm = (j + n2 - 1) % n2;
                let at = |a: usize, b: usize| (a * n2 + b) * nt;
                let (c0, p1, m1, p2, m2) = (at(i, j), at(ip, j), at(im, j), at(i, jp), at(i, jm));
                slab[j * nt] = 0.0;
                slab[j * nt + nt - 1] = 0.0;
                for l in 1..nt - 1 {
                    let c = u[c0 + l];
                    let d11 = (u[p1 + l] - 2.0 * c + u[m1 + l]) * self.inv1;
                    let d22 = (u[p2 + l] - 2.0 * c + u[m2 + l]) * self.inv2;
                    let dtt = (u[c0 + l + 1] - 2.0 * c + u[c0 + l - 1]) * self.invt;
                    slab[j * nt + l] = d11 + dtt + self.csch2[l] * (d22 + 0.25 * c);
                }
            }
        });
    }

    fn n2_of(&self, idx: usize) -> f64 {
        let l = idx % self.nt;
        let i = idx / (self.n2 * self.nt);
        self.n2_at[i * self.nt + l]
    }
}

/// Output of [`fdtd_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdtdRun {
    pub frames: Vec<FieldGrid>,
    pub dt: f64,
    pub steps: usize,
    /// The conserved discrete energy at every half step.
    pub energy: Vec<f64>,
}

impl FdtdRun {
    pub fn last(&self) -> &FieldGrid {
        self.frames.last().expect("a run always keeps its first frame")
    }

    /// max |E - E_0| / |E_0| over the run.
    pub fn energy_drift(&self) -> f64 {
        let Some(&e0) = self.energy.first() else { return 0.0 };
        if e0 == 0.0 {
            return 0.0;
        }
        self.energy.iter().fold(0.0f64, |m, e| m.max((e - e0).abs())) / e0.abs()
    }
}

/// Largest stable time step for the configuration.
pub fn fdtd_stable_dt(config: &FdtdConfig, geom: &TorusGeometry) -> Result<f64, OracleError> {
    config.validate(geom)?;
    let phi1 = periodic_phi1(config.n_phi1);
    let tau = linspace(config.tau_min, geom.tau1, config.n_tau);
    let st = Stencil::new(&phi1, &tau, config.steps(geom), config.n_phi2, geom);
    Ok(2.0 / st.lambda_max().sqrt())
}

/// Leapfrog integration of u_tt = Delta_P u from u(0) = q, u_t(0) = 0 up
/// to time `t_end`.
pub fn fdtd_solve(
    data: &InitialData,
    t_end: f64,
    config: &FdtdConfig,
    geom: &TorusGeometry,
) -> Result<FdtdRun, OracleError> {
    config.validate(geom)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(OracleError::Param(format!("final time must be non-negative, got {t_end}")));
    }
    let steps3 = config.steps(geom);
    let phi1 = periodic_phi1(config.n_phi1);
    let phi2 = periodic_phi2(config.n_phi2);
    let tau = linspace(config.tau_min, geom.tau1, config.n_tau);
    let st = Stencil::new(&phi1, &tau, steps3, config.n_phi2, geom);
    let limit = 2.0 / st.lambda_max().sqrt();
    let dt_target = match config.dt {
        Some(dt) if dt > config.cfl * limit => return Err(OracleError::Cfl { dt, limit: config.cfl * limit }),
        Some(dt) => dt,
        None => config.cfl * limit,
    };
    let steps = (t_end / dt_target).ceil() as usize;
    let dt = if steps == 0 { dt_target } else { t_end / steps as f64 };

    let nt = tau.len();
    let mut u0 = FieldGrid::from_fn(phi1, phi2, tau, 0.0, |p1, p2, t| data.eval(p1, p2, t))?;
    for idx in 0..u0.values.len() {
        let l = idx % nt;
        if l == 0 || l == nt - 1 {
            u0.values[idx] = 0.0;
        }
    }
    let scale = u0.max_abs();
    let n = u0.values.len();
    let cell = steps3.0 * steps3.1 * steps3.2;
    let mut frames = vec![u0.clone()];
    let mut energy = Vec::with_capacity(steps);
    if steps == 0 {
        return Ok(FdtdRun { frames, dt, steps, energy });
    }

    let mut prev = u0.values.clone();
    let mut a_prev = vec![0.0; n];
    st.apply_a(&prev, &mut a_prev);
    // Zero initial velocity: u^1 = u^0 + dt^2 / 2 L u^0.
    let mut cur: Vec<f64> = (0..n).map(|x| prev[x] + 0.5 * dt * dt * st.n2_of(x) * a_prev[x]).collect();
    let mut a_cur = vec![0.0; n];
    let half_energy = |old: &[f64], new: &[f64], a_old: &[f64]| -> f64 {
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for x in 0..n {
            let v = (new[x] - old[x]) / dt;
            let w = st.n2_of(x);
            if w > 0.0 {
                kinetic += v * v / w;
            }
            potential -= new[x] * a_old[x];
        }
        0.5 * cell * (kinetic + potential)
    };
    energy.push(half_energy(&prev, &cur, &a_prev));
    let mut next = vec![0.0; n];
    for step in 1..=steps {
        let t_now = step as f64 * dt;
        if config.frame_every != 0 && step % config.frame_every == 0 && step < steps {
            frames.push(FieldGrid { values: cur.clone(), time_stamp: t_now, ..u0.clone() });
        }
        if step == steps {
            break;
        }
        st.apply_a(&cur, &mut a_cur);
        for x in 0..n {
            next[x] = 2.0 * cur[x] - prev[x] + dt * dt * st.n2_of(x) * a_cur[x];
        }
        energy.push(half_energy(&cur, &next, &a_cur));
        let size = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !size.is_finite() || (scale > 0.0 && size > 10.0 * scale) {
            return Err(OracleError::Blowup { t: t_now + dt, ratio: size / scale });
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    frames.push(FieldGrid { values: cur, time_stamp: steps as f64 * dt, ..u0 });
    Ok(FdtdRun { frames, dt, steps, energy })
}

/// Self-convergence of the leapfrog solver over three grids, each with
/// every step halved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergence {
    /// Relative L2 difference between the coarse and middle solutions.
    pub coarse_diff: f64,
    /// Relative L2 difference between the middle and fine solutions.
    pub fine_diff: f64,
    pub ratio: f64,
}

pub fn fdtd_self_convergence(
    data: &InitialData,
    t_end: f64,
    config: &FdtdConfig,
    geom: &TorusGeometry,
) -> Result<SelfConvergence, OracleError> {
    let mid = config.refined();
    let fine = mid.refined();
    // The finest grid is the most restrictive, so its step, doubled,
    // is stable on the coarser grids.
    let dt = fine.dt.unwrap_or(fine.cfl * fdtd_stable_dt(&fine, geom)?);
    let dt = if t_end > 0.0 { t_end / (t_end / (4.0 * dt)).ceil() / 4.0 } else { dt };
    let runs: Vec<FieldGrid> = [(config, 4.0), (&mid, 2.0), (&fine, 1.0)]
        .into_iter()
        .map(|(c, f)| {
            let c = FdtdConfig { dt: Some(f * dt), frame_every: 0, ..*c };
            fdtd_solve(data, t_end, &c, geom).map(|r| r.last().clone())
        })
        .collect::<Result<_, _>>()?;
    let coarse_diff = refined_difference(&runs[0], &runs[1]);
    let fine_diff = refined_difference(&runs[1], &runs[2]);
    Ok(SelfConvergence { coarse_diff, fine_diff, ratio: coarse_diff / fine_diff })
}

/// Relative L2 difference of `coarse` against `fine` on the coarse nodes,
/// where `fine` halves every step of `coarse`.
fn refined_difference(coarse: &FieldGrid, fine: &FieldGrid) -> f64 {
    let (n1, n2, nt) = coarse.shape();
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nt {
                let a = coarse.get(i, j, l);
                let b = fine.get(2 * i + 1, 2 * j, 2 * l);
                diff += (a - b) * (a - b);
                norm += b * b;
            }
        }
    }
    if norm == 0.0 {
        return diff.sqrt();
    }
    (diff / norm).sqrt()
}

/// Agreement between the spectral solution and the leapfrog solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub t: f64,
    pub tau_range: (f64, f64),
    pub nodes: usize,
    pub rel_l2: f64,
    pub rel_linf: f64,
    pub fdtd_dt: f64,
    pub fdtd_steps: usize,
    pub energy_drift: f64,
    pub mode_tail: f64,
    pub k_tail: f64,
    /// pde_residual of the spectral solution around t, on `residual_grid`.
    pub pde_residual: f64,
    pub residual_delta: f64,
    pub residual_grid: GridSpec,
}

/// Options for [`fdtd_cross_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckOptions {
    pub tau_lo: f64,
    /// Distance of the upper end of the region below tau1.
    pub tau1_gap: f64,
    /// The spectral solution is compared on every `stride`-th angular node.
    pub stride: usize,
    /// Nodes next to the inner wall left out of the norms.
    pub wall_buffer: usize,
    pub residual_delta: f64,
    pub residual_grid: (usize, usize, usize),
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        Self { tau_lo: 0.5, tau1_gap: 0.1, stride: 2, wall_buffer: 5, residual_delta: 0.02, residual_grid: (32, 32, 24) }
    }
}

/// Runs the leapfrog solver and the spectral solution to time `t` and
/// compares them on tau in [tau_lo, tau1 - tau1_gap].
pub fn fdtd_cross_check(
    data: &InitialData,
    t: f64,
    fdtd: &FdtdConfig,
    policy: &TruncationPolicy,
    opts: &CrossCheckOptions,
    geom: &TorusGeometry,
) -> Result<CrossCheck, OracleError> {
    if opts.stride == 0 || fdtd.n_phi1 % opts.stride != 0 || fdtd.n_phi2 % opts.stride != 0 {
        return Err(OracleError::Param("stride must divide both angular node counts".into()));
    }
    let run = fdtd_solve(data, t, &FdtdConfig { frame_every: 0, ..*fdtd }, geom)?;
    let reference = run.last();
    let hi = geom.tau1 - opts.tau1_gap;
    let layers: Vec<usize> = (opts.wall_buffer..reference.tau.len())
        .filter(|&l| reference.tau[l] >= opts.tau_lo - 1e-12 && reference.tau[l] <= hi + 1e-12)
        .collect();
    if layers.len() < 4 {
        return Err(OracleError::Grid("the comparison region holds fewer than 4 tau layers".into()));
    }
    let (l0, l1) = (layers[0], layers[layers.len() - 1]);
    let spec = GridSpec {
        n_phi1: fdtd.n_phi1 / opts.stride,
        n_phi2: fdtd.n_phi2 / opts.stride,
        n_tau: layers.len(),
        tau_min: reference.tau[l0],
        tau_max: reference.tau[l1],
    };
    let syn = synthesize(data, t, &spec, geom, policy)?;
    let s = opts.stride;
    let mut diff = 0.0;
    let mut norm = 0.0;
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..spec.n_phi1 {
        for j in 0..spec.n_phi2 {
            for (ll, &l) in layers.iter().enumerate() {
                let a = syn.field.get(i, j, ll);
                let b = reference.get(s * (i + 1) - 1, s * j, l);
                diff += (a - b) * (a - b);
                norm += b * b;
                worst = worst.max((a - b).abs());
                peak = peak.max(b.abs());
            }
        }
    }
    let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { x };

    let (r1, r2, rt) = opts.residual_grid;
    let rspec = GridSpec { n_phi1: r1, n_phi2: r2, n_tau: rt, tau_min: opts.tau_lo, tau_max: hi };
    let d = opts.residual_delta;
    let states: Vec<FieldGrid> = [t - d, t, t + d]
        .into_iter()
        .map(|tt| synthesize(data, tt.abs(), &rspec, geom, policy).map(|s| FieldGrid { time_stamp: tt, ..s.field }))
        .collect::<Result<_, _>>()?;
    let residual = pde_residual([&states[0], &states[1], &states[2]], geom)?;

    Ok(CrossCheck {
        t,
        tau_range: (spec.tau_min, spec.tau_max),
        nodes: spec.n_phi1 * spec.n_phi2 * spec.n_tau,
        rel_l2: ratio(diff.sqrt(), norm.sqrt()),
        rel_linf: ratio(worst, peak),
        fdtd_dt: run.dt,
        fdtd_steps: run.steps,
        energy_drift: run.energy_drift(),
        mode_tail: syn.mode_tail,
        k_tail: syn.k_tail,
        pde_residual: residual,
        residual_delta: d,
        residual_grid: rspec,
    })
}

/// max over interior nodes of |-e'' + (mu^2 - 1/4) csch^2(tau) e - k^2 e|,
/// with e = K^mu(k, .) and centred second differences, divided by max |e|.
pub fn eigen_residual(mu: u32, k: f64, tau_nodes: &[f64]) -> Result<f64, OracleError> {
    eigen_residual_of(mu, k, tau_nodes, 1.0)
}

/// As [`eigen_residual`] with the eigenfunction multiplied by `scale`.
pub fn eigen_residual_of(mu: u32, k: f64, tau_nodes: &[f64], scale: f64) -> Result<f64, OracleError> {
    if tau_nodes.len() < 3 {
        return Err(OracleError::Grid("need at least 3 nodes".into()));
    }
    let h = tau_nodes[1] - tau_nodes[0];
    if !(h > 0.0) || tau_nodes.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(OracleError::Grid("tau nodes must be uniform and increasing".into()));
    }
    if tau_nodes[0] < 0.05 - 1e-12 {
        return Err(OracleError::Grid(format!("first node {} lies below 0.05", tau_nodes[0])));
    }
    let e: Vec<f64> = kernel_k_multi(mu, k, tau_nodes)?.into_iter().map(|r| scale * r.value).collect();
    let emax = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if emax == 0.0 {
        return Ok(0.0);
    }
    let nu = (mu as f64).powi(2) - 0.25;
    let worst = (1..e.len() - 1).fold(0.0f64, |m, i| {
        let d2 = (e[i + 1] - 2.0 * e[i] + e[i - 1]) / (h * h);
        let csch2 = 1.0 / tau_nodes[i].sinh().powi(2);
        m.max((-d2 + nu * csch2 * e[i] - k * k * e[i]).abs())
    });
    Ok(worst / emax)
}

/// Integration domain for [`quad_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Finite(f64, f64),
    /// [a, infinity), mapped to [0, 1) by x = a + s / (1 - s).
    SemiInfinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod 15-point value and |Kronrod - Gauss 7| on [a, b].
fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_X[i]) + f(c + h * GK_X[i]);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

/// Adaptive Gauss-Kronrod quadrature: the interval with the largest error
/// estimate is bisected until the estimates sum below `tol`.
pub fn quad_oracle(mut f: impl FnMut(f64) -> f64, domain: Domain, tol: f64) -> Result<QuadResult, OracleError> {
    const MAX_INTERVALS: usize = 20_000;
    if !(tol > 0.0) {
        return Err(OracleError::Param("tolerance must be positive".into()));
    }
    let (a, b, mut g): (f64, f64, Box<dyn FnMut(f64) -> f64 + '_>) = match domain {
        Domain::Finite(a, b) => (a, b, Box::new(&mut f)),
        Domain::SemiInfinite(a) => (
            0.0,
            1.0,
            Box::new(move |s: f64| {
                let d = 1.0 - s;
                f(a + s / d) / (d * d)
            }),
        ),
    };
    if !(a.is_finite() && b.is_finite()) {
        return Err(OracleError::Param("finite endpoints required".into()));
    }
    let mut heap = BinaryHeap::new();
    let (value, error) = gk15(&mut *g, a, b);
    heap.push(Piece { a, b, value, error });
    let mut err = error;
    while err > tol {
        if heap.len() >= MAX_INTERVALS {
            return Err(OracleError::NonConvergence(format!("error estimate {err:e} after {MAX_INTERVALS} intervals")));
        }
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            return Err(OracleError::NonConvergence(format!("interval around {m} cannot be split further")));
        }
        let (v1, e1) = gk15(&mut *g, p.a, m);
        let (v2, e2) = gk15(&mut *g, m, p.b);
        if !(v1 + v2).is_finite() {
            return Err(OracleError::NonConvergence(format!("integrand is not finite near {m}")));
        }
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
    // Summed in order of position, independent of the refinement history.
    let mut pieces = heap.into_vec();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = pieces.iter().map(|p| p.value).sum();
    let error = pieces.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error, intervals: pieces.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundtripError {
    pub k_max: f64,
    pub linf_rel: f64,
    pub l1_rel: f64,
}

/// Error of inverse(forward(profile)) against the profile on its own nodes.
pub fn roundtrip_error(profile: &RadialProfile, mu: u32, policy: &MfPolicy) -> Result<RoundtripError, OracleError> {
    Ok(roundtrip_sweep(std::slice::from_ref(profile), mu, policy, &[policy.k_max])?[0][0])
}

/// Roundtrip errors for several profiles sharing their tau nodes, for
/// every cut-off in `k_maxes`; indexed [profile][cut-off]. The kernel is
/// evaluated once, up to the largest cut-off.
pub fn roundtrip_sweep(
    profiles: &[RadialProfile],
    mu: u32,
    policy: &MfPolicy,
    k_maxes: &[f64],
) -> Result<Vec<Vec<RoundtripError>>, OracleError> {
    let Some(first) = profiles.first() else { return Ok(Vec::new()) };
    if profiles.iter().any(|p| p.tau_nodes != first.tau_nodes) {
        return Err(OracleError::Param("profiles must share their tau nodes".into()));
    }
    // The zero profile is trivially admissible; its log-tail fit is not defined.
    for p in profiles.iter().filter(|p| p.sup_norm() > 0.0) {
        let report = class_a_check(p);
        if !report.pass {
            return Err(MfError::Class(report.diagnostics.join("; ")).into());
        }
    }
    let top = k_maxes.iter().copied().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return Err(OracleError::Param("k_max must be positive".into()));
    }
    let kgrid = MfPolicy { k_max: top, ..*policy }.k_grid();
    let matrix = KernelMatrix::build(mu, &kgrid.nodes, &first.tau_nodes)?;
    profiles
        .iter()
        .map(|p| {
            k_maxes
                .iter()
                .map(|&k_max| {
                    let rows = matrix.rows_below(k_max);
                    let density = matrix.forward(p, &kgrid.weights, rows)?;
                    let back = matrix.inverse(&density, &p.weights)?;
                    let sup = p.sup_norm();
                    let l1 = p.l1_norm();
                    let (mut worst, mut l1_err) = (0.0f64, 0.0);
                    for ((b, g), w) in back.values.iter().zip(&p.values).zip(&p.weights) {
                        worst = worst.max((b - g).abs());
                        l1_err += (b - g).abs() * w;
                    }
                    let rel = |x: f64, n: f64| if n > 0.0 { x / n } else { x };
                    Ok(RoundtripError { k_max, linf_rel: rel(worst, sup), l1_rel: rel(l1_err, l1) })
                })
                .collect()
        })
        .collect()
}
