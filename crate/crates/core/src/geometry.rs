//! Toroidal coordinates, the torus built from its radii, the conformal
//! factor N and finite-difference versions of the two Laplacians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("radii must satisfy 0 < r < R (got r={r}, R={big_r})")]
    InvalidRadii { r: f64, big_r: f64 },
    #[error("the point tau=0, phi1=0 maps to infinity")]
    Singularity,
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("inverse map did not converge: {0}")]
    NonConvergence(String),
}

/// A torus with tube radius `r` and centre-line radius `big_r`, plus the
/// derived focal parameter `a` and boundary value `tau1` of the exterior
/// coordinate domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub a: f64,
    pub tau1: f64,
}

/// Radii as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Self { r: 1.0, big_r: 2.0 }
    }
}

pub fn torus_from_radii(r: f64, big_r: f64) -> Result<TorusGeometry, GeometryError> {
    if !(r > 0.0 && r < big_r && big_r.is_finite()) {
        return Err(GeometryError::InvalidRadii { r, big_r });
    }
    let a = ((big_r - r) * (big_r + r)).sqrt();
    let tau1 = ((big_r + a) / r).ln();
    Ok(TorusGeometry { r, big_r, a, tau1 })
}

impl TryFrom<Radii> for TorusGeometry {
    type Error = GeometryError;

    fn try_from(value: Radii) -> Result<Self, Self::Error> {
        torus_from_radii(value.r, value.big_r)
    }
}

/// Point in toroidal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToroidalPoint {
    pub phi1: f64,
    pub phi2: f64,
    pub tau: f64,
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_pi(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Wrap an angle into [0, 2 pi).
pub fn wrap_two_pi(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// cosh(tau) - cos(phi1), evaluated without cancellation near the origin.
pub fn conformal_denominator(tau: f64, phi1: f64) -> f64 {
    let sh = (0.5 * tau).sinh();
    let s = (0.5 * phi1).sin();
    2.0 * (sh * sh + s * s)
}

/// N(tau, phi1) = (cosh tau - cos phi1) / a.
pub fn prefactor_n(tau: f64, phi1: f64, geom: &TorusGeometry) -> f64 {
    conformal_denominator(tau, phi1) / geom.a
}

pub fn to_cartesian(p: &ToroidalPoint, geom: &TorusGeometry) -> Result<[f64; 3], GeometryError> {
    let d = conformal_denominator(p.tau, p.phi1);
    if d <= 1e-300 {
        return Err(GeometryError::Singularity);
    }
    let rho = geom.a * p.tau.sinh() / d;
    Ok([rho * p.phi2.cos(), rho * p.phi2.sin(), geom.a * p.phi1.sin() / d])
}

fn meridian_residual(phi1: f64, tau: f64, rho: f64, z: f64, a: f64) -> [f64; 2] {
    let d = conformal_denominator(tau, phi1);
    [a * tau.sinh() / d - rho, a * phi1.sin() / d - z]
}

/// Inverse of [`to_cartesian`] by damped Newton iteration in the meridian
/// half-plane, started from the best node of a coarse search grid.
pub fn from_cartesian(xyz: [f64; 3], geom: &TorusGeometry) -> Result<ToroidalPoint, GeometryError> {
    let [x, y, z] = xyz;
    let rho = x.hypot(y);
    let phi2 = wrap_two_pi(y.atan2(x));
    let a = geom.a;
    let scale = 1.0 + rho.hypot(z) / a;
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);

    let mut best = (f64::INFINITY, 0.0, 1.0);
    for i in 0..64 {
        let phi1 = -PI + (i as f64 + 0.5) * 2.0 * PI / 64.0;
        for j in 0..64 {
            let tau = 0.05 + 6.0 * j as f64 / 63.0;
            let r = norm(meridian_residual(phi1, tau, rho, z, a));
            if r < best.0 {
                best = (r, phi1, tau);
            }
        }
    }
    let (mut res, mut phi1, mut tau) = best;
    for _ in 0..50 {
        let d = conformal_denominator(tau, phi1);
        let (sh, ch) = (tau.sinh(), tau.cosh());
        let (sp, cp) = (phi1.sin(), phi1.cos());
        // partial derivatives of rho = a sinh/d and z = a sin/d
        let d_rho_dphi = -a * sh * sp / (d * d);
        let d_rho_dtau = a * (ch * d - sh * sh) / (d * d);
        let d_z_dphi = a * (cp * d - sp * sp) / (d * d);
        let d_z_dtau = -a * sp * sh / (d * d);
        let f = meridian_residual(phi1, tau, rho, z, a);
        let det = d_rho_dphi * d_z_dtau - d_rho_dtau * d_z_dphi;
        if det.abs() < 1e-300 {
            break;
        }
        let dphi = (f[0] * d_z_dtau - d_rho_dtau * f[1]) / det;
        let dtau = (d_rho_dphi * f[1] - f[0] * d_z_dphi) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let np = phi1 - lambda * dphi;
            let nt = (tau - lambda * dtau).max(0.0);
            let nr = norm(meridian_residual(np, nt, rho, z, a));
            if nr < res || nr <= 1e-15 * scale {
                phi1 = np;
                tau = nt;
                res = nr;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        let step = lambda * dphi.hypot(dtau);
        if !accepted || step < 1e-14 || res <= 1e-14 * scale {
            break;
        }
    }
    let out = ToroidalPoint { phi1: wrap_pi(phi1), phi2, tau };
    if res <= 1e-10 * scale {
        Ok(out)
    } else {
        Err(GeometryError::NonConvergence(format!("residual {res:e} at {out:?}")))
    }
}

/// Closed-form lower bound of N away from the neighbourhood
/// {tau < eps1} x {|phi1| < eps1} of infinity.
pub fn eta_lower_bound(eps1: f64, geom: &TorusGeometry) -> Result<f64, GeometryError> {
    if !(eps1 > 0.0 && eps1 < geom.tau1) {
        return Err(GeometryError::Domain(format!(
            "eps1 must lie in (0, tau1 = {}), got {eps1}",
            geom.tau1
        )));
    }
    let s = (0.5 * eps1).sin();
    Ok(2.0 * s * s / geom.a)
}

/// Minimum of N over an `n` x `n` grid of the complement region, with the
/// lines tau = eps1 and |phi1| = eps1 added to the grid.
pub fn eta_grid_min(eps1: f64, geom: &TorusGeometry, n: usize) -> f64 {
    let mut taus: Vec<f64> = (0..n).map(|i| geom.tau1 * i as f64 / (n - 1) as f64).collect();
    taus.push(eps1);
    let mut phis: Vec<f64> = (0..n).map(|i| -PI + 2.0 * PI * (i + 1) as f64 / n as f64).collect();
    phis.extend([eps1, -eps1]);
    let mut best = f64::INFINITY;
    for &t in &taus {
        for &p in &phis {
            if t < eps1 && p.abs() < eps1 {
                continue;
            }
            best = best.min(prefactor_n(t, p, geom));
        }
    }
    best
}

/// Uniform node list with `n` nodes on [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Periodic phi1 nodes in (-pi, pi].
pub fn periodic_phi1(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + 2.0 * PI * (i + 1) as f64 / n as f64).collect()
}

/// Periodic phi2 nodes in [0, 2 pi).
pub fn periodic_phi2(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

/// Description of a product grid, as read from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_phi1: usize,
    pub n_phi2: usize,
    pub n_tau: usize,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl GridSpec {
    pub fn build(&self, time_stamp: f64) -> Result<FieldGrid, GeometryError> {
        FieldGrid::zeros(
            periodic_phi1(self.n_phi1),
            periodic_phi2(self.n_phi2),
            linspace(self.tau_min, self.tau_max, self.n_tau),
            time_stamp,
        )
    }
}

/// Samples of u(t, phi1, phi2, tau) on a product grid. Values are stored
/// with tau varying fastest, then phi2, then phi1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    pub time_stamp: f64,
}

fn check_axis(name: &str, nodes: &[f64]) -> Result<f64, GeometryError> {
    if nodes.len() < 4 {
        return Err(GeometryError::Grid(format!("{name} axis needs at least 4 nodes, has {}", nodes.len())));
    }
    let h = nodes[1] - nodes[0];
    if !(h > 0.0) {
        return Err(GeometryError::Grid(format!("{name} axis is not increasing")));
    }
    for w in nodes.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(GeometryError::Grid(format!("{name} axis is not uniform")));
        }
    }
    Ok(h)
}

impl FieldGrid {
    pub fn zeros(phi1: Vec<f64>, phi2: Vec<f64>, tau: Vec<f64>, time_stamp: f64) -> Result<Self, GeometryError> {
        check_axis("phi1", &phi1)?;
        check_axis("phi2", &phi2)?;
        check_axis("tau", &tau)?;
        if tau[0] < 0.0 {
            return Err(GeometryError::Grid("tau nodes must be non-negative".into()));
        }
        if !time_stamp.is_finite() {
            return Err(GeometryError::Grid("time stamp must be finite".into()));
        }
        let n = phi1.len() * phi2.len() * tau.len();
        Ok(Self { phi1, phi2, tau, values: vec![0.0; n], time_stamp })
    }

    pub fn from_fn(
        phi1: Vec<f64>,
        phi2: Vec<f64>,
        tau: Vec<f64>,
        time_stamp: f64,
        mut f: impl FnMut(f64, f64, f64) -> f64,
    ) -> Result<Self, GeometryError> {
        let mut g = Self::zeros(phi1, phi2, tau, time_stamp)?;
        for i in 0..g.phi1.len() {
            for j in 0..g.phi2.len() {
                for l in 0..g.tau.len() {
                    let idx = g.index(i, j, l);
                    g.values[idx] = f(g.phi1[i], g.phi2[j], g.tau[l]);
                }
            }
        }
        Ok(g)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.phi1.len(), self.phi2.len(), self.tau.len())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.phi2.len() + j) * self.tau.len() + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.index(i, j, l)]
    }

    pub fn same_grid(&self, other: &FieldGrid) -> bool {
        self.phi1 == other.phi1 && self.phi2 == other.phi2 && self.tau == other.tau
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn spacings(&self) -> (f64, f64, f64) {
        (
            self.phi1[1] - self.phi1[0],
            self.phi2[1] - self.phi2[0],
            self.tau[1] - self.tau[0],
        )
    }

    fn check_periodic(&self) -> Result<(), GeometryError> {
        let (h1, h2, _) = self.spacings();
        let p1 = h1 * self.phi1.len() as f64;
        let p2 = h2 * self.phi2.len() as f64;
        if (p1 - 2.0 * PI).abs() > 1e-9 || (p2 - 2.0 * PI).abs() > 1e-9 {
            return Err(GeometryError::Grid("angular axes must cover one full period".into()));
        }
        Ok(())
    }

    /// Whether the node below the first tau node is tau = 0, where the
    /// field is continued by zero.
    fn first_layer_has_ghost(&self) -> bool {
        let h = self.tau[1] - self.tau[0];
        (self.tau[0] - h).abs() <= 1e-9 * h
    }
}

/// Apply `stencil` to every computable node. Layers that cannot be
/// computed (the outermost tau layers) are left at zero.
fn apply_stencil(
    field: &FieldGrid,
    geom: &TorusGeometry,
    stencil: impl Fn(&FieldGrid, usize, usize, usize, &dyn Fn(usize, usize, isize) -> f64) -> f64,
) -> Result<FieldGrid, GeometryError> {
    field.check_periodic()?;
    if field.tau[field.tau.len() - 1] > geom.tau1 + 1e-12 {
        return Err(GeometryError::Grid(format!("tau grid exceeds tau1 = {}", geom.tau1)));
    }
    if field.tau[0] <= 0.0 {
        return Err(GeometryError::Grid("tau grid must exclude tau = 0".into()));
    }
    let (n1, n2, nt) = field.shape();
    let ghost = field.first_layer_has_ghost();
    let first = if ghost { 0 } else { 1 };
    let mut out = FieldGrid { values: vec![0.0; field.values.len()], ..field.clone() };
    for i in 0..n1 {
        for j in 0..n2 {
            for l in first..nt - 1 {
                // u at (i, j, l + dl) with tau-continuation by zero at tau = 0
                let u_tau = |ii: usize, jj: usize, dl: isize| -> f64 {
                    let ll = l as isize + dl;
                    if ll < 0 {
                        0.0
                    } else {
                        field.get(ii, jj, ll as usize)
                    }
                };
                let idx = out.index(i, j, l);
                out.values[idx] = stencil(field, i, j, l, &u_tau);
            }
        }
    }
    Ok(out)
}

/// Second-order finite-difference Laplacian in toroidal coordinates, in
/// conservative form with coefficients at half nodes.
pub fn apply_laplacian(field: &FieldGrid, geom: &TorusGeometry) -> Result<FieldGrid, GeometryError> {
    let (n1, n2, _) = field.shape();
    let (h1, h2, ht) = field.spacings();
    let a2 = geom.a * geom.a;
    apply_stencil(field, geom, |f, i, j, l, u| {
        let tau = f.tau[l];
        let phi = f.phi1[i];
        let d = conformal_denominator(tau, phi);
        let sh = tau.sinh();
        let ip = (i + 1) % n1;
        let im = (i + n1 - 1) % n1;
        let jp = (j + 1) % n2;
        let jm = (j + n2 - 1) % n2;
        let c = u(i, j, 0);
        let coef = |t: f64, p: f64| t.sinh() / conformal_denominator(t, p);
        let phi_part = (coef(tau, phi + 0.5 * h1) * (u(ip, j, 0) - c) - coef(tau, phi - 0.5 * h1) * (c - u(im, j, 0)))
            / (h1 * h1);
        let tau_part = (coef(tau + 0.5 * ht, phi) * (u(i, j, 1) - c) - coef(tau - 0.5 * ht, phi) * (c - u(i, j, -1)))
            / (ht * ht);
        let phi2_part = (u(i, jp, 0) - 2.0 * c + u(i, jm, 0)) / (h2 * h2) / (sh * d);
        d * d * d / (a2 * sh) * (phi_part + tau_part + phi2_part)
    })
}

/// Second-order finite-difference Pöschl-Teller operator
/// N^2 [u_11 + u_tt + csch^2(tau) (u_22 + u/4)].
pub fn apply_poschl_teller(field: &FieldGrid, geom: &TorusGeometry) -> Result<FieldGrid, GeometryError> {
    let (n1, n2, _) = field.shape();
    let (h1, h2, ht) = field.spacings();
    apply_stencil(field, geom, |f, i, j, l, u| {
        let tau = f.tau[l];
        let n = prefactor_n(tau, f.phi1[i], geom);
        let ip = (i + 1) % n1;
        let im = (i + n1 - 1) % n1;
        let jp = (j + 1) % n2;
        let jm = (j + n2 - 1) % n2;
        let c = u(i, j, 0);
        let u11 = (u(ip, j, 0) - 2.0 * c + u(im, j, 0)) / (h1 * h1);
        let u22 = (u(i, jp, 0) - 2.0 * c + u(i, jm, 0)) / (h2 * h2);
        let utt = (u(i, j, 1) - 2.0 * c + u(i, j, -1)) / (ht * ht);
        let csch2 = 1.0 / tau.sinh().powi(2);
        n * n * (u11 + utt + csch2 * (u22 + 0.25 * c))
    })
}

/// Indices of tau layers filled by [`apply_laplacian`] and [`apply_poschl_teller`].
pub fn stencil_tau_range(field: &FieldGrid) -> std::ops::Range<usize> {
    let first = if field.first_layer_has_ghost() { 0 } else { 1 };
    first..field.tau.len() - 1
}
