use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use torwave::dispersive::{build_cutoffs, default_t_list, RegionSpec, ScanConfig};
use torwave::geometry::{Radii, TorusGeometry};
use torwave::mehler_fock::MfPolicy;
use torwave::oracle::{CrossCheckOptions, FdtdConfig};
use torwave::wave_kernel::TruncationPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub b: f64,
    pub h: f64,
}

/// Scan settings that are not covered by the cut-off and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub n_samples: usize,
    pub tau_levels: usize,
    pub phi2_levels: usize,
    pub region: RegionSpec,
    /// Fit window in absolute time; None means [10h, 100h].
    pub fit_window: Option<(f64, f64)>,
    pub t_list: Option<Vec<f64>>,
    /// Accepted distance of the fitted slope from -1.
    pub slope_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub geometry: Radii,
    pub truncation: TruncationPolicy,
    pub mehler_fock: MfPolicy,
    pub cutoff: Cutoff,
    /// Output grid for `solve`; None means 32 x 32 x 24 inside the margins.
    pub grid: Option<torwave::geometry::GridSpec>,
    pub fdtd: FdtdConfig,
    pub cross_check: CrossCheckOptions,
    pub scan: ScanOptions,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scan = ScanConfig::new(0.05, 6.0);
        Self {
            geometry: Radii::default(),
            truncation: TruncationPolicy::default(),
            mehler_fock: MfPolicy::default(),
            cutoff: Cutoff { b: 6.0, h: 0.05 },
            grid: None,
            fdtd: FdtdConfig::default(),
            cross_check: CrossCheckOptions::default(),
            scan: ScanOptions {
                n_samples: scan.n_samples,
                tau_levels: scan.tau_levels,
                phi2_levels: scan.phi2_levels,
                region: scan.region,
                fit_window: None,
                t_list: None,
                slope_tol: scan.slope_tol,
            },
            seed: scan.seed,
            output_dir: None,
        }
    }
}

/// Overlays `patch` on `base`. Keys missing from `base` are rejected so that
/// typos do not pass silently.
fn merge(base: &mut Value, patch: Value, at: &str) -> Result<(), String> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &path)?,
                    Some(slot) => *slot = v,
                    None => return Err(format!("unknown config key `{path}`")),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p;
            Ok(())
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`, on top of the defaults.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let patch: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        } else {
            let t: toml::Value = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::to_value(t).map_err(|e| e.to_string())?
        };
        let mut base = serde_json::to_value(Self::default()).map_err(|e| e.to_string())?;
        merge(&mut base, patch, "")?;
        serde_json::from_value(base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn geometry(&self) -> Result<TorusGeometry, String> {
        TorusGeometry::try_from(self.geometry).map_err(|e| e.to_string())
    }

    pub fn scan_config(&self) -> ScanConfig {
        let Cutoff { b, h } = self.cutoff;
        let mut cfg = ScanConfig::new(h, b);
        cfg.n_samples = self.scan.n_samples;
        cfg.tau_levels = self.scan.tau_levels;
        cfg.phi2_levels = self.scan.phi2_levels;
        cfg.region = self.scan.region;
        cfg.seed = self.seed;
        cfg.slope_tol = self.scan.slope_tol;
        if let Some((lo, hi)) = self.scan.fit_window {
            cfg.fit_window = (lo / h, hi / h);
        }
        cfg.t_list = match &self.scan.t_list {
            Some(ts) => ts.clone(),
            None => match self.scan.fit_window {
                // Short times as usual, then seven log-spaced values across the window.
                Some((lo, hi)) => {
                    let mut ts: Vec<f64> = default_t_list(h).into_iter().filter(|&t| t < lo).collect();
                    ts.extend((0..=6).map(|j| lo * (hi / lo).powf(j as f64 / 6.0)));
                    ts
                }
                None => default_t_list(h),
            },
        };
        cfg
    }

    /// Checks every section against the preconditions of the module using it.
    pub fn validate(&self) -> Result<(), String> {
        let g = self.geometry()?;
        self.truncation.validate().map_err(|e| e.to_string())?;
        let mf = &self.mehler_fock;
        if !(mf.k_max > 0.0 && mf.tau_max > 0.0 && mf.nodes_per_unit > 0 && mf.tail_tol > 0.0) {
            return Err("mehler_fock: k_max, tau_max, nodes_per_unit and tail_tol must be positive".into());
        }
        build_cutoffs(self.cutoff.b, self.cutoff.h).map_err(|e| e.to_string())?;
        if let Some(grid) = &self.grid {
            if !(grid.tau_min > 0.0 && grid.tau_max <= g.tau1) {
                return Err(format!("grid: tau range must lie in (0, {}]", g.tau1));
            }
            grid.build(0.0).map_err(|e| e.to_string())?;
        }
        self.fdtd.validate(&g).map_err(|e| e.to_string())?;
        self.scan_config().validate(&g).map_err(|e| e.to_string())?;
        Ok(())
    }
}
