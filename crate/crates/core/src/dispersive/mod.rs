//! Frequency-localised Green's kernel and its dispersive decay.
//!
//! [`cutoff`] builds the temporal and angular cutoffs, [`phase`] holds the
//! explicit stationary points and a one-dimensional stationary phase
//! evaluator, [`kernel`] evaluates the filtered kernel directly and by
//! stationary phase, and [`scan`] estimates its sup norm as a function of
//! time and fits the decay law.

pub mod cutoff;
pub mod kernel;
pub mod phase;
pub mod scan;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::specfun::SpecfunError;

pub use cutoff::{build_cutoffs, smooth_step, CutoffProfile, Plateau};
pub use kernel::{
    filtered_kernel, filtered_kernel_many, filtered_kernel_sp, KernelPolicy, KernelTable, PointPair, SpKernelEstimate,
};
pub use phase::{
    oscillatory_integral, stationary_phase, stationary_points, Amplitude, Branch, FnAmplitude, Phase, PhasePoint,
    QuadraticPhase, SampledAmplitude, SpApprox,
};
pub use scan::{default_t_list, supnorm_scan, FitReport, RegionSpec, ScanConfig, ScanReport, ScanRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispersiveError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no admissible stationary point: {0}")]
    NoStationaryPoint(String),
    #[error("degenerate phase: |f''| = {0:e}")]
    Degenerate(f64),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
