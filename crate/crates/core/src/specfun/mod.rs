//! Special functions: complex Gamma, the regularised hypergeometric
//! function, Hankel asymptotics and conical Legendre functions.
//!
//! Every evaluation returns an [`EvalResult`] carrying an absolute error
//! estimate and the route that produced it.

mod bessel;
mod conical;
mod gamma;
mod hyper;
pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bessel::{bessel_j, hankel1_asym, hankel_coefficient};
pub use conical::{
    conical_p, conical_p_negative, conical_p_via, conical_p_weighted, kernel_k, kernel_k_multi, kernel_k_signed, kernel_k_tol,
    kernel_k_via, KERNEL_TOL,
};
pub use gamma::{c_norm, gamma_complex, gamma_half_abs_sq, ln_gamma, ln_gamma_real, ln_half_product};
pub use hyper::{olver_f, olver_f_integral, olver_f_series};

pub use num_complex::Complex64;

/// Route used for an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Convergent power series.
    Series,
    /// Quadrature of an integral representation.
    IntegralRep,
    /// Large spectral parameter (or large argument) expansion.
    LargeK,
    /// Large order expansion.
    LargeMu,
    /// Bessel-function approximation near the axis.
    BesselUniform,
    /// Convergent series in e^{-2x} from the connection formula at infinity.
    ExpSeries,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Series => "series",
            Regime::IntegralRep => "integral",
            Regime::LargeK => "large_k",
            Regime::LargeMu => "large_mu",
            Regime::BesselUniform => "bessel_uniform",
            Regime::ExpSeries => "exp_series",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult<T> {
    pub value: T,
    pub abs_err: f64,
    pub regime: Regime,
}

impl<T> EvalResult<T> {
    pub fn new(value: T, abs_err: f64, regime: Regime) -> Self {
        Self { value, abs_err, regime }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("argument {re}{im:+}i is a pole of Gamma")]
    Pole { re: f64, im: f64 },
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("no route covers mu={mu}, k={k}, x={x} at tolerance {tol:e}")]
    RegimeGap { mu: u32, k: f64, x: f64, tol: f64 },
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Order, spectral parameter and argument of P^mu_{ik-1/2}(cosh x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicalParams {
    pub mu: u32,
    pub k: f64,
    pub x: f64,
}

impl ConicalParams {
    pub fn new(mu: u32, k: f64, x: f64) -> Result<Self, SpecfunError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(SpecfunError::InvalidParam(format!("k must be positive and finite, got {k}")));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return Err(SpecfunError::InvalidParam(format!("x must be non-negative and finite, got {x}")));
        }
        Ok(Self { mu, k, x })
    }
}
