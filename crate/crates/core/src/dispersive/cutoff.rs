use serde::{Deserialize, Serialize};

use super::DispersiveError;

/// Smooth transition from 0 (s <= 0) to 1 (s >= 1) built from exp(-1/s).
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

/// Smooth plateau: 1 on [inner_lo, inner_hi], 0 outside (outer_lo, outer_hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub outer_lo: f64,
    pub inner_lo: f64,
    pub inner_hi: f64,
    pub outer_hi: f64,
}

impl Plateau {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.outer_lo || x >= self.outer_hi {
            0.0
        } else if x < self.inner_lo {
            smooth_step((x - self.outer_lo) / (self.inner_lo - self.outer_lo))
        } else if x > self.inner_hi {
            smooth_step((self.outer_hi - x) / (self.outer_hi - self.inner_hi))
        } else {
            1.0
        }
    }
}

/// Frequency cutoffs: the temporal cutoff phi supported in (b/2, 3b/2)
/// and equal to one on [3b/4, 5b/4], the per-m bands psi_m, and the
/// order truncation mu^2 < k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub b: f64,
    pub h: f64,
    pub phi_bump: Plateau,
}

pub fn build_cutoffs(b: f64, h: f64) -> Result<CutoffProfile, DispersiveError> {
    if !(b >= 5.0) || !b.is_finite() {
        return Err(DispersiveError::Param(format!("b must be at least 5, got {b}")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(DispersiveError::Param(format!("h must lie in (0, 1), got {h}")));
    }
    let phi_bump = Plateau {
        outer_lo: 0.5 * b,
        inner_lo: 0.75 * b,
        inner_hi: 1.25 * b,
        outer_hi: 1.5 * b,
    };
    Ok(CutoffProfile { b, h, phi_bump })
}

impl CutoffProfile {
    /// phi at a rescaled frequency.
    pub fn phi(&self, x: f64) -> f64 {
        self.phi_bump.eval(x)
    }

    /// Band in k on which psi_m is one: (b/2)^2 - m^2 <= k^2 <= (3b/2)^2 - m^2.
    pub fn psi_m_band(&self, m: f64) -> Option<(f64, f64)> {
        let lo2 = (0.5 * self.b).powi(2) - m * m;
        let hi2 = (1.5 * self.b).powi(2) - m * m;
        if hi2 <= 0.0 {
            return None;
        }
        Some((lo2.max(0.0).sqrt(), hi2.sqrt()))
    }

    /// psi_m as a smooth plateau whose support widens the band by 10% of
    /// its width on each side.
    pub fn psi_m_bump(&self, m: f64) -> Option<Plateau> {
        let (lo, hi) = self.psi_m_band(m)?;
        let pad = 0.1 * (hi - lo);
        Some(Plateau { outer_lo: lo - pad, inner_lo: lo, inner_hi: hi, outer_hi: hi + pad })
    }

    pub fn psi_m(&self, m: f64, k: f64) -> f64 {
        self.psi_m_bump(m).map_or(0.0, |p| p.eval(k))
    }

    /// The order truncation in unscaled variables.
    pub fn mu_allowed(mu: u32, k: f64) -> bool {
        ((mu as f64) * (mu as f64)) < k
    }

    /// Largest retained order for frequencies below `k_max`.
    pub fn mu_max(k_max: f64) -> u32 {
        let mut mu = k_max.sqrt().floor() as u32;
        while !Self::mu_allowed(mu, k_max) && mu > 0 {
            mu -= 1;
        }
        mu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_values() {
        let c = build_cutoffs(6.0, 0.05).unwrap();
        assert_eq!(c.phi(6.0), 1.0);
        assert_eq!(c.phi(12.0), 0.0);
        assert_eq!(c.phi(3.0), 0.0);
        assert_eq!(c.phi(9.0), 0.0);
        let v = c.phi(3.5);
        assert!(v > 0.0 && v < 1.0);
        assert!((c.phi(4.0) + c.phi(4.0 + 0.0) - 2.0 * smooth_step(1.0 / 1.5)).abs() < 1e-15);
    }

    #[test]
    fn psi_band_example() {
        let c = build_cutoffs(6.0, 0.05).unwrap();
        let (lo, hi) = c.psi_m_band(3.0).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 72f64.sqrt()).abs() < 1e-14);
        assert_eq!(c.psi_m(3.0, 0.0), 1.0);
        assert_eq!(c.psi_m(3.0, 8.0), 1.0);
        assert!(c.psi_m(3.0, hi + 0.5) > 0.0);
        assert_eq!(c.psi_m(3.0, hi + 0.1 * hi + 1e-9), 0.0);
    }

    #[test]
    fn params_are_checked() {
        assert!(build_cutoffs(4.0, 0.1).is_err());
        assert!(build_cutoffs(6.0, 1.0).is_err());
        assert!(build_cutoffs(6.0, 0.0).is_err());
    }

    #[test]
    fn smooth_step_is_symmetric() {
        for s in [0.1, 0.3, 0.5, 0.77] {
            assert!((smooth_step(s) + smooth_step(1.0 - s) - 1.0).abs() < 1e-15);
        }
    }
}
