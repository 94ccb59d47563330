//! Parameters shared by every operator: the fractional order `s`, the
//! weight exponent `a = 1 - 2s`, the relaxation length `eps` and the lower
//! end `s0` of the uniformity window.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// The triple `(s, a, eps)` plus the uniformity window floor `s0`.
///
/// `a` is derived, never stored independently of `s`, so the invariant
/// `a = 1 - 2s` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParam {
    s: f64,
    eps: f64,
    s0: f64,
}

impl FracParam {
    pub fn new(s: f64, eps: f64, s0: f64) -> Result<Self> {
        if !(s0 > 0.0 && s0 <= s && s < 1.0) {
            return Err(Error::Domain(format!(
                "need 0 < s0 <= s < 1, got s = {s}, s0 = {s0}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("need eps > 0, got {eps}")));
        }
        Ok(Self { s, eps, s0 })
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Weight exponent `a = 1 - 2s`, always in `(-1, 1)`.
    #[inline]
    pub fn a(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// `eps^{2s}`, the reaction scale that multiplies every potential term.
    #[inline]
    pub fn eps_2s(&self) -> f64 {
        self.eps.powf(2.0 * self.s)
    }

    /// Same order and window, different relaxation length.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.s, eps, self.s0)
    }
}

/// A space-time center `(x0, t0)` with `x0` on the thin space (`z = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCenter {
    pub x0: Vec<f64>,
    pub t0: f64,
}

impl GaussianCenter {
    pub fn new(x0: Vec<f64>, t0: f64) -> Result<Self> {
        if !(t0 > 0.0) {
            return Err(Error::Domain(format!("need t0 > 0, got {t0}")));
        }
        Ok(Self { x0, t0 })
    }

    /// Center shifted forward in time by `dt` (used by the shifted-Gaussian
    /// comparison bounds).
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            x0: self.x0.clone(),
            t0: self.t0 + dt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_param_invariants() {
        let p = FracParam::new(0.75, 0.1, 0.5).unwrap();
        assert_eq!(p.a(), 1.0 - 2.0 * 0.75);
        assert!(p.a() > -1.0 && p.a() < 1.0);
        assert!(FracParam::new(1.0, 0.1, 0.5).is_err());
        assert!(FracParam::new(0.4, 0.1, 0.5).is_err());
        assert!(FracParam::new(0.6, 0.0, 0.5).is_err());
    }

    #[test]
    fn center_needs_positive_time() {
        assert!(GaussianCenter::new(vec![0.0], 0.0).is_err());
        assert!(GaussianCenter::new(vec![0.0], 0.5).is_ok());
    }
}
