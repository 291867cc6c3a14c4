use serde::{Deserialize, Serialize};

use super::dist::{FactorDist, LoadingDist, NoiseDist};
use super::{latent_rule_for, LatentResolution};
use crate::error::{Error, Result};
use crate::numerics::std_normal_upper;

/// One-factor mixture `Y_i = c_i W + xi_i` with i.i.d. loadings `c_i` of
/// finite nonnegative support.
///
/// p-values use the exact marginal tail of `Y_1`; no rescaling of `Y` is
/// applied, and since p-values are invariant under a common rescaling of
/// `Y` none is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub c: LoadingDist,
    pub w: FactorDist,
    pub xi: NoiseDist,
}

/// Panels for the marginal tail integral; the integrand is smooth between
/// kinks so a coarse composite rule is exact to rounding.
const MARGINAL_RESOLUTION: LatentResolution = LatentResolution { panel_width: 0.5, per_panel: 10 };

impl FactorModel {
    pub fn new(c: LoadingDist, w: FactorDist, xi: NoiseDist) -> Result<Self> {
        c.validate()?;
        w.validate()?;
        xi.validate()?;
        Ok(FactorModel { c, w, xi })
    }

    /// `xi` symmetric and `W` symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        let w_sym = match self.w {
            FactorDist::Normal { mean, .. } => mean == 0.0,
            FactorDist::Uniform { lo, hi } => lo == -hi,
        };
        w_sym && self.xi.is_symmetric()
    }

    /// `P(c_1 w + xi_1 >= threshold)`, i.e. `F0(t, w)` once `threshold` is
    /// set to `Fbar^{-1}(t)`.
    pub fn conditional_upper(&self, threshold: f64, w: f64) -> f64 {
        self.c.values.iter().zip(&self.c.probs).map(|(&c, &p)| p * self.xi.upper(threshold - c * w)).sum()
    }

    /// Values of `w` where `conditional_upper(threshold, .)` has a kink.
    pub fn kinks_in_w(&self, threshold: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &c in &self.c.values {
            if c > 0.0 {
                out.extend(self.xi.kinks().into_iter().map(|k| (threshold - k) / c));
            }
        }
        out
    }

    /// Marginal upper tail `P(Y_1 >= x)`.
    pub fn marginal_upper(&self, x: f64) -> f64 {
        if let (FactorDist::Normal { mean, sd }, NoiseDist::Normal { scale }) = (self.w, self.xi) {
            return self
                .c
                .values
                .iter()
                .zip(&self.c.probs)
                .map(|(&c, &p)| p * std_normal_upper((x - c * mean) / (scale * scale + c * c * sd * sd).sqrt()))
                .sum();
        }
        let mut total = 0.0;
        for (&c, &p) in self.c.values.iter().zip(&self.c.probs) {
            let part = if c == 0.0 {
                self.xi.upper(x)
            } else {
                let kinks: Vec<f64> = self.xi.kinks().into_iter().map(|k| (x - k) / c).collect();
                match latent_rule_for(self.w, MARGINAL_RESOLUTION, &kinks) {
                    Ok(rule) => rule.expect(|w| self.xi.upper(x - c * w)),
                    Err(_) => f64::NAN,
                }
            };
            total += p * part;
        }
        total.clamp(0.0, 1.0)
    }

    /// `Fbar^{-1}(t)`: the `x` with `P(Y_1 >= x) = t`, by bisection.
    pub fn marginal_upper_inv(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain(format!("marginal quantile needs t in (0,1), got {t}")));
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.marginal_upper(lo) < t {
            lo *= 2.0;
            if lo < -1e300 {
                return Err(Error::Numerical(format!("no lower bracket for marginal quantile at {t}")));
            }
        }
        while self.marginal_upper(hi) > t {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Numerical(format!("no upper bracket for marginal quantile at {t}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.marginal_upper(mid) > t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
