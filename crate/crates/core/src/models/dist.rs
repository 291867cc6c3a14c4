//! Component distributions of the one-factor model `Y_i = c_i W + xi_i`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{std_normal_upper, std_normal_upper_inv};

/// Centered noise distribution of `xi_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum NoiseDist {
    Normal { scale: f64 },
    Uniform { half_width: f64 },
    Laplace { scale: f64 },
    Logistic { scale: f64 },
    /// `scale * (E - 1)` with `E` standard exponential; not symmetric.
    Exponential { scale: f64 },
}

impl NoiseDist {
    pub fn validate(&self) -> Result<()> {
        let s = match *self {
            NoiseDist::Normal { scale }
            | NoiseDist::Laplace { scale }
            | NoiseDist::Logistic { scale }
            | NoiseDist::Exponential { scale } => scale,
            NoiseDist::Uniform { half_width } => half_width,
        };
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Model(format!("noise scale must be finite and positive, got {s}")));
        }
        Ok(())
    }

    /// `P(xi >= x)`.
    pub fn upper(&self, x: f64) -> f64 {
        match *self {
            NoiseDist::Normal { scale } => std_normal_upper(x / scale),
            NoiseDist::Uniform { half_width } => ((half_width - x) / (2.0 * half_width)).clamp(0.0, 1.0),
            NoiseDist::Laplace { scale } => {
                if x >= 0.0 {
                    0.5 * (-x / scale).exp()
                } else {
                    1.0 - 0.5 * (x / scale).exp()
                }
            }
            NoiseDist::Logistic { scale } => {
                let z = x / scale;
                if z >= 0.0 {
                    let e = (-z).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + z.exp())
                }
            }
            NoiseDist::Exponential { scale } => {
                let z = x / scale + 1.0;
                if z <= 0.0 {
                    1.0
                } else {
                    (-z).exp()
                }
            }
        }
    }

    /// Points where `upper` is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            NoiseDist::Normal { .. } | NoiseDist::Logistic { .. } => Vec::new(),
            NoiseDist::Uniform { half_width } => vec![-half_width, half_width],
            NoiseDist::Laplace { .. } => vec![0.0],
            NoiseDist::Exponential { scale } => vec![-scale],
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, NoiseDist::Exponential { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDist::Normal { scale } => scale * rng.sample::<f64, _>(StandardNormal),
            NoiseDist::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            NoiseDist::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
            }
            NoiseDist::Logistic { scale } => {
                let u = open_unit(rng);
                scale * (u / (1.0 - u)).ln()
            }
            NoiseDist::Exponential { scale } => {
                let u = open_unit(rng);
                scale * (-u.ln() - 1.0)
            }
        }
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Distribution of the shared factor `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum FactorDist {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl FactorDist {
    pub const STANDARD_NORMAL: FactorDist = FactorDist::Normal { mean: 0.0, sd: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            FactorDist::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd > 0.0 => Ok(()),
            FactorDist::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            other => Err(Error::Model(format!("invalid factor distribution {other:?}"))),
        }
    }

    /// The `q` with `P(W >= q) = x`.
    pub fn upper_quantile(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain(format!("factor quantile needs x in (0,1), got {x}")));
        }
        Ok(match *self {
            FactorDist::Normal { mean, sd } => mean + sd * std_normal_upper_inv(x)?,
            FactorDist::Uniform { lo, hi } => hi - x * (hi - lo),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FactorDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            FactorDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Finite-support distribution of the loadings `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl LoadingDist {
    pub fn point(c: f64) -> Self {
        LoadingDist { values: vec![c], probs: vec![1.0] }
    }

    /// Uniform on the given values.
    pub fn uniform(values: Vec<f64>) -> Self {
        let p = 1.0 / values.len() as f64;
        let probs = vec![p; values.len()];
        LoadingDist { values, probs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.probs.len() {
            return Err(Error::Model("loading distribution needs matching, non-empty values and probs".into()));
        }
        if let Some(c) = self.values.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Model(format!("loading support values must be finite and nonnegative, got {c}")));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Model("loading probabilities must be positive".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("loading probabilities sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *v;
            }
        }
        *self.values.last().unwrap()
    }
}
