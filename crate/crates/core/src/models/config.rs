use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NoiseModel;
use crate::error::{Error, Result};
use crate::numerics::std_normal_upper;
use crate::rng::seeded_rng;

/// Which hypotheses are false nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypotheses {
    /// `H_i = 1` marks a false null.
    Explicit(Vec<u8>),
    /// `m0` true nulls: the first `m0` indices, or a uniformly random
    /// `m0`-subset redrawn for every sample when `uniform_mixture` is set.
    Count { m0: usize, uniform_mixture: bool },
}

/// Alternative means `mu_i` of the false nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AltMeans {
    Shared(f64),
    PerHypothesis(Vec<f64>),
}

impl AltMeans {
    fn at(&self, i: usize) -> f64 {
        match self {
            AltMeans::Shared(b) => *b,
            AltMeans::PerHypothesis(v) => v[i],
        }
    }
}

/// A full simulation setting: `m` hypotheses, which of them are false,
/// their means, and the noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub hypotheses: Hypotheses,
    pub alt_means: AltMeans,
    pub noise: NoiseModel,
}

/// One draw of p-values with the realized truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PValueSample {
    pub pvalues: Vec<f64>,
    /// `h[i]` is true when hypothesis `i` is a false null.
    pub h: Vec<bool>,
    pub latent_w: Option<f64>,
}

impl PValueSample {
    pub fn m0(&self) -> usize {
        self.h.iter().filter(|&&x| !x).count()
    }
}

impl ExperimentConfig {
    pub fn new(m: usize, hypotheses: Hypotheses, alt_means: AltMeans, noise: NoiseModel) -> Result<Self> {
        let cfg = ExperimentConfig { m, hypotheses, alt_means, noise };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `m0` true nulls in fixed positions with a shared mean `beta`.
    pub fn fixed(m: usize, m0: usize, beta: f64, noise: NoiseModel) -> Result<Self> {
        Self::new(m, Hypotheses::Count { m0, uniform_mixture: false }, AltMeans::Shared(beta), noise)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        if m < 2 {
            return Err(Error::Config(format!("need at least 2 hypotheses, got {m}")));
        }
        match &self.hypotheses {
            Hypotheses::Explicit(h) => {
                if h.len() != m {
                    return Err(Error::Config(format!("H has length {} but m = {m}", h.len())));
                }
                if h.iter().any(|&x| x > 1) {
                    return Err(Error::Config("H entries must be 0 or 1".into()));
                }
            }
            Hypotheses::Count { m0, .. } => {
                if *m0 > m {
                    return Err(Error::Config(format!("m0 = {m0} exceeds m = {m}")));
                }
            }
        }
        match &self.alt_means {
            AltMeans::Shared(b) => {
                if self.m0() < m && !(b.is_finite() && *b > 0.0) {
                    return Err(Error::Config(format!("alternative mean must be positive, got {b}")));
                }
            }
            AltMeans::PerHypothesis(v) => {
                if v.len() != m {
                    return Err(Error::Config(format!("{} alternative means for m = {m}", v.len())));
                }
                if v.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return Err(Error::Config("alternative means must be positive".into()));
                }
            }
        }
        if let NoiseModel::GaussGeneral(g) = &self.noise {
            if g.dim() != m {
                return Err(Error::Config(format!("correlation matrix is {0}x{0} but m = {m}", g.dim())));
            }
        }
        Ok(())
    }

    pub fn m0(&self) -> usize {
        match &self.hypotheses {
            Hypotheses::Explicit(h) => h.iter().filter(|&&x| x == 0).count(),
            Hypotheses::Count { m0, .. } => *m0,
        }
    }

    pub fn is_uniform_mixture(&self) -> bool {
        matches!(self.hypotheses, Hypotheses::Count { uniform_mixture: true, .. })
    }

    /// Draw one sample; deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> PValueSample {
        let mut out = PValueSample::default();
        self.sample_into(&mut seeded_rng(seed), &mut out);
        out
    }

    /// Draw one sample from `rng` into `out`, reusing its buffers.
    ///
    /// Draw order: the true-null subset (uniform mixture only), the factor
    /// `W`, then per-coordinate noise in index order.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut PValueSample) {
        let m = self.m;
        out.h.clear();
        match &self.hypotheses {
            Hypotheses::Explicit(h) => out.h.extend(h.iter().map(|&x| x == 1)),
            Hypotheses::Count { m0, uniform_mixture: false } => {
                out.h.extend((0..m).map(|i| i >= *m0));
            }
            Hypotheses::Count { m0, uniform_mixture: true } => {
                out.h.resize(m, true);
                let mut idx: Vec<usize> = (0..m).collect();
                for i in 0..*m0 {
                    let j = rng.random_range(i..m);
                    idx.swap(i, j);
                    out.h[idx[i]] = false;
                }
            }
        }
        out.pvalues.clear();
        out.pvalues.resize(m, 0.0);
        let y = &mut out.pvalues;
        out.latent_w = None;
        match &self.noise {
            NoiseModel::Independent => {
                for v in y.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            NoiseModel::GaussEqui { rho } => {
                let w: f64 = rng.sample(StandardNormal);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                for v in y.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = a * w + b * z;
                }
                out.latent_w = Some(w);
            }
            NoiseModel::AltEqui { rho, a } => {
                let w: f64 = rng.sample(StandardNormal);
                let (s, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                for v in y.iter_mut() {
                    let sign = if rng.random::<f64>() < *a { 1.0 } else { -1.0 };
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sign * s * w + b * z;
                }
                out.latent_w = Some(w);
            }
            NoiseModel::GaussGeneral(g) => {
                let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                g.correlate(&z, y);
            }
            NoiseModel::Factor(f) => {
                let w = f.w.sample(rng);
                for v in y.iter_mut() {
                    let c = f.c.sample(rng);
                    *v = c * w + f.xi.sample(rng);
                }
                out.latent_w = Some(w);
            }
        }
        let factor = match &self.noise {
            NoiseModel::Factor(f) => Some(f),
            _ => None,
        };
        for (i, yi) in y.iter_mut().enumerate().take(m) {
            let x = if out.h[i] { *yi + self.alt_means.at(i) } else { *yi };
            *yi = match factor {
                Some(f) => f.marginal_upper(x),
                None => std_normal_upper(x),
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FactorDist, FactorModel, LoadingDist, NoiseDist};
    use crate::rng::derive_seed;

    /// sqrt(n) * sup |F_n - F| against the uniform CDF.
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            d = d.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n);
        }
        d * n.sqrt()
    }

    /// Asymptotic Kolmogorov critical value at level 1e-3.
    const KS_CRIT_1E3: f64 = 1.9495;

    fn first_nulls(cfg: &ExperimentConfig, reps: u64, seed: u64) -> Vec<f64> {
        (0..reps)
            .map(|r| {
                let s = cfg.sample(derive_seed(seed, r));
                let i = s.h.iter().position(|&x| !x).unwrap();
                s.pvalues[i]
            })
            .collect()
    }

    #[test]
    fn independent_nulls_uniform() {
        let cfg = ExperimentConfig::fixed(3, 3, 1.0, NoiseModel::Independent).unwrap();
        let mut pooled = Vec::new();
        for r in 0..4000u64 {
            pooled.extend(cfg.sample(derive_seed(11, r)).pvalues);
        }
        assert!(ks_uniform(pooled) < KS_CRIT_1E3);
    }

    #[test]
    fn equicorrelated_nulls_uniform() {
        let cfg = ExperimentConfig::new(
            1000,
            Hypotheses::Count { m0: 800, uniform_mixture: true },
            AltMeans::Shared(2.0),
            NoiseModel::gauss_equi(0.1).unwrap(),
        )
        .unwrap();
        // one null per replicate keeps the pooled draws independent
        assert!(ks_uniform(first_nulls(&cfg, 10_000, 5)) < KS_CRIT_1E3);
        let s = cfg.sample(1);
        assert_eq!(s.m0(), 800);
        assert!(s.latent_w.is_some());
    }

    #[test]
    fn rho_zero_matches_independent_in_distribution() {
        let a = ExperimentConfig::fixed(5, 5, 1.0, NoiseModel::gauss_equi(0.0).unwrap()).unwrap();
        let mut pooled = Vec::new();
        for r in 0..2000u64 {
            pooled.extend(a.sample(derive_seed(3, r)).pvalues);
        }
        assert!(ks_uniform(pooled) < KS_CRIT_1E3);
    }

    #[test]
    fn factor_and_alt_nulls_uniform() {
        let f = FactorModel::new(
            LoadingDist::uniform(vec![0.0, 1.0]),
            FactorDist::Uniform { lo: 0.0, hi: 2.0 },
            NoiseDist::Logistic { scale: 1.0 },
        )
        .unwrap();
        for noise in [NoiseModel::Factor(f), NoiseModel::alt_equi(0.5, 0.3).unwrap()] {
            let cfg = ExperimentConfig::fixed(4, 2, 1.0, noise).unwrap();
            assert!(ks_uniform(first_nulls(&cfg, 5000, 9)) < KS_CRIT_1E3);
        }
    }

    #[test]
    fn perfect_correlation_gives_equal_pvalues() {
        let cfg = ExperimentConfig::fixed(2, 2, 1.0, NoiseModel::gauss_equi(1.0).unwrap()).unwrap();
        for seed in 0..20 {
            let s = cfg.sample(seed);
            assert_eq!(s.pvalues[0], s.pvalues[1]);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = ExperimentConfig::new(
            50,
            Hypotheses::Count { m0: 30, uniform_mixture: true },
            AltMeans::Shared(2.0),
            NoiseModel::gauss_equi(0.3).unwrap(),
        )
        .unwrap();
        assert_eq!(cfg.sample(77), cfg.sample(77));
        assert_ne!(cfg.sample(77).pvalues, cfg.sample(78).pvalues);
    }

    #[test]
    fn uniform_mixture_subsets_are_uniform() {
        let cfg = ExperimentConfig::new(
            5,
            Hypotheses::Count { m0: 2, uniform_mixture: true },
            AltMeans::Shared(1.0),
            NoiseModel::Independent,
        )
        .unwrap();
        let mut counts = std::collections::HashMap::new();
        let n = 20_000;
        for r in 0..n {
            let s = cfg.sample(derive_seed(1, r));
            *counts.entry(s.h.clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        for &c in counts.values() {
            let p = 0.1;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 5.0 * se);
        }
    }

    #[test]
    fn gaussian_general_sampling_correlation() {
        use crate::models::GaussGeneral;
        let g = GaussGeneral::equicorrelated(3, 0.6).unwrap();
        let cfg = ExperimentConfig::fixed(3, 3, 1.0, NoiseModel::GaussGeneral(g)).unwrap();
        let n = 20_000;
        let mut both = 0usize;
        for r in 0..n {
            let s = cfg.sample(derive_seed(8, r));
            if s.pvalues[0] < 0.5 && s.pvalues[1] < 0.5 {
                both += 1;
            }
        }
        // orthant probability 1/4 + asin(rho) / (2 pi)
        let want = 0.25 + 0.6f64.asin() / (2.0 * std::f64::consts::PI);
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((both as f64 / n as f64 - want).abs() < 5.0 * se);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::fixed(1, 1, 1.0, NoiseModel::Independent).is_err());
        assert!(ExperimentConfig::fixed(4, 5, 1.0, NoiseModel::Independent).is_err());
        assert!(ExperimentConfig::fixed(4, 2, 0.0, NoiseModel::Independent).is_err());
        assert!(ExperimentConfig::fixed(4, 4, 0.0, NoiseModel::Independent).is_ok());
        assert!(ExperimentConfig::new(3, Hypotheses::Explicit(vec![0, 1]), AltMeans::Shared(1.0), NoiseModel::Independent)
            .is_err());
    }
}
