//! Monte Carlo device from frozen draws of the full null vector.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::models::{AltMeans, ExperimentConfig, Hypotheses, NoiseModel, PValueSample};
use crate::rng::{derive_seed, seeded_rng};

pub const MIN_MC_DRAWS: usize = 1000;

type Column = Arc<Vec<f64>>;

/// Null p-values of `n_draws` all-null samples, each stored in a uniformly
/// random order so that the first `u` entries are the nulls of the uniform
/// mixture with `m0 = u`.
#[derive(Debug)]
pub struct McDevice {
    m: usize,
    n_draws: usize,
    seed: u64,
    model: NoiseModel,
    /// `n_draws * m`, draw-major.
    draws: Vec<f64>,
    /// Sorted `k`-th order statistics of the first `u` entries, per `(u, k)`.
    cache: Mutex<HashMap<(usize, usize), Column>>,
}

impl Clone for McDevice {
    fn clone(&self) -> Self {
        McDevice {
            m: self.m,
            n_draws: self.n_draws,
            seed: self.seed,
            model: self.model.clone(),
            draws: self.draws.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl McDevice {
    pub(crate) fn new(m: usize, model: &NoiseModel, n_draws: usize, seed: u64) -> Result<Self> {
        if n_draws < MIN_MC_DRAWS {
            return Err(Error::Config(format!("Monte Carlo device needs at least {MIN_MC_DRAWS} draws, got {n_draws}")));
        }
        let cfg = ExperimentConfig::new(m, Hypotheses::Count { m0: m, uniform_mixture: false }, AltMeans::Shared(1.0), model.clone())?;
        let mut draws = Vec::with_capacity(n_draws * m);
        let mut sample = PValueSample::default();
        for d in 0..n_draws {
            let mut rng = seeded_rng(derive_seed(seed, d as u64));
            cfg.sample_into(&mut rng, &mut sample);
            sample.pvalues.shuffle(&mut rng);
            draws.extend_from_slice(&sample.pvalues);
        }
        Ok(McDevice { m, n_draws, seed, model: model.clone(), draws, cache: Mutex::new(HashMap::new()) })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    fn order_stats(&self, u: usize, k: usize) -> Arc<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&(u, k)) {
            return Arc::clone(v);
        }
        let mut buf = vec![0.0; u];
        let mut stats: Vec<f64> = self
            .draws
            .chunks_exact(self.m)
            .map(|d| {
                buf.copy_from_slice(&d[..u]);
                *buf.select_nth_unstable_by(k - 1, f64::total_cmp).1
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        let stats = Arc::new(stats);
        self.cache.lock().expect("cache lock").insert((u, k), Arc::clone(&stats));
        stats
    }

    /// Fraction of draws with at least `k` of the first `u` nulls at or
    /// below `t`.
    pub(crate) fn evaluate(&self, t: f64, k: usize, u: usize) -> f64 {
        if u < k || t <= 0.0 {
            return 0.0;
        }
        if k == 0 {
            return 1.0;
        }
        let stats = self.order_stats(u, k);
        stats.partition_point(|&x| x <= t) as f64 / self.n_draws as f64
    }

    /// Binomial standard error of [`Self::evaluate`].
    pub fn standard_error(&self, estimate: f64) -> f64 {
        (estimate * (1.0 - estimate) / self.n_draws as f64).sqrt()
    }
}
