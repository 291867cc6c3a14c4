//! Exact devices: `B0(t, k, u) = E_W[P(Bin(u, F0(t, W)) >= k)]`.

use serde::{Deserialize, Serialize};

use super::path::{add_path_tails, path_k, LnTable};
use crate::error::{Error, Result};
use crate::models::{LatentResolution, NoiseModel};
use crate::numerics::{binomial_upper_tail, QuadratureRule};
use crate::rng::seeded_rng;

/// How the expectation over the latent factor is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
#[derive(Default)]
pub enum Integration {
    /// Coarsest composite rule that agrees with its refinement to
    /// [`AUTO_TARGET`] on the probe grid.
    #[default]
    Auto,
    Quadrature { resolution: LatentResolution },
    MonteCarlo { n_draws: usize, seed: u64 },
}


/// Refinement disagreement above this is a convergence failure.
pub const DIAGNOSTIC_LIMIT: f64 = 1e-7;
/// Agreement sought by [`Integration::Auto`].
pub const AUTO_TARGET: f64 = 1e-10;

const AUTO_LADDER: [f64; 5] = [0.5, 0.25, 0.125, 0.0625, 0.03125];
const AUTO_PER_PANEL: usize = 10;

#[derive(Debug, Clone)]
enum Nodes {
    /// `F0(t, w) = t`: a single unit-weight node.
    Identity,
    Fixed(QuadratureRule),
    /// Rule rebuilt per `t` because the integrand's kinks move with `t`.
    PerThreshold(LatentResolution),
}

/// Mixture-of-binomials device for independent nulls or a scalar factor.
#[derive(Debug, Clone)]
pub struct ExactDevice {
    model: Option<NoiseModel>,
    nodes: Nodes,
    m: usize,
    resolution: Option<LatentResolution>,
    diagnostic: f64,
}

impl ExactDevice {
    pub(crate) fn independent(m: usize) -> Self {
        ExactDevice { model: None, nodes: Nodes::Identity, m, resolution: None, diagnostic: 0.0 }
    }

    pub(crate) fn factor(model: &NoiseModel, integration: Integration, m: usize) -> Result<Self> {
        let Some(dist) = model.factor_dist() else {
            return Err(Error::unsupported(format!("exact factor device needs a scalar factor, got {}", model.kind_name())));
        };
        model.conditional_null(0.5)?;
        let build = |res: LatentResolution| -> Result<ExactDevice> {
            let nodes = match model {
                NoiseModel::Factor(f) if !f.xi.kinks().is_empty() => Nodes::PerThreshold(res),
                _ => Nodes::Fixed(model.latent_rule(res, &[])?),
            };
            Ok(ExactDevice { model: Some(model.clone()), nodes, m, resolution: Some(res), diagnostic: 0.0 })
        };
        match integration {
            Integration::MonteCarlo { n_draws, seed } => {
                if n_draws == 0 {
                    return Err(Error::Config("latent Monte Carlo needs at least one draw".into()));
                }
                let mut rng = seeded_rng(seed);
                let w = n_draws as f64;
                let mut nodes: Vec<f64> = (0..n_draws).map(|_| dist.sample(&mut rng)).collect();
                nodes.sort_by(f64::total_cmp);
                let rule = QuadratureRule { weights: vec![1.0 / w; nodes.len()], nodes };
                Ok(ExactDevice { model: Some(model.clone()), nodes: Nodes::Fixed(rule), m, resolution: None, diagnostic: f64::NAN })
            }
            Integration::Quadrature { resolution } => {
                let mut dev = build(resolution)?;
                let fine = build(resolution.refined())?;
                dev.diagnostic = dev.disagreement(&fine)?;
                if !(dev.diagnostic <= DIAGNOSTIC_LIMIT) {
                    return Err(Error::Numerical(format!(
                        "latent quadrature not converged: refinement moves the device by {:.3e}",
                        dev.diagnostic
                    )));
                }
                Ok(dev)
            }
            Integration::Auto => {
                let mut dev = build(LatentResolution { panel_width: AUTO_LADDER[0], per_panel: AUTO_PER_PANEL })?;
                for &width in &AUTO_LADDER[1..] {
                    let fine = build(LatentResolution { panel_width: width, per_panel: AUTO_PER_PANEL })?;
                    dev.diagnostic = dev.disagreement(&fine)?;
                    if dev.diagnostic <= AUTO_TARGET {
                        return Ok(dev);
                    }
                    dev = fine;
                }
                let last = dev.resolution.expect("quadrature device").refined();
                let fine = build(last)?;
                dev.diagnostic = dev.disagreement(&fine)?;
                if dev.diagnostic <= DIAGNOSTIC_LIMIT {
                    Ok(dev)
                } else {
                    Err(Error::Numerical(format!(
                        "latent quadrature not converged at panel width {}: refinement moves the device by {:.3e}",
                        last.panel_width * 2.0,
                        dev.diagnostic
                    )))
                }
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn model(&self) -> Option<&NoiseModel> {
        self.model.as_ref()
    }

    /// Resolution in use, for quadrature devices.
    pub fn resolution(&self) -> Option<LatentResolution> {
        self.resolution
    }

    /// Largest change of the device on the probe grid when the latent rule
    /// is refined (NaN for Monte Carlo integration, 0 without a factor).
    pub fn diagnostic(&self) -> f64 {
        self.diagnostic
    }

    pub fn node_count(&self) -> usize {
        match &self.nodes {
            Nodes::Identity => 1,
            Nodes::Fixed(r) => r.len(),
            Nodes::PerThreshold(_) => self.nodes_at(0.5).map(|v| v.len()).unwrap_or(0),
        }
    }

    /// `(weight, F0(t, w))` pairs for the latent expectation at `t`.
    pub(crate) fn nodes_at(&self, t: f64) -> Result<Vec<(f64, f64)>> {
        match &self.nodes {
            Nodes::Identity => Ok(vec![(1.0, t)]),
            Nodes::Fixed(rule) => {
                let model = self.model.as_ref().expect("factor device has a model");
                let cond = model.conditional_null(t)?;
                Ok(rule.weights.iter().zip(&rule.nodes).map(|(&wt, &w)| (wt, cond.at(w))).collect())
            }
            Nodes::PerThreshold(res) => {
                let model = self.model.as_ref().expect("factor device has a model");
                let kinks = match model {
                    NoiseModel::Factor(f) if t > 0.0 && t < 1.0 => f.kinks_in_w(f.marginal_upper_inv(t)?),
                    _ => Vec::new(),
                };
                let rule = model.latent_rule(*res, &kinks)?;
                let cond = model.conditional_null(t)?;
                Ok(rule.weights.iter().zip(&rule.nodes).map(|(&wt, &w)| (wt, cond.at(w))).collect())
            }
        }
    }

    pub(crate) fn evaluate(&self, t: f64, k: usize, u: usize) -> Result<f64> {
        if u < k || t <= 0.0 {
            return Ok(0.0);
        }
        if k == 0 {
            return Ok(1.0);
        }
        let mut acc = 0.0;
        for (wt, p) in self.nodes_at(t)? {
            if p > 0.0 {
                acc += wt * binomial_upper_tail(u as u64, k as u64, p)?;
            }
        }
        Ok(acc.clamp(0.0, 1.0))
    }

    /// `B0(t, max(k0, u - slack), u)` for `u = 0..=m`.
    pub(crate) fn path(&self, t: f64, k0: usize, slack: Option<usize>, ln: &LnTable) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m + 1];
        if t <= 0.0 {
            return Ok(out);
        }
        if k0 == 0 {
            return Err(Error::domain("path threshold must be at least 1"));
        }
        for (wt, p) in self.nodes_at(t)? {
            add_path_tails(p, k0, slack, wt, ln, &mut out);
        }
        for (u, v) in out.iter_mut().enumerate() {
            *v = if path_k(k0, slack, u) > u { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(out)
    }

    fn probes(&self) -> Vec<(f64, usize, usize)> {
        let m = self.m;
        let mut ks = vec![1, 2, m / 20 + 1, m / 5 + 1, m / 2 + 1];
        ks.retain(|&k| k <= m);
        ks.dedup();
        let mut out = Vec::new();
        for &t in &[1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5] {
            for &k in &ks {
                for u in [m, m.div_ceil(2)] {
                    if k <= u {
                        out.push((t, k, u));
                    }
                }
            }
        }
        out
    }

    fn disagreement(&self, other: &ExactDevice) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (t, k, u) in self.probes() {
            worst = worst.max((self.evaluate(t, k, u)? - other.evaluate(t, k, u)?).abs());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{f_equi, FactorDist, FactorModel, LoadingDist, NoiseDist};

    #[test]
    fn independent_is_binomial() {
        let d = ExactDevice::independent(30);
        assert!((d.evaluate(0.1, 1, 2).unwrap() - 0.19).abs() < 1e-15);
        assert_eq!(d.evaluate(0.0, 1, 5).unwrap(), 0.0);
        assert_eq!(d.evaluate(1.0, 3, 5).unwrap(), 1.0);
        assert_eq!(d.evaluate(0.4, 6, 5).unwrap(), 0.0);
    }

    #[test]
    fn equi_device_against_direct_integral() {
        // E_W over a fine midpoint grid, an independent route from the
        // Gauss-Legendre panels
        let rho = 0.3;
        let d = ExactDevice::factor(&NoiseModel::gauss_equi(rho).unwrap(), Integration::Auto, 15).unwrap();
        let (t, k, u) = (0.05, 3, 15);
        let n = 400_000;
        let (lo, hi) = (-9.0, 9.0);
        let h = (hi - lo) / n as f64;
        let mut want = 0.0;
        for i in 0..n {
            let w: f64 = lo + (i as f64 + 0.5) * h;
            let dens = (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
            want += h * dens * binomial_upper_tail(u, k, f_equi(t, w, rho).unwrap()).unwrap();
        }
        let got = d.evaluate(t, k as usize, u as usize).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!(d.diagnostic() <= AUTO_TARGET);
    }

    #[test]
    fn auto_resolution_refines_with_dependence() {
        let coarse = ExactDevice::factor(&NoiseModel::gauss_equi(0.05).unwrap(), Integration::Auto, 50).unwrap();
        let fine = ExactDevice::factor(&NoiseModel::gauss_equi(0.8).unwrap(), Integration::Auto, 1000).unwrap();
        assert!(coarse.resolution().unwrap().panel_width > fine.resolution().unwrap().panel_width);
        assert!(fine.diagnostic() <= AUTO_TARGET);
    }

    #[test]
    fn coarse_quadrature_is_rejected() {
        let res = LatentResolution { panel_width: 4.0, per_panel: 2 };
        let err = ExactDevice::factor(&NoiseModel::gauss_equi(0.7).unwrap(), Integration::Quadrature { resolution: res }, 500)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn unsupported_models() {
        assert!(matches!(
            ExactDevice::factor(&NoiseModel::Independent, Integration::Auto, 5),
            Err(Error::UnsupportedModel(_))
        ));
        assert!(ExactDevice::factor(&NoiseModel::gauss_equi(1.0).unwrap(), Integration::Auto, 5).is_err());
    }

    #[test]
    fn latent_monte_carlo_close_to_quadrature() {
        let model = NoiseModel::gauss_equi(0.3).unwrap();
        let q = ExactDevice::factor(&model, Integration::Auto, 40).unwrap();
        let mc = ExactDevice::factor(&model, Integration::MonteCarlo { n_draws: 20_000, seed: 4 }, 40).unwrap();
        for &(t, k) in &[(0.01, 1), (0.05, 3), (0.2, 10)] {
            let a = q.evaluate(t, k, 40).unwrap();
            let b = mc.evaluate(t, k, 40).unwrap();
            // E_W of a [0,1] variable: SE below 0.5 / sqrt(n)
            assert!((a - b).abs() < 3.0 * 0.5 / (20_000f64).sqrt(), "{a} vs {b}");
        }
    }

    #[test]
    fn kinked_factor_model_uses_moving_breakpoints() {
        let f = FactorModel::new(
            LoadingDist::uniform(vec![0.0, 0.5, 1.0]),
            FactorDist::STANDARD_NORMAL,
            NoiseDist::Laplace { scale: 1.0 },
        )
        .unwrap();
        let model = NoiseModel::Factor(f);
        let d = ExactDevice::factor(&model, Integration::Auto, 20).unwrap();
        assert!(d.diagnostic() <= AUTO_TARGET);
        // k = 1, u = 1 is the marginal null probability t
        for &t in &[0.01, 0.1, 0.6] {
            assert!((d.evaluate(t, 1, 1).unwrap() - t).abs() < 1e-9);
        }
    }

    #[test]
    fn path_matches_pointwise() {
        let d = ExactDevice::factor(&NoiseModel::gauss_equi(0.2).unwrap(), Integration::Auto, 40).unwrap();
        let ln = LnTable::new(40);
        for &t in &[0.003, 0.07] {
            for (k0, slack) in [(1, None), (3, Some(10)), (2, Some(0)), (5, Some(38))] {
                let path = d.path(t, k0, slack, &ln).unwrap();
                for (u, &got) in path.iter().enumerate() {
                    let want = d.evaluate(t, path_k(k0, slack, u), u).unwrap();
                    assert!((got - want).abs() < 1e-13);
                }
            }
        }
    }
}
