//! Noise models, p-value generation and conditional null distributions.
//!
//! Observations follow the one-sided location model `X_i = H_i mu_i + Y_i`
//! and p-values are `p_i = Fbar(X_i)` with `Fbar` the marginal upper tail of
//! `Y_1`. Models with a scalar latent factor `W` (equicorrelated Gaussian,
//! alternate-sign equicorrelated, general one-factor mixtures) also expose
//! `F0(t, w) = P(p_i <= t | W = w)` for a true null `i`.

mod config;
mod dist;
mod factor;
mod gaussian;

pub use config::{AltMeans, ExperimentConfig, Hypotheses, PValueSample};
pub use dist::{FactorDist, LoadingDist, NoiseDist};
pub use factor::FactorModel;
pub use gaussian::GaussGeneral;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{composite_gauss_legendre, std_normal_pdf, std_normal_upper, std_normal_upper_inv, QuadratureRule};

/// Joint distribution of the noise vector `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub enum NoiseModel {
    Independent,
    /// `Y_i = sqrt(rho) W + sqrt(1 - rho) zeta_i`.
    GaussEqui { rho: f64 },
    GaussGeneral(GaussGeneral),
    Factor(FactorModel),
    /// `Y_i = eps_i sqrt(rho) W + sqrt(1 - rho) zeta_i`, `P(eps_i = 1) = a`,
    /// `P(eps_i = -1) = 1 - a`.
    AltEqui { rho: f64, a: f64 },
}

/// JSON form of a [`NoiseModel`], tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Independent,
    GaussEqui { rho: f64 },
    GaussGeneral { gamma: Vec<Vec<f64>> },
    Factor { c: LoadingDist, w: FactorDist, xi: NoiseDist },
    AltEqui { rho: f64, a: f64 },
}

impl TryFrom<ModelSpec> for NoiseModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Independent => Ok(NoiseModel::Independent),
            ModelSpec::GaussEqui { rho } => NoiseModel::gauss_equi(rho),
            ModelSpec::GaussGeneral { gamma } => Ok(NoiseModel::GaussGeneral(GaussGeneral::from_rows(&gamma)?)),
            ModelSpec::Factor { c, w, xi } => Ok(NoiseModel::Factor(FactorModel::new(c, w, xi)?)),
            ModelSpec::AltEqui { rho, a } => NoiseModel::alt_equi(rho, a),
        }
    }
}

impl From<NoiseModel> for ModelSpec {
    fn from(model: NoiseModel) -> Self {
        match model {
            NoiseModel::Independent => ModelSpec::Independent,
            NoiseModel::GaussEqui { rho } => ModelSpec::GaussEqui { rho },
            NoiseModel::GaussGeneral(g) => ModelSpec::GaussGeneral { gamma: g.rows() },
            NoiseModel::Factor(f) => ModelSpec::Factor { c: f.c, w: f.w, xi: f.xi },
            NoiseModel::AltEqui { rho, a } => ModelSpec::AltEqui { rho, a },
        }
    }
}

/// `f(t, w, rho) = Phibar((Phibar^{-1}(t) - sqrt(rho) w) / sqrt(1 - rho))`.
pub fn f_equi(t: f64, w: f64, rho: f64) -> Result<f64> {
    check_probability(t)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!("f_equi needs rho in [0,1), got {rho}")));
    }
    Ok(EquiKernel::new(t, rho).at(w))
}

fn check_probability(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("probability must lie in [0,1], got {t}")));
    }
    Ok(())
}

/// `f(t, ., rho)` with the `t`-dependent quantile precomputed.
#[derive(Debug, Clone, Copy)]
struct EquiKernel {
    t: f64,
    q: f64,
    sqrt_rho: f64,
    sqrt_1m_rho: f64,
    rho: f64,
}

impl EquiKernel {
    fn new(t: f64, rho: f64) -> Self {
        let q = if t > 0.0 && t < 1.0 { std_normal_upper_inv(t).unwrap_or(0.0) } else { 0.0 };
        EquiKernel { t, q, sqrt_rho: rho.sqrt(), sqrt_1m_rho: (1.0 - rho).sqrt(), rho }
    }

    fn at(&self, w: f64) -> f64 {
        if self.t <= 0.0 {
            return 0.0;
        }
        if self.t >= 1.0 {
            return 1.0;
        }
        if self.rho == 0.0 {
            return self.t;
        }
        std_normal_upper((self.q - self.sqrt_rho * w) / self.sqrt_1m_rho)
    }
}

/// `w -> F0(t, w)` for a fixed `t`, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct ConditionalNull<'a> {
    kind: CondKind<'a>,
}

#[derive(Debug, Clone)]
enum CondKind<'a> {
    Equi(EquiKernel),
    Alt(EquiKernel, f64),
    Factor { model: &'a FactorModel, threshold: f64, t: f64 },
}

impl ConditionalNull<'_> {
    pub fn at(&self, w: f64) -> f64 {
        match &self.kind {
            CondKind::Equi(k) => k.at(w),
            CondKind::Alt(k, a) => {
                if *a == 0.0 {
                    k.at(-w)
                } else if *a == 1.0 {
                    k.at(w)
                } else {
                    (1.0 - a) * k.at(-w) + a * k.at(w)
                }
            }
            CondKind::Factor { model, threshold, t } => {
                if *t <= 0.0 {
                    0.0
                } else if *t >= 1.0 {
                    1.0
                } else {
                    model.conditional_upper(*threshold, w)
                }
            }
        }
    }
}

/// Resolution of the composite rule used for expectations over `W`.
///
/// Panels are `panel_width` standard deviations of `W` wide, each carrying a
/// `per_panel`-point Gauss-Legendre rule; kinks of the integrand are added as
/// extra panel boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentResolution {
    pub panel_width: f64,
    pub per_panel: usize,
}

impl Default for LatentResolution {
    fn default() -> Self {
        LatentResolution { panel_width: 0.125, per_panel: 10 }
    }
}

impl LatentResolution {
    /// Same rule family with panels half as wide.
    pub fn refined(&self) -> Self {
        LatentResolution { panel_width: 0.5 * self.panel_width, per_panel: self.per_panel }
    }
}

/// Standard normal mass beyond this many standard deviations is below 1e-18
/// and is dropped from latent rules.
const NORMAL_SPAN: f64 = 8.8;

impl NoiseModel {
    pub fn gauss_equi(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Model(format!("equicorrelation must lie in [0,1], got {rho}")));
        }
        Ok(NoiseModel::GaussEqui { rho })
    }

    pub fn alt_equi(rho: f64, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&a) {
            return Err(Error::Model(format!("alt-equi needs rho, a in [0,1], got rho={rho}, a={a}")));
        }
        Ok(NoiseModel::AltEqui { rho, a })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            NoiseModel::Independent => "independent",
            NoiseModel::GaussEqui { .. } => "gauss_equi",
            NoiseModel::GaussGeneral(_) => "gauss_general",
            NoiseModel::Factor(_) => "factor",
            NoiseModel::AltEqui { .. } => "alt_equi",
        }
    }

    /// Distribution of the scalar latent factor, if the model has one.
    pub fn factor_dist(&self) -> Option<FactorDist> {
        match self {
            NoiseModel::GaussEqui { .. } | NoiseModel::AltEqui { .. } => Some(FactorDist::STANDARD_NORMAL),
            NoiseModel::Factor(f) => Some(f.w),
            NoiseModel::Independent | NoiseModel::GaussGeneral(_) => None,
        }
    }

    /// Whether `w -> F0(t, w)` is nondecreasing for every `t`.
    pub fn is_positively_dependent(&self) -> bool {
        match *self {
            NoiseModel::GaussEqui { .. } | NoiseModel::Factor(_) => true,
            NoiseModel::AltEqui { rho, a } => rho == 0.0 || a == 1.0,
            NoiseModel::Independent | NoiseModel::GaussGeneral(_) => false,
        }
    }

    /// Marginal upper tail `Fbar(x) = P(Y_1 >= x)`.
    pub fn marginal_upper(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Factor(f) => f.marginal_upper(x),
            _ => std_normal_upper(x),
        }
    }

    /// `w -> F0(t, w)`.
    pub fn conditional_null(&self, t: f64) -> Result<ConditionalNull<'_>> {
        check_probability(t)?;
        let kind = match *self {
            NoiseModel::GaussEqui { rho } => {
                if rho >= 1.0 {
                    return Err(Error::domain("F0 is degenerate at rho = 1"));
                }
                CondKind::Equi(EquiKernel::new(t, rho))
            }
            NoiseModel::AltEqui { rho, a } => {
                if rho >= 1.0 {
                    return Err(Error::domain("F0 is degenerate at rho = 1"));
                }
                CondKind::Alt(EquiKernel::new(t, rho), a)
            }
            NoiseModel::Factor(ref f) => {
                let threshold = if t > 0.0 && t < 1.0 { f.marginal_upper_inv(t)? } else { 0.0 };
                CondKind::Factor { model: f, threshold, t }
            }
            NoiseModel::Independent | NoiseModel::GaussGeneral(_) => {
                return Err(Error::unsupported(format!("{} model has no scalar factor", self.kind_name())))
            }
        };
        Ok(ConditionalNull { kind })
    }

    /// `F0(t, w)`.
    pub fn f0(&self, t: f64, w: f64) -> Result<f64> {
        Ok(self.conditional_null(t)?.at(w))
    }

    /// Two-sided analogue `F0(t/2, w) + F0(t/2, -w)`, clamped to `[0, 1]`.
    pub fn f0_two_sided(&self, t: f64, w: f64) -> Result<f64> {
        check_probability(t)?;
        if let NoiseModel::Factor(f) = self {
            if !f.is_symmetric() {
                return Err(Error::unsupported("two-sided F0 needs symmetric noise and factor distributions"));
            }
        }
        let cond = self.conditional_null(0.5 * t)?;
        Ok((cond.at(w) + cond.at(-w)).clamp(0.0, 1.0))
    }

    /// The `q` with `P(W >= q) = x`.
    pub fn w_upper_quantile(&self, x: f64) -> Result<f64> {
        match self.factor_dist() {
            Some(d) => d.upper_quantile(x),
            None => Err(Error::unsupported(format!("{} model has no scalar factor", self.kind_name()))),
        }
    }

    /// Nodes (in `W` units) and probability weights approximating `E g(W)`.
    /// `kinks` are `W` values where the integrand may lose smoothness.
    pub fn latent_rule(&self, res: LatentResolution, kinks: &[f64]) -> Result<QuadratureRule> {
        let dist = self
            .factor_dist()
            .ok_or_else(|| Error::unsupported(format!("{} model has no scalar factor", self.kind_name())))?;
        latent_rule_for(dist, res, kinks)
    }
}

pub(crate) fn latent_rule_for(dist: FactorDist, res: LatentResolution, kinks: &[f64]) -> Result<QuadratureRule> {
    if !(res.panel_width > 0.0) || res.per_panel == 0 {
        return Err(Error::domain("latent resolution needs a positive panel width and node count"));
    }
    let (lo, hi, scale, loc) = match dist {
        FactorDist::Normal { mean, sd } => (-NORMAL_SPAN, NORMAL_SPAN, sd, mean),
        FactorDist::Uniform { lo, hi } => {
            let sd = (hi - lo) / 12f64.sqrt();
            (0.0, (hi - lo) / sd, sd, lo)
        }
    };
    let panels = ((hi - lo) / res.panel_width).ceil().max(1.0) as usize;
    let mut breaks: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    for &k in kinks {
        let z = (k - loc) / scale;
        if z > lo && z < hi && breaks.iter().all(|b| (b - z).abs() > 1e-9) {
            breaks.push(z);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let base = composite_gauss_legendre(&breaks, res.per_panel)?;
    let mut nodes = Vec::with_capacity(base.len());
    let mut weights = Vec::with_capacity(base.len());
    for (&z, &wt) in base.nodes.iter().zip(&base.weights) {
        let density = match dist {
            FactorDist::Normal { .. } => std_normal_pdf(z),
            FactorDist::Uniform { .. } => 1.0 / hi,
        };
        let w = wt * density;
        if w > 0.0 {
            nodes.push(loc + scale * z);
            weights.push(w);
        }
    }
    Ok(QuadratureRule { nodes, weights })
}
