//! Step-up / step-down engines and the FDP controlling procedures built on
//! them.
//!
//! A [`ProcedureSpec`] names a procedure and its parameters;
//! [`PreparedProcedure::prepare`] computes everything that does not depend
//! on the data (critical values, calibrations) so that
//! [`PreparedProcedure::apply`] is cheap enough to run inside a Monte Carlo
//! loop.

mod diminution;
mod modifications;
mod stepwise;
mod values;

pub use diminution::{
    b_alpha, calibrate_diminution, d_func, diminution_bound, exact_diminution_bound, exact_diminution_increments,
    romano_shaikh_bound, scaled_family, BoundKind, DiminutionCalibration, DiminutionSearch,
};
pub use modifications::{augmentation, first_critical_value, simultaneous_kfwe};
pub use stepwise::{sort_order, step, step_down, step_up, Direction, ProcedureOutcome};
pub use values::{
    asymptotic_rw_values, asymptotic_rw_values_generic, bh_values, bonferroni_values, dkw_padding, dkw_values,
    exact_adaptive_values, lr_values, split_seam, split_values,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounding::{invert, BoundingDevice, CriticalValues, Mode};
use crate::error::{Error, Result};
use crate::models::NoiseModel;

/// Identifiers of the available procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcedureId {
    Bonf,
    Lr,
    AugBonf,
    SimLr,
    DimMarkovLr,
    AugEx,
    SimEx,
    SplitHalf,
    Split095,
    RwExact,
    DimExEx,
    Bh,
    RwAsymp,
    Dkw,
    /// k-FWE based critical values of a chosen device and mode, unmodified.
    Raw,
}

impl ProcedureId {
    pub const ALL: [ProcedureId; 15] = [
        ProcedureId::Bonf,
        ProcedureId::Lr,
        ProcedureId::AugBonf,
        ProcedureId::SimLr,
        ProcedureId::DimMarkovLr,
        ProcedureId::AugEx,
        ProcedureId::SimEx,
        ProcedureId::SplitHalf,
        ProcedureId::Split095,
        ProcedureId::RwExact,
        ProcedureId::DimExEx,
        ProcedureId::Bh,
        ProcedureId::RwAsymp,
        ProcedureId::Dkw,
        ProcedureId::Raw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProcedureId::Bonf => "Bonf",
            ProcedureId::Lr => "LR",
            ProcedureId::AugBonf => "AugBonf",
            ProcedureId::SimLr => "SimLR",
            ProcedureId::DimMarkovLr => "DimMarkovLR",
            ProcedureId::AugEx => "AugEx",
            ProcedureId::SimEx => "SimEx",
            ProcedureId::SplitHalf => "Split1/2",
            ProcedureId::Split095 => "Split0.95",
            ProcedureId::RwExact => "RWExact",
            ProcedureId::DimExEx => "DimExEx",
            ProcedureId::Bh => "BH",
            ProcedureId::RwAsymp => "RWAsymp",
            ProcedureId::Dkw => "DKW",
            ProcedureId::Raw => "Raw",
        }
    }

    /// Case-insensitive, with or without surrounding brackets.
    pub fn parse(s: &str) -> Result<Self> {
        let bare = s.trim();
        let bare = bare.strip_prefix('[').and_then(|b| b.strip_suffix(']')).unwrap_or(bare);
        ProcedureId::ALL.into_iter().find(|id| id.name().eq_ignore_ascii_case(bare)).ok_or_else(|| {
            let names: Vec<_> = ProcedureId::ALL.iter().map(|id| format!("[{}]", id.name())).collect();
            Error::Config(format!("unknown procedure '{s}'; expected one of {}", names.join(", ")))
        })
    }

    /// Whether the procedure needs the noise model.
    pub fn uses_model(&self) -> bool {
        !matches!(
            self,
            ProcedureId::Bonf
                | ProcedureId::Lr
                | ProcedureId::AugBonf
                | ProcedureId::SimLr
                | ProcedureId::DimMarkovLr
                | ProcedureId::Bh
        )
    }
}

impl fmt::Display for ProcedureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcedureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProcedureId::parse(s)
    }
}

impl Serialize for ProcedureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ProcedureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ProcedureId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Bounding device of the [`ProcedureId::Raw`] procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceChoice {
    Markov,
    #[serde(rename = "kmarkov")]
    KMarkov,
    #[default]
    Exact,
    Mc,
}

impl DeviceChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markov" => Ok(DeviceChoice::Markov),
            "kmarkov" => Ok(DeviceChoice::KMarkov),
            "exact" => Ok(DeviceChoice::Exact),
            "mc" => Ok(DeviceChoice::Mc),
            _ => Err(Error::Config(format!("unknown device '{s}' (expected markov, kmarkov, exact or mc)"))),
        }
    }
}

/// Parameters beyond `(alpha, zeta, direction)`. Unset fields take the
/// procedure's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureOptions {
    /// Split weight (defaults 1/2 and 0.95) or DKW weight (default 1/2).
    pub lambda: Option<f64>,
    /// `K` of the split and K-Markov constructions (default 2).
    pub big_k: Option<usize>,
    pub device: DeviceChoice,
    pub mode: Mode,
    pub mc_draws: usize,
    pub mc_seed: u64,
    pub search: DiminutionSearch,
}

impl Default for ProcedureOptions {
    fn default() -> Self {
        ProcedureOptions {
            lambda: None,
            big_k: None,
            device: DeviceChoice::Exact,
            mode: Mode::Adaptive,
            mc_draws: 10_000,
            mc_seed: 0,
            search: DiminutionSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    pub id: ProcedureId,
    pub alpha: f64,
    pub zeta: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub options: ProcedureOptions,
}

impl ProcedureSpec {
    pub fn new(id: ProcedureId, alpha: f64, zeta: f64) -> Self {
        ProcedureSpec { id, alpha, zeta, direction: Direction::StepUp, options: ProcedureOptions::default() }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_options(mut self, options: ProcedureOptions) -> Self {
        self.options = options;
        self
    }

    /// Split or DKW weight after defaults.
    pub fn lambda(&self) -> f64 {
        self.options.lambda.unwrap_or(match self.id {
            ProcedureId::Split095 => 0.95,
            _ => 0.5,
        })
    }

    pub fn big_k(&self) -> usize {
        self.options.big_k.unwrap_or(2)
    }

    /// Short label, e.g. `Split1/2` or `Raw(exact, oracle:15, sd)`.
    pub fn label(&self) -> String {
        match self.id {
            ProcedureId::Raw => format!(
                "Raw({}, {}, {})",
                serde_json::to_value(self.options.device).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                self.options.mode.label(),
                match self.direction {
                    Direction::StepUp => "su",
                    Direction::StepDown => "sd",
                }
            ),
            id => id.name().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Threshold(CriticalValues),
    Augment { tau1: f64 },
    Simultaneous(CriticalValues),
}

/// A procedure with its data-independent work done.
#[derive(Debug, Clone)]
pub struct PreparedProcedure {
    pub spec: ProcedureSpec,
    pub m: usize,
    rule: Rule,
    calibration: Option<DiminutionCalibration>,
}

impl PreparedProcedure {
    /// Precomputes critical values for `m` hypotheses. Model-aware
    /// procedures see only the noise model.
    pub fn prepare(spec: &ProcedureSpec, model: &NoiseModel, m: usize) -> Result<Self> {
        let (alpha, zeta) = (spec.alpha, spec.zeta);
        if m == 0 {
            return Err(Error::domain("need at least one hypothesis"));
        }
        if let NoiseModel::GaussGeneral(g) = model {
            if g.dim() != m {
                return Err(Error::Config(format!("gauss_general model has dimension {} but m = {m}", g.dim())));
            }
        }
        let mut calibration = None;
        let rule = match spec.id {
            ProcedureId::Bonf => Rule::Threshold(bonferroni_values(alpha, zeta, m)?),
            ProcedureId::Lr => Rule::Threshold(lr_values(alpha, zeta, m)?),
            ProcedureId::Bh => Rule::Threshold(bh_values(alpha, m)?),
            ProcedureId::AugBonf => {
                crate::bounding::check_unit("zeta", zeta)?;
                Rule::Augment { tau1: zeta / m as f64 }
            }
            ProcedureId::SimLr => Rule::Simultaneous(lr_values(alpha, zeta / m as f64, m)?),
            ProcedureId::AugEx => Rule::Augment { tau1: first_critical_value(&exact_device(model, m)?, zeta)? },
            ProcedureId::SimEx => Rule::Simultaneous(exact_adaptive_values(model, alpha, zeta / m as f64, m)?),
            ProcedureId::SplitHalf | ProcedureId::Split095 => {
                Rule::Threshold(split_values(model, alpha, zeta, spec.lambda(), spec.big_k(), m)?)
            }
            ProcedureId::RwExact => Rule::Threshold(exact_adaptive_values(model, alpha, zeta, m)?),
            ProcedureId::RwAsymp => Rule::Threshold(asymptotic_rw_values(model, alpha, zeta, m)?),
            ProcedureId::Dkw => Rule::Threshold(dkw_values(model, alpha, zeta, spec.lambda(), m)?),
            ProcedureId::DimMarkovLr => {
                let base = lr_values(alpha, zeta, m)?;
                let cal = calibrate_diminution(&base, None, BoundKind::Rs, alpha, zeta, spec.direction, spec.options.search)?;
                let cv = cal.critical_values.clone();
                calibration = Some(cal);
                Rule::Threshold(cv)
            }
            ProcedureId::DimExEx => {
                let device = exact_device(model, m)?;
                let base = invert(&device, Mode::Adaptive, alpha, zeta)?;
                let cal = calibrate_diminution(
                    &base,
                    Some(&device),
                    BoundKind::Min,
                    alpha,
                    zeta,
                    spec.direction,
                    spec.options.search,
                )?;
                let cv = cal.critical_values.clone();
                calibration = Some(cal);
                Rule::Threshold(cv)
            }
            ProcedureId::Raw => {
                let device = match spec.options.device {
                    DeviceChoice::Markov => BoundingDevice::markov(m),
                    DeviceChoice::KMarkov => BoundingDevice::kmarkov(m, spec.big_k(), model)?,
                    DeviceChoice::Exact => exact_device(model, m)?,
                    DeviceChoice::Mc => {
                        BoundingDevice::monte_carlo_for(m, model, spec.options.mc_draws, spec.options.mc_seed)?
                    }
                };
                Rule::Threshold(invert(&device, spec.options.mode, alpha, zeta)?)
            }
        };
        Ok(PreparedProcedure { spec: spec.clone(), m, rule, calibration })
    }

    /// Threshold critical values, for procedures defined by them.
    pub fn critical_values(&self) -> Option<&CriticalValues> {
        match &self.rule {
            Rule::Threshold(cv) => Some(cv),
            Rule::Simultaneous(_) | Rule::Augment { .. } => None,
        }
    }

    pub fn calibration(&self) -> Option<&DiminutionCalibration> {
        self.calibration.as_ref()
    }

    pub fn apply(&self, p: &[f64]) -> Result<ProcedureOutcome> {
        if p.len() != self.m {
            return Err(Error::Data(format!("{} p-values but the procedure was prepared for m = {}", p.len(), self.m)));
        }
        match &self.rule {
            Rule::Threshold(cv) => step(p, cv, self.spec.direction),
            Rule::Augment { tau1 } => augmentation(p, *tau1, self.spec.alpha),
            Rule::Simultaneous(cv) => simultaneous_kfwe(p, cv, self.spec.alpha),
        }
    }
}

fn exact_device(model: &NoiseModel, m: usize) -> Result<BoundingDevice> {
    match model {
        NoiseModel::GaussGeneral(_) => Err(Error::Config(
            "the exact bounding device needs independent nulls or a scalar factor; use the mc device for gauss_general".into(),
        )),
        _ => BoundingDevice::exact(m, model),
    }
}
