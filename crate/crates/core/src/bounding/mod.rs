//! Bounding devices `B0(t, k, u)`, their envelopes over unknown `m0`, and
//! their inversion into k-FWE based critical values.

mod exact;
mod mc;
mod path;

use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use exact::{ExactDevice, Integration, AUTO_TARGET, DIAGNOSTIC_LIMIT};
pub use mc::{McDevice, MIN_MC_DRAWS};
pub(crate) use path::{path_k, LnTable};

use crate::error::{Error, Result};
use crate::fdp_k;
use crate::models::{ExperimentConfig, NoiseModel};
use crate::numerics::bisect_last_true;

/// Upper end of the inversion bracket.
pub const INVERT_UPPER: f64 = 1.0 - 1e-12;
/// Maximum bisection steps of the inversion.
pub const INVERT_MAX_ITER: usize = 80;

/// Which device produced a set of critical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flavor", rename_all = "snake_case")]
pub enum DeviceFlavor {
    Markov,
    KMarkov { big_k: usize },
    ExactIndependent,
    ExactFactor,
    MonteCarlo { n_draws: usize },
}

impl DeviceFlavor {
    pub fn name(&self) -> String {
        match self {
            DeviceFlavor::Markov => "markov".into(),
            DeviceFlavor::KMarkov { big_k } => format!("kmarkov{big_k}"),
            DeviceFlavor::ExactIndependent => "exact_independent".into(),
            DeviceFlavor::ExactFactor => "exact_factor".into(),
            DeviceFlavor::MonteCarlo { n_draws } => format!("mc{n_draws}"),
        }
    }
}

#[derive(Debug, Clone)]
enum KMax {
    /// `t^K` for independent nulls.
    Power,
    Latent(ExactDevice),
}

#[derive(Debug, Clone)]
enum Kind {
    Markov,
    KMarkov { big_k: usize, kmax: KMax },
    Exact(ExactDevice),
    MonteCarlo(Arc<McDevice>),
}

/// A bound `B0(t, k, u)` on `P(V(t) >= k)` over configurations with `u`
/// true nulls among `m` hypotheses.
///
/// Every device here is nondecreasing in `t` and `u` and nonincreasing in
/// `k`, which the envelopes rely on and check.
#[derive(Debug, Clone)]
pub struct BoundingDevice {
    m: usize,
    kind: Kind,
}

impl BoundingDevice {
    /// `min(1, u t / k)`.
    pub fn markov(m: usize) -> Self {
        BoundingDevice { m, kind: Kind::Markov }
    }

    /// Bound through the probability that `K` given nulls all fall below `t`.
    pub fn kmarkov(m: usize, big_k: usize, model: &NoiseModel) -> Result<Self> {
        if big_k == 0 {
            return Err(Error::domain("K-Markov device needs K >= 1"));
        }
        let kmax = match model {
            _ if big_k == 1 => KMax::Power,
            NoiseModel::Independent => KMax::Power,
            NoiseModel::GaussEqui { rho: 0.0 } => KMax::Power,
            NoiseModel::GaussGeneral(_) => {
                return Err(Error::unsupported("K-Markov device needs independent nulls or a scalar factor"))
            }
            _ => KMax::Latent(ExactDevice::factor(model, Integration::Auto, m)?),
        };
        Ok(BoundingDevice { m, kind: Kind::KMarkov { big_k, kmax } })
    }

    /// `P(Bin(u, t) >= k)`.
    pub fn exact_independent(m: usize) -> Self {
        BoundingDevice { m, kind: Kind::Exact(ExactDevice::independent(m)) }
    }

    /// `E_W P(Bin(u, F0(t, W)) >= k)` for a model with a scalar factor.
    pub fn exact_factor(m: usize, model: &NoiseModel, integration: Integration) -> Result<Self> {
        Ok(BoundingDevice { m, kind: Kind::Exact(ExactDevice::factor(model, integration, m)?) })
    }

    /// Exact device for independent nulls, factor models otherwise.
    pub fn exact(m: usize, model: &NoiseModel) -> Result<Self> {
        match model {
            NoiseModel::Independent => Ok(Self::exact_independent(m)),
            _ => Self::exact_factor(m, model, Integration::Auto),
        }
    }

    /// Empirical device from `n_draws` frozen all-null samples of `config`'s
    /// noise model, with uniformly random null sets of each size `u`.
    pub fn monte_carlo(config: &ExperimentConfig, n_draws: usize, seed: u64) -> Result<Self> {
        Self::monte_carlo_for(config.m, &config.noise, n_draws, seed)
    }

    /// [`BoundingDevice::monte_carlo`] from the dimension and noise model alone.
    pub fn monte_carlo_for(m: usize, model: &NoiseModel, n_draws: usize, seed: u64) -> Result<Self> {
        let dev = McDevice::new(m, model, n_draws, seed)?;
        Ok(BoundingDevice { m, kind: Kind::MonteCarlo(Arc::new(dev)) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn flavor(&self) -> DeviceFlavor {
        match &self.kind {
            Kind::Markov => DeviceFlavor::Markov,
            Kind::KMarkov { big_k, .. } => DeviceFlavor::KMarkov { big_k: *big_k },
            Kind::Exact(d) if d.model().is_none() => DeviceFlavor::ExactIndependent,
            Kind::Exact(_) => DeviceFlavor::ExactFactor,
            Kind::MonteCarlo(d) => DeviceFlavor::MonteCarlo { n_draws: d.n_draws() },
        }
    }

    /// The exact device behind this bound, if any.
    pub fn as_exact(&self) -> Option<&ExactDevice> {
        match &self.kind {
            Kind::Exact(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_monte_carlo(&self) -> Option<&McDevice> {
        match &self.kind {
            Kind::MonteCarlo(d) => Some(d),
            _ => None,
        }
    }

    /// `P(max of K given nulls <= t)`, the factor of the K-Markov bound.
    pub fn kmax_probability(&self, t: f64) -> Result<f64> {
        match &self.kind {
            Kind::KMarkov { big_k, kmax } => kmax_probability(kmax, *big_k, t),
            _ => Err(Error::unsupported("K-max probability is defined for K-Markov devices only")),
        }
    }

    fn check_args(&self, t: f64, u: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("t must lie in [0,1], got {t}")));
        }
        if u > self.m {
            return Err(Error::domain(format!("u = {u} exceeds m = {}", self.m)));
        }
        Ok(())
    }

    /// `B0(t, k, u)`.
    pub fn evaluate(&self, t: f64, k: usize, u: usize) -> Result<f64> {
        self.check_args(t, u)?;
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if u < k || t == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::Markov => Ok((u as f64 * t / k as f64).min(1.0)),
            Kind::KMarkov { big_k, kmax } => {
                let big_k = *big_k;
                if k >= big_k {
                    Ok((falling_ratio(u, k, big_k) * kmax_probability(kmax, big_k, t)?).min(1.0))
                } else {
                    let markov = u as f64 * t / k as f64;
                    let at_k = if big_k <= self.m {
                        falling_ratio(self.m, big_k, big_k) * kmax_probability(kmax, big_k, t)?
                    } else {
                        0.0
                    };
                    Ok(markov.max(at_k).min(1.0))
                }
            }
            Kind::Exact(d) => d.evaluate(t, k, u),
            Kind::MonteCarlo(d) => Ok(d.evaluate(t, k, u)),
        }
    }

    /// `B0(t, max(k0, u - slack), u)` for every `u = 0..=m`.
    pub fn path(&self, t: f64, k0: usize, slack: Option<usize>) -> Result<Vec<f64>> {
        self.check_args(t, 0)?;
        if let Kind::Exact(d) = &self.kind {
            return d.path(t, k0, slack, &LnTable::new(self.m));
        }
        (0..=self.m).map(|u| self.evaluate(t, path_k(k0, slack, u), u)).collect()
    }

    pub(crate) fn path_with(&self, t: f64, k0: usize, slack: Option<usize>, ln: &LnTable) -> Result<Vec<f64>> {
        if let Kind::Exact(d) = &self.kind {
            self.check_args(t, 0)?;
            return d.path(t, k0, slack, ln);
        }
        self.path(t, k0, slack)
    }

    /// `sup_{0 <= u <= m} B0(t, k, u)`.
    ///
    /// The supremum is computed literally and must agree with `B0(t, k, m)`
    /// up to rounding; the latter is returned so that envelopes and
    /// inverted critical values agree bit for bit.
    pub fn envelope_nonadaptive(&self, t: f64, k: usize) -> Result<f64> {
        if k > self.m {
            return Ok(0.0);
        }
        let mut sup: f64 = 0.0;
        for u in 0..=self.m {
            sup = sup.max(self.evaluate(t, k, u)?);
        }
        let shortcut = self.evaluate(t, k, self.m)?;
        assert!(sup <= shortcut + 1e-12, "device not monotone in u: sup {sup} vs B0(t,k,m) {shortcut}");
        Ok(shortcut)
    }

    /// `sup_{k <= k' <= l} sup_{u <= m - l + k'} B0(t, k', u)`, computed
    /// literally and returned as the agreeing `B0(t, k, m - l + k)`.
    pub fn envelope_adaptive(&self, t: f64, k: usize, l: usize) -> Result<f64> {
        if k > l {
            return Err(Error::domain(format!("adaptive envelope needs k <= l, got k = {k}, l = {l}")));
        }
        if l > self.m {
            return Err(Error::domain(format!("l = {l} exceeds m = {}", self.m)));
        }
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        let mut sup: f64 = 0.0;
        for kp in k..=l {
            for u in 0..=(self.m - l + kp) {
                sup = sup.max(self.evaluate(t, kp, u)?);
            }
        }
        let shortcut = self.evaluate(t, k, self.m - l + k)?;
        assert!(sup <= shortcut + 1e-12, "adaptive shortcut fails: sup {sup} vs B0(t,k,m-l+k) {shortcut}");
        Ok(shortcut)
    }

    /// The envelope a critical value must keep below `zeta`, through the
    /// single-point shortcut the envelopes verify.
    fn envelope_shortcut(&self, mode: Mode, t: f64, k: usize, l: usize) -> Result<f64> {
        self.evaluate(t, k, mode.null_count(self.m, k, l))
    }
}

fn kmax_probability(kmax: &KMax, big_k: usize, t: f64) -> Result<f64> {
    match kmax {
        KMax::Power => Ok(t.powi(big_k as i32)),
        KMax::Latent(d) => {
            if t <= 0.0 {
                return Ok(0.0);
            }
            let mut acc = 0.0;
            for (w, p) in d.nodes_at(t)? {
                acc += w * p.powi(big_k as i32);
            }
            Ok(acc.clamp(0.0, 1.0))
        }
    }
}

/// `u (u-1) ... (u-K+1) / (k (k-1) ... (k-K+1))`, for `k >= K`.
pub(crate) fn falling_ratio(u: usize, k: usize, big_k: usize) -> f64 {
    if u < big_k {
        return 0.0;
    }
    (0..big_k).map(|i| (u - i) as f64 / (k - i) as f64).product()
}

/// Which envelope defines the critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nonadaptive,
    Adaptive,
    Oracle { m0: usize },
}

impl Mode {
    /// Number of true nulls at which the envelope is attained.
    pub fn null_count(&self, m: usize, k: usize, l: usize) -> usize {
        match *self {
            Mode::Nonadaptive => m,
            Mode::Adaptive => m - l + k,
            Mode::Oracle { m0 } => m0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Mode::Nonadaptive => "nonadaptive".into(),
            Mode::Adaptive => "adaptive".into(),
            Mode::Oracle { m0 } => format!("oracle:{m0}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nonadaptive" => Ok(Mode::Nonadaptive),
            "adaptive" => Ok(Mode::Adaptive),
            _ => s
                .strip_prefix("oracle:")
                .and_then(|v| v.parse().ok())
                .map(|m0| Mode::Oracle { m0 })
                .ok_or_else(|| Error::Data(format!("unknown mode '{s}'"))),
        }
    }
}

/// Nondecreasing thresholds `tau_1 <= ... <= tau_m` with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub taus: Vec<f64>,
    pub mode: Mode,
    /// Device or formula that produced the values.
    pub source: String,
    pub alpha: f64,
    pub zeta: Option<f64>,
    /// Set when some `tau_l` is 1 because the envelope never exceeds `zeta`.
    #[serde(default)]
    pub degenerate: bool,
}

impl CriticalValues {
    pub fn new(taus: Vec<f64>, mode: Mode, source: impl Into<String>, alpha: f64, zeta: Option<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::Data("critical values must be nonempty".into()));
        }
        for (i, &t) in taus.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Data(format!("tau_{} = {t} lies outside [0,1]", i + 1)));
            }
            if i > 0 && t < taus[i - 1] {
                return Err(Error::Data(format!("critical values decrease at l = {}", i + 1)));
            }
        }
        Ok(CriticalValues { taus, mode, source: source.into(), alpha, zeta, degenerate: false })
    }

    pub fn m(&self) -> usize {
        self.taus.len()
    }

    /// `tau_l` for `l = 1..=m`; `tau_0 = 0`.
    pub fn tau(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.taus[l - 1]
        }
    }

    /// Table with columns `l, tau, k, mode, device, alpha, zeta, m`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Data(format!("writing critical values: {e}"));
        w.write_record(["l", "tau", "k", "mode", "device", "alpha", "zeta", "m"]).map_err(io)?;
        let m = self.m().to_string();
        let alpha = fmt17(self.alpha);
        let zeta = self.zeta.map(fmt17).unwrap_or_default();
        let mode = self.mode.label();
        for (i, &tau) in self.taus.iter().enumerate() {
            let l = i + 1;
            w.write_record([
                l.to_string(),
                fmt17(tau),
                fdp_k(self.alpha, l).to_string(),
                mode.clone(),
                self.source.clone(),
                alpha.clone(),
                zeta.clone(),
                m.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Data(format!("writing critical values: {e}")))?;
        Ok(())
    }

    /// Reads a table written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let data = |e: csv::Error| Error::Data(format!("reading critical values: {e}"));
        let headers = r.headers().map_err(data)?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("missing column '{name}'")))
        };
        let (c_tau, c_mode, c_dev, c_alpha, c_zeta) = (col("tau")?, col("mode")?, col("device")?, col("alpha")?, col("zeta")?);
        let mut taus = Vec::new();
        let mut meta = None;
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(data)?;
            let num = |c: usize| -> Result<f64> {
                rec[c].trim().parse().map_err(|_| Error::Data(format!("row {row}: bad number '{}'", &rec[c])))
            };
            taus.push(num(c_tau)?);
            if meta.is_none() {
                let zeta = if rec[c_zeta].trim().is_empty() { None } else { Some(num(c_zeta)?) };
                meta = Some((Mode::parse(rec[c_mode].trim())?, rec[c_dev].to_string(), num(c_alpha)?, zeta));
            }
        }
        let (mode, source, alpha, zeta) = meta.ok_or_else(|| Error::Data("critical value table has no rows".into()))?;
        CriticalValues::new(taus, mode, source, alpha, zeta)
    }
}

/// Seventeen significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `tau_l = max{t : envelope(t, floor(alpha l) + 1) <= zeta}` for every `l`.
///
/// Markov devices use their closed form; every other device is inverted by
/// bisection on `[0, INVERT_UPPER]`.
pub fn invert(device: &BoundingDevice, mode: Mode, alpha: f64, zeta: f64) -> Result<CriticalValues> {
    let m = device.m();
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    if let Mode::Oracle { m0 } = mode {
        if m0 > m {
            return Err(Error::domain(format!("oracle m0 = {m0} exceeds m = {m}")));
        }
    }
    let solved: Vec<Result<(f64, bool)>> = (1..=m)
        .into_par_iter()
        .map(|l| {
            let k = fdp_k(alpha, l);
            if k > l {
                return Err(Error::domain(format!("alpha = {alpha} gives k = {k} > l = {l}")));
            }
            let u = mode.null_count(m, k, l);
            if u < k {
                return Ok((1.0, true));
            }
            if let DeviceFlavor::Markov = device.flavor() {
                // closed form, stepped down by ulps if rounding lifts the
                // envelope above zeta
                let mut tau = (zeta * k as f64 / u as f64).min(1.0);
                while tau > 0.0 && device.envelope_shortcut(mode, tau, k, l)? > zeta {
                    tau = tau.next_down();
                }
                return Ok((tau, false));
            }
            if device.envelope_shortcut(mode, INVERT_UPPER, k, l)? <= zeta {
                return Ok((1.0, true));
            }
            let mut err = None;
            let tau = bisect_last_true(0.0, INVERT_UPPER, INVERT_MAX_ITER, |t| {
                match device.envelope_shortcut(mode, t, k, l) {
                    Ok(v) => v <= zeta,
                    Err(e) => {
                        err.get_or_insert(e);
                        false
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((tau, false)),
            }
        })
        .collect();
    let mut taus = Vec::with_capacity(m);
    let mut degenerate = false;
    for (i, r) in solved.into_iter().enumerate() {
        let (tau, deg) = r?;
        if deg && !matches!(mode, Mode::Oracle { .. }) {
            return Err(Error::domain(format!(
                "degenerate critical value at l = {}: the envelope stays below zeta up to t = 1",
                i + 1
            )));
        }
        degenerate |= deg;
        taus.push(tau);
    }
    for i in 1..m {
        if taus[i] < taus[i - 1] {
            if taus[i - 1] - taus[i] > 1e-12 {
                return Err(Error::Numerical(format!("inverted critical values decrease at l = {}", i + 1)));
            }
            taus[i] = taus[i - 1];
        }
    }
    let mut cv = CriticalValues::new(taus, mode, device.flavor().name(), alpha, Some(zeta))?;
    cv.degenerate = degenerate;
    Ok(cv)
}

pub(crate) fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0,1), got {x}")))
    }
}
