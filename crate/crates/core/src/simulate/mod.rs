//! Seeded Monte Carlo harness for FDP exceedance, k-FWER and FNR.
//!
//! Replicate `r` of a campaign draws from `replicate_rng(master_seed, r)`.
//! Replicates are grouped in fixed blocks of [`BLOCK`]; blocks run in
//! parallel and their partial sums are combined in block order, so reports
//! are bit-identical for any number of workers.

mod report;

pub use report::{Estimate, QuantilePoint, SimulationReport, FDP_HISTOGRAM_BINS};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdp_k;
use crate::models::{AltMeans, ExperimentConfig, Hypotheses, NoiseModel, PValueSample};
use crate::procedures::{PreparedProcedure, ProcedureId, ProcedureSpec};
use crate::rng::{derive_seed, replicate_rng};

/// Replicates per aggregation block.
pub const BLOCK: usize = 256;
/// Campaigns keep every FDP sample up to this many replicates.
pub const RETAIN_LIMIT: usize = 100_000;
/// Smallest accepted campaign size.
pub const MIN_REPS: usize = 100;

/// `V / max(R, 1)`.
pub fn fdp_of(rejected: &[usize], h: &[bool]) -> f64 {
    let v = rejected.iter().filter(|&&i| !h[i]).count();
    v as f64 / rejected.len().max(1) as f64
}

/// False nulls among the accepted hypotheses over `max(m - R, 1)`.
pub fn fnr_of(rejected: &[usize], h: &[bool]) -> f64 {
    let m = h.len();
    let false_nulls = h.iter().filter(|&&x| x).count();
    let rejected_false = rejected.iter().filter(|&&i| h[i]).count();
    (false_nulls - rejected_false) as f64 / (m - rejected.len()).max(1) as f64
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::domain("workers must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_reps(n_reps: usize) -> Result<()> {
    if n_reps < MIN_REPS {
        return Err(Error::domain(format!("need at least {MIN_REPS} replicates, got {n_reps}")));
    }
    Ok(())
}

fn blocks(n_reps: usize) -> Vec<(usize, usize)> {
    (0..n_reps.div_ceil(BLOCK)).map(|b| (b * BLOCK, ((b + 1) * BLOCK).min(n_reps))).collect()
}

/// Campaign settings beyond the procedure and the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignOptions {
    /// Keep every FDP sample; by default only up to [`RETAIN_LIMIT`] replicates.
    pub retain_samples: Option<bool>,
    pub quantile_levels: Vec<f64>,
    /// Also estimate `P(V >= k)`.
    pub kfwer_k: Option<usize>,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            retain_samples: None,
            quantile_levels: vec![0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99],
            kfwer_k: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    n: usize,
    exceed: usize,
    kfwe: usize,
    fdp_sum: f64,
    fdp_sq: f64,
    fnr_sum: f64,
    fnr_sq: f64,
    rejections: f64,
    fdp_counts: BTreeMap<u64, u64>,
    samples: Vec<f64>,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.n += other.n;
        self.exceed += other.exceed;
        self.kfwe += other.kfwe;
        self.fdp_sum += other.fdp_sum;
        self.fdp_sq += other.fdp_sq;
        self.fnr_sum += other.fnr_sum;
        self.fnr_sq += other.fnr_sq;
        self.rejections += other.rejections;
        for (k, c) in other.fdp_counts {
            *self.fdp_counts.entry(k).or_insert(0) += c;
        }
        self.samples.extend(other.samples);
    }
}

/// Monte Carlo campaign of `spec` under `config`.
pub fn run_campaign(
    spec: &ProcedureSpec,
    config: &ExperimentConfig,
    n_reps: usize,
    master_seed: u64,
    options: &CampaignOptions,
) -> Result<SimulationReport> {
    config.validate()?;
    check_reps(n_reps)?;
    let prepared = with_workers(options.workers, || PreparedProcedure::prepare(spec, &config.noise, config.m))??;
    run_prepared(&prepared, config, n_reps, master_seed, options)
}

/// [`run_campaign`] with critical values computed beforehand.
pub fn run_prepared(
    prepared: &PreparedProcedure,
    config: &ExperimentConfig,
    n_reps: usize,
    master_seed: u64,
    options: &CampaignOptions,
) -> Result<SimulationReport> {
    config.validate()?;
    check_reps(n_reps)?;
    if prepared.m != config.m {
        return Err(Error::Config(format!("procedure prepared for m = {} but the experiment has m = {}", prepared.m, config.m)));
    }
    for &q in &options.quantile_levels {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!("quantile level {q} outside [0,1]")));
        }
    }
    let alpha = prepared.spec.alpha;
    let retain = options.retain_samples.unwrap_or(n_reps <= RETAIN_LIMIT);
    let kfwer_k = options.kfwer_k;
    let run_block = |(start, end): (usize, usize)| -> Result<Tally> {
        let mut t = Tally::default();
        let mut sample = PValueSample::default();
        for r in start..end {
            config.sample_into(&mut replicate_rng(master_seed, r as u64), &mut sample);
            let out = prepared.apply(&sample.pvalues)?;
            let rejected = &out.rejected_indices;
            let v = rejected.iter().filter(|&&i| !sample.h[i]).count();
            let fdp = v as f64 / rejected.len().max(1) as f64;
            let fnr = fnr_of(rejected, &sample.h);
            t.n += 1;
            t.exceed += usize::from(v >= fdp_k(alpha, rejected.len()));
            if let Some(k) = kfwer_k {
                t.kfwe += usize::from(v >= k);
            }
            t.fdp_sum += fdp;
            t.fdp_sq += fdp * fdp;
            t.fnr_sum += fnr;
            t.fnr_sq += fnr * fnr;
            t.rejections += rejected.len() as f64;
            *t.fdp_counts.entry(fdp.to_bits()).or_insert(0) += 1;
            if retain {
                t.samples.push(fdp);
            }
        }
        Ok(t)
    };
    let parts: Vec<Result<Tally>> = with_workers(options.workers, || blocks(n_reps).into_par_iter().map(run_block).collect())?;
    let mut total = Tally::default();
    for part in parts {
        total.merge(part?);
    }
    let n = total.n as f64;
    let fdp_quantiles = options
        .quantile_levels
        .iter()
        .map(|&level| QuantilePoint { level, value: tally_quantile(&total.fdp_counts, total.n, level) })
        .collect();
    let mut histogram = vec![0u64; FDP_HISTOGRAM_BINS];
    for (&bits, &c) in &total.fdp_counts {
        let x = f64::from_bits(bits);
        histogram[((x * FDP_HISTOGRAM_BINS as f64) as usize).min(FDP_HISTOGRAM_BINS - 1)] += c;
    }
    Ok(SimulationReport {
        procedure: prepared.spec.label(),
        spec: prepared.spec.clone(),
        config: config.clone(),
        n_reps,
        master_seed,
        exceedance: Estimate::binary(total.exceed, total.n),
        mean_fdp: Estimate::mean(total.fdp_sum, total.fdp_sq, n),
        fnr: Estimate::mean(total.fnr_sum, total.fnr_sq, n),
        mean_rejections: total.rejections / n,
        kfwer: kfwer_k.map(|k| (k, Estimate::binary(total.kfwe, total.n))),
        fdp_quantiles,
        fdp_histogram: histogram,
        fdp_samples: retain.then_some(total.samples),
    })
}

/// Type-7 quantile of the sample described by `counts` (value bits ->
/// multiplicity).
fn tally_quantile(counts: &BTreeMap<u64, u64>, n: usize, level: f64) -> f64 {
    let h = (n - 1) as f64 * level;
    let lo = h.floor() as u64;
    let frac = h - lo as f64;
    let order_stat = |i: u64| {
        let mut seen = 0;
        for (&bits, &c) in counts {
            seen += c;
            if i < seen {
                return f64::from_bits(bits);
            }
        }
        unreachable!("order statistic beyond sample size")
    };
    let a = order_stat(lo);
    if frac == 0.0 || lo + 1 >= n as u64 {
        return a;
    }
    a + frac * (order_stat(lo + 1) - a)
}

/// Type-7 quantile of an unsorted sample.
pub fn type7_quantile(sample: &[f64], level: f64) -> f64 {
    let mut counts = BTreeMap::new();
    for &x in sample {
        *counts.entry(x.to_bits()).or_insert(0) += 1;
    }
    tally_quantile(&counts, sample.len(), level)
}

/// Threshold rule of [`estimate_kfwer`].
#[derive(Debug, Clone, Copy)]
pub enum KfwerRule<'a> {
    /// Reject every p-value at or below `t`.
    Fixed(f64),
    Procedure(&'a PreparedProcedure),
}

/// Frequency of `V >= k` over `n_reps` replicates.
pub fn estimate_kfwer(
    rule: KfwerRule<'_>,
    config: &ExperimentConfig,
    k: usize,
    n_reps: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Estimate> {
    config.validate()?;
    check_reps(n_reps)?;
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if let KfwerRule::Procedure(p) = rule {
        if p.m != config.m {
            return Err(Error::Config(format!("procedure prepared for m = {} but the experiment has m = {}", p.m, config.m)));
        }
    }
    let run_block = |(start, end): (usize, usize)| -> Result<usize> {
        let mut sample = PValueSample::default();
        let mut hits = 0;
        for r in start..end {
            config.sample_into(&mut replicate_rng(master_seed, r as u64), &mut sample);
            let v = match rule {
                KfwerRule::Fixed(t) => sample.pvalues.iter().zip(&sample.h).filter(|&(&p, &h)| !h && p <= t).count(),
                KfwerRule::Procedure(proc) => {
                    proc.apply(&sample.pvalues)?.rejected_indices.iter().filter(|&&i| !sample.h[i]).count()
                }
            };
            hits += usize::from(v >= k);
        }
        Ok(hits)
    };
    let parts: Vec<Result<usize>> = with_workers(workers, || blocks(n_reps).into_par_iter().map(run_block).collect())?;
    let mut hits = 0;
    for p in parts {
        hits += p?;
    }
    Ok(Estimate::binary(hits, n_reps))
}

/// One point of a power study: equicorrelated Gaussian noise, `m0 =
/// round(pi0 m)` true nulls first, every false null with mean `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub beta: f64,
    pub rho: f64,
    pub pi0: f64,
}

impl PowerPoint {
    pub fn config(&self, m: usize) -> Result<ExperimentConfig> {
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(Error::domain(format!("pi0 must lie in [0,1], got {}", self.pi0)));
        }
        let m0 = (self.pi0 * m as f64).round() as usize;
        ExperimentConfig::new(
            m,
            Hypotheses::Count { m0, uniform_mixture: false },
            AltMeans::Shared(self.beta),
            NoiseModel::gauss_equi(self.rho)?,
        )
    }
}

/// FNR of one procedure at one power point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub procedure: String,
    pub beta: f64,
    pub rho: f64,
    pub pi0: f64,
    pub fnr: Estimate,
    /// `FNR / FNR(LR)` with a delta-method standard error; `None` when
    /// `FNR(LR) = 0`.
    pub ratio_to_lr: Option<Estimate>,
}

/// Settings of [`power_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerStudy {
    pub procedures: Vec<ProcedureSpec>,
    pub grid: Vec<PowerPoint>,
    pub m: usize,
    pub n_reps: usize,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

impl PowerStudy {
    /// Procedure list with [LR] added (at the first procedure's levels) if
    /// absent, and whether it was added.
    pub fn with_lr(&self) -> Result<(Vec<ProcedureSpec>, bool)> {
        let first = self.procedures.first().ok_or_else(|| Error::Config("empty procedure list".into()))?;
        let mut procs = self.procedures.clone();
        if procs.iter().any(|p| p.id == ProcedureId::Lr) {
            return Ok((procs, false));
        }
        procs.push(ProcedureSpec::new(ProcedureId::Lr, first.alpha, first.zeta));
        Ok((procs, true))
    }
}

/// FNR of every procedure at every grid point, relative to [LR] on common
/// random numbers.
///
/// Critical values are prepared once per procedure and `rho`; grid point
/// `g` uses the replicate streams of master seed `derive_seed(master, g)`
/// for every procedure.
pub fn power_sweep(study: &PowerStudy) -> Result<Vec<PowerRow>> {
    check_reps(study.n_reps)?;
    let (procs, _) = study.with_lr()?;
    let lr_index = procs.iter().position(|p| p.id == ProcedureId::Lr).expect("LR present");
    let mut prepared: BTreeMap<u64, Vec<PreparedProcedure>> = BTreeMap::new();
    let mut rows = Vec::new();
    for (g, point) in study.grid.iter().enumerate() {
        let config = point.config(study.m)?;
        config.validate()?;
        if let std::collections::btree_map::Entry::Vacant(e) = prepared.entry(point.rho.to_bits()) {
            let list = procs
                .iter()
                .map(|spec| with_workers(study.workers, || PreparedProcedure::prepare(spec, &config.noise, study.m))?)
                .collect::<Result<Vec<_>>>()?;
            e.insert(list);
        }
        let list = &prepared[&point.rho.to_bits()];
        let seed = derive_seed(study.master_seed, g as u64);
        let np = list.len();
        // per procedure: sum f, sum f^2, sum f f_LR
        let run_block = |(start, end): (usize, usize)| -> Result<Vec<[f64; 3]>> {
            let mut acc = vec![[0.0; 3]; np];
            let mut sample = PValueSample::default();
            let mut f = vec![0.0; np];
            for r in start..end {
                config.sample_into(&mut replicate_rng(seed, r as u64), &mut sample);
                for (j, proc) in list.iter().enumerate() {
                    f[j] = fnr_of(&proc.apply(&sample.pvalues)?.rejected_indices, &sample.h);
                }
                for j in 0..np {
                    acc[j][0] += f[j];
                    acc[j][1] += f[j] * f[j];
                    acc[j][2] += f[j] * f[lr_index];
                }
            }
            Ok(acc)
        };
        let parts: Vec<Result<Vec<[f64; 3]>>> =
            with_workers(study.workers, || blocks(study.n_reps).into_par_iter().map(run_block).collect())?;
        let mut total = vec![[0.0; 3]; np];
        for part in parts {
            for (t, a) in total.iter_mut().zip(part?) {
                for i in 0..3 {
                    t[i] += a[i];
                }
            }
        }
        let n = study.n_reps as f64;
        let lr = total[lr_index];
        for (j, proc) in list.iter().enumerate() {
            let s = total[j];
            rows.push(PowerRow {
                procedure: proc.spec.label(),
                beta: point.beta,
                rho: point.rho,
                pi0: point.pi0,
                fnr: Estimate::mean(s[0], s[1], n),
                ratio_to_lr: ratio_estimate(s, lr, n, j == lr_index),
            });
        }
    }
    Ok(rows)
}

/// `mean(f) / mean(f_LR)` with the delta-method standard error of a ratio
/// of paired means.
fn ratio_estimate(s: [f64; 3], lr: [f64; 3], n: f64, is_lr: bool) -> Option<Estimate> {
    if lr[0] == 0.0 {
        return None;
    }
    if is_lr {
        return Some(Estimate { estimate: 1.0, se: 0.0 });
    }
    let (a, b) = (s[0] / n, lr[0] / n);
    let var_a = (s[1] / n - a * a).max(0.0);
    let var_b = (lr[1] / n - b * b).max(0.0);
    let cov = s[2] / n - a * b;
    let ratio = a / b;
    let var = (var_a / (b * b) - 2.0 * a * cov / (b * b * b) + a * a * var_b / (b * b * b * b)).max(0.0) / (n - 1.0);
    Some(Estimate { estimate: ratio, se: var.sqrt() })
}

#[cfg(test)]
mod tests;
