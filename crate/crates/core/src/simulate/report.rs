use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounding::fmt17;
use crate::error::{Error, Result};
use crate::models::ExperimentConfig;
use crate::procedures::ProcedureSpec;

/// Bins of the FDP histogram on `[0, 1]`; FDP = 1 falls in the last bin.
pub const FDP_HISTOGRAM_BINS: usize = 20;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

impl Estimate {
    /// Frequency `hits / n` with `se = sqrt(p (1 - p) / n)`.
    pub fn binary(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Estimate { estimate: p, se: (p * (1.0 - p) / n as f64).sqrt() }
    }

    /// Sample mean from the sum and the sum of squares, with the standard
    /// error from the unbiased variance.
    pub fn mean(sum: f64, sum_sq: f64, n: f64) -> Self {
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Estimate { estimate: mean, se: (var / n).sqrt() }
    }

    /// `estimate - z se <= bound`.
    pub fn within_upper(&self, bound: f64, z: f64) -> bool {
        self.estimate - z * self.se <= bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub level: f64,
    pub value: f64,
}

/// Outcome of a Monte Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub procedure: String,
    pub spec: ProcedureSpec,
    pub config: ExperimentConfig,
    pub n_reps: usize,
    pub master_seed: u64,
    /// `P(FDP > alpha)`.
    pub exceedance: Estimate,
    pub mean_fdp: Estimate,
    pub fnr: Estimate,
    pub mean_rejections: f64,
    /// `(k, P(V >= k))` when requested.
    pub kfwer: Option<(usize, Estimate)>,
    /// Type-7 quantiles of the FDP, nondecreasing in the level.
    pub fdp_quantiles: Vec<QuantilePoint>,
    pub fdp_histogram: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fdp_samples: Option<Vec<f64>>,
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Data(format!("write failed: {e}"))
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(io)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }

    /// Column names of [`SimulationReport::csv_row`].
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "procedure",
            "m",
            "m0",
            "alpha",
            "zeta",
            "n_reps",
            "master_seed",
            "exceedance",
            "exceedance_se",
            "mean_fdp",
            "mean_fdp_se",
            "fnr",
            "fnr_se",
            "mean_rejections",
            "kfwer_k",
            "kfwer",
            "kfwer_se",
        ]
        .map(String::from)
        .to_vec();
        h.extend(self.fdp_quantiles.iter().map(|q| format!("fdp_q{}", q.level)));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let (k, kf, kse) = match self.kfwer {
            Some((k, e)) => (k.to_string(), fmt17(e.estimate), fmt17(e.se)),
            None => (String::new(), String::new(), String::new()),
        };
        let mut row = vec![
            self.procedure.clone(),
            self.config.m.to_string(),
            self.config.m0().to_string(),
            fmt17(self.spec.alpha),
            fmt17(self.spec.zeta),
            self.n_reps.to_string(),
            self.master_seed.to_string(),
            fmt17(self.exceedance.estimate),
            fmt17(self.exceedance.se),
            fmt17(self.mean_fdp.estimate),
            fmt17(self.mean_fdp.se),
            fmt17(self.fnr.estimate),
            fmt17(self.fnr.se),
            fmt17(self.mean_rejections),
            k,
            kf,
            kse,
        ];
        row.extend(self.fdp_quantiles.iter().map(|q| fmt17(q.value)));
        row
    }

    /// Header and one summary row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(self.csv_header()).map_err(io)?;
        w.write_record(self.csv_row()).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Retained FDP samples as a single `fdp` column.
    pub fn write_fdp_samples<W: Write>(&self, mut out: W) -> Result<()> {
        let samples =
            self.fdp_samples.as_ref().ok_or_else(|| Error::Config("the campaign did not retain FDP samples".into()))?;
        writeln!(out, "fdp").map_err(io)?;
        for &x in samples {
            writeln!(out, "{}", fmt17(x)).map_err(io)?;
        }
        Ok(())
    }
}
