use serde::{Deserialize, Serialize};

use crate::bounding::CriticalValues;
use crate::error::{Error, Result};

/// Step direction of a threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    #[serde(alias = "su")]
    StepUp,
    #[serde(alias = "sd")]
    StepDown,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "su" | "step_up" | "stepup" => Ok(Direction::StepUp),
            "sd" | "step_down" | "stepdown" => Ok(Direction::StepDown),
            _ => Err(Error::Config(format!("unknown direction '{s}' (expected su or sd)"))),
        }
    }
}

/// Rejection of the `num_rejected` smallest p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureOutcome {
    pub num_rejected: usize,
    /// `tau_lhat` for threshold rules (the largest rejected p-value for
    /// augmentation and simultaneous rules), 0 without rejections.
    pub threshold: f64,
    /// Ascending indices of the rejected hypotheses.
    pub rejected_indices: Vec<usize>,
}

/// Indices sorted by p-value, ties broken by index.
pub fn sort_order(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    idx
}

pub(crate) fn check_pvalues(p: &[f64]) -> Result<()> {
    for (i, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Data(format!("p-value at row {i} is {x}, outside [0,1]")));
        }
    }
    Ok(())
}

/// Outcome rejecting the first `n` hypotheses of `order`.
pub(crate) fn reject_smallest(order: &[usize], n: usize, threshold: f64) -> ProcedureOutcome {
    let mut rejected_indices = order[..n].to_vec();
    rejected_indices.sort_unstable();
    ProcedureOutcome { num_rejected: n, threshold, rejected_indices }
}

fn check_lengths(p: &[f64], tau: &CriticalValues) -> Result<()> {
    if p.len() != tau.m() {
        return Err(Error::Data(format!("{} p-values but {} critical values", p.len(), tau.m())));
    }
    check_pvalues(p)
}

/// `lhat = max{l : p_(l) <= tau_l}`.
pub fn step_up(p: &[f64], tau: &CriticalValues) -> Result<ProcedureOutcome> {
    check_lengths(p, tau)?;
    let order = sort_order(p);
    let lhat = (1..=p.len()).rev().find(|&l| p[order[l - 1]] <= tau.tau(l)).unwrap_or(0);
    Ok(reject_smallest(&order, lhat, tau.tau(lhat)))
}

/// `lhat = max{l : p_(l') <= tau_l' for all l' <= l}`.
pub fn step_down(p: &[f64], tau: &CriticalValues) -> Result<ProcedureOutcome> {
    check_lengths(p, tau)?;
    let order = sort_order(p);
    let lhat = (1..=p.len()).take_while(|&l| p[order[l - 1]] <= tau.tau(l)).count();
    Ok(reject_smallest(&order, lhat, tau.tau(lhat)))
}

pub fn step(p: &[f64], tau: &CriticalValues, direction: Direction) -> Result<ProcedureOutcome> {
    match direction {
        Direction::StepUp => step_up(p, tau),
        Direction::StepDown => step_down(p, tau),
    }
}
