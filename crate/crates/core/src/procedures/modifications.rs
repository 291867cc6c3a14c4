//! Augmentation and simultaneous k-FWE rules built from 1-FWE and k-FWE
//! thresholds.

use super::stepwise::{check_pvalues, reject_smallest, sort_order, ProcedureOutcome};
use crate::bounding::{check_unit, BoundingDevice, CriticalValues, INVERT_MAX_ITER, INVERT_UPPER};
use crate::error::{Error, Result};
use crate::numerics::bisect_last_true;
use crate::{fdp_k, guarded_floor};

/// `floor(n / (1 - alpha)) ^ m`.
fn inflate(n: usize, alpha: f64, m: usize) -> usize {
    guarded_floor(n as f64 / (1.0 - alpha)).min(m)
}

fn reject_inflated(p: &[f64], n: usize) -> ProcedureOutcome {
    let order = sort_order(p);
    let threshold = if n == 0 { 0.0 } else { p[order[n - 1]] };
    reject_smallest(&order, n, threshold)
}

/// Rejects the `floor(l1 / (1 - alpha)) ^ m` smallest p-values, where `l1`
/// counts the p-values at or below `tau1`.
pub fn augmentation(p: &[f64], tau1: f64, alpha: f64) -> Result<ProcedureOutcome> {
    check_pvalues(p)?;
    check_unit("alpha", alpha)?;
    let l1 = p.iter().filter(|&&x| x <= tau1).count();
    Ok(reject_inflated(p, inflate(l1, alpha, p.len())))
}

/// Rejects the `floor(max{R(tau_l) - floor(alpha l) : l <= R(tau_l)} / (1 - alpha)) ^ m`
/// smallest p-values, with `tau` built at level `zeta / m` and `tau_0 = 0`.
pub fn simultaneous_kfwe(p: &[f64], tau_shrunk: &CriticalValues, alpha: f64) -> Result<ProcedureOutcome> {
    check_pvalues(p)?;
    check_unit("alpha", alpha)?;
    let m = p.len();
    if tau_shrunk.m() != m {
        return Err(Error::Data(format!("{m} p-values but {} critical values", tau_shrunk.m())));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = |t: f64| sorted.partition_point(|&x| x <= t);
    let best = (0..=m)
        .filter_map(|l| {
            let r = count(tau_shrunk.tau(l));
            (l <= r).then(|| r - (fdp_k(alpha, l) - 1))
        })
        .max()
        .unwrap_or(0);
    Ok(reject_inflated(p, inflate(best, alpha, m)))
}

/// `max{t : B0(t, 1, m) <= zeta}`, the first critical value of a bounding
/// device.
pub fn first_critical_value(device: &BoundingDevice, zeta: f64) -> Result<f64> {
    check_unit("zeta", zeta)?;
    let m = device.m();
    if device.evaluate(INVERT_UPPER, 1, m)? <= zeta {
        return Err(Error::domain("degenerate first critical value: the device stays below zeta up to t = 1"));
    }
    let mut err = None;
    let tau = bisect_last_true(0.0, INVERT_UPPER, INVERT_MAX_ITER, |t| match device.evaluate(t, 1, m) {
        Ok(v) => v <= zeta,
        Err(e) => {
            err.get_or_insert(e);
            false
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(tau),
    }
}
