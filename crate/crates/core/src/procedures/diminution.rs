//! Diminution: scale a family of critical values until an FDP exceedance
//! bound drops below `zeta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Direction;
use crate::bounding::{check_unit, BoundingDevice, CriticalValues, LnTable};
use crate::error::{Error, Result};
use crate::{fdp_k, guarded_ceil, guarded_floor};

/// `b_alpha(u)`, the largest number of rejections that can exceed the FDP
/// level with `u` true nulls.
pub fn b_alpha(u: usize, m: usize, alpha: f64, direction: Direction) -> usize {
    let su = (guarded_ceil(u as f64 / alpha).max(1) - 1).min(m);
    match direction {
        Direction::StepUp => su,
        Direction::StepDown => (guarded_floor((m - u) as f64 / (1.0 - alpha)) + 1).min(su),
    }
}

/// `d(l, m, u)`; `d(0, m, u) = 1`.
pub fn d_func(l: usize, m: usize, u: usize, alpha: f64, direction: Direction) -> usize {
    let k = fdp_k(alpha, l);
    match direction {
        Direction::StepDown => k,
        Direction::StepUp => k.max((l + u).saturating_sub(m)),
    }
}

/// Slack of the path `u -> d(q, m, u)`.
fn d_slack(q: usize, m: usize, direction: Direction) -> Option<usize> {
    match direction {
        Direction::StepUp => Some(m - q),
        Direction::StepDown => None,
    }
}

fn check_family(c: &[f64]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::domain("empty critical value family"));
    }
    let mut prev = 0.0;
    for (i, &x) in c.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) || x < prev {
            return Err(Error::domain(format!("critical value family is not nondecreasing in [0,1] at l = {}", i + 1)));
        }
        prev = x;
    }
    Ok(())
}

/// `max_u u sum_{l <= b(u)} (c_l - c_{l-1}) / d(l, m, u)` with `c_0 = 0`.
pub fn romano_shaikh_bound(c: &[f64], alpha: f64, direction: Direction) -> Result<f64> {
    check_family(c)?;
    let m = c.len();
    let mut best: f64 = 0.0;
    for u in 1..=m {
        let b = b_alpha(u, m, alpha, direction);
        let mut sum = 0.0;
        let mut prev = 0.0;
        for (l, &cl) in c.iter().enumerate().take(b).map(|(i, x)| (i + 1, x)) {
            sum += (cl - prev) / d_func(l, m, u, alpha, direction) as f64;
            prev = cl;
        }
        best = best.max(u as f64 * sum);
    }
    Ok(best)
}

/// `inc[l-1][u]` for `l, u = 1..=m`: the smaller of the device increments
/// from `c_{l-1}` to `c_l` at `d(l-1, m, u)` and at `d(l, m, u)`.
///
/// Row `l` is the increment before truncation at `b_alpha(u)`; index 0 of
/// every row is unused.
pub fn exact_diminution_increments(
    c: &[f64],
    device: &BoundingDevice,
    alpha: f64,
    direction: Direction,
) -> Result<Vec<Vec<f64>>> {
    check_family(c)?;
    let m = c.len();
    if device.m() != m {
        return Err(Error::domain(format!("device built for m = {} but family has {m} values", device.m())));
    }
    let ln = LnTable::new(m);
    // paths[i][j] = B0(c_i, d(i - 1 + j, m, u), u) over u; c_0 = 0 needs none
    let path = |t: f64, q: usize| -> Result<Vec<f64>> {
        if q > m || t <= 0.0 {
            return Ok(vec![0.0; m + 1]);
        }
        device.path_with(t, fdp_k(alpha, q), d_slack(q, m, direction), &ln)
    };
    let paths: Vec<[Vec<f64>; 3]> = (1..=m)
        .into_par_iter()
        .map(|i| {
            let t = c[i - 1];
            Ok([path(t, i - 1)?, path(t, i)?, path(t, i + 1)?])
        })
        .collect::<Result<_>>()?;
    let zero = vec![0.0; m + 1];
    let mut inc = Vec::with_capacity(m);
    for l in 1..=m {
        let hi = &paths[l - 1];
        // c_{l-1} at d(l-1) and d(l): offsets 1 and 2 of the previous row
        let (lo_a, lo_b) = if l == 1 { (&zero, &zero) } else { (&paths[l - 2][1], &paths[l - 2][2]) };
        let row: Vec<f64> = (0..=m).map(|u| (hi[0][u] - lo_a[u]).min(hi[1][u] - lo_b[u])).collect();
        inc.push(row);
    }
    Ok(inc)
}

/// `max_u sum_{l <= b(u)} inc(l, u)` through the bounding device.
pub fn exact_diminution_bound(c: &[f64], device: &BoundingDevice, alpha: f64, direction: Direction) -> Result<f64> {
    let inc = exact_diminution_increments(c, device, alpha, direction)?;
    let m = c.len();
    let mut best: f64 = 0.0;
    for u in 1..=m {
        let b = b_alpha(u, m, alpha, direction);
        let s: f64 = inc.iter().take(b).map(|row| row[u]).sum();
        best = best.max(s);
    }
    Ok(best)
}

/// Which bound the calibration keeps below `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// The dependence-free bound only.
    Rs,
    /// The bounding-device bound only.
    Ex,
    /// The minimum of both.
    Min,
}

/// Grid search parameters of [`calibrate_diminution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiminutionSearch {
    pub x_max: f64,
    pub grid_points: usize,
    pub rounds: usize,
}

impl Default for DiminutionSearch {
    fn default() -> Self {
        DiminutionSearch { x_max: 10.0, grid_points: 64, rounds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiminutionCalibration {
    pub x_star: f64,
    pub bound_at_x_star: f64,
    pub which: BoundKind,
    pub critical_values: CriticalValues,
    /// The largest grid point `x_max` was feasible.
    pub hit_bracket: bool,
    /// No feasible `x > 0` was found.
    pub degenerate: bool,
}

/// `c_l(x) = min(1, x base_l)`.
pub fn scaled_family(base: &CriticalValues, x: f64) -> Vec<f64> {
    base.taus.iter().map(|&t| (x * t).min(1.0)).collect()
}

/// Value of the selected bound for the family `c`.
pub fn diminution_bound(
    c: &[f64],
    device: Option<&BoundingDevice>,
    which: BoundKind,
    alpha: f64,
    direction: Direction,
) -> Result<f64> {
    let need_device = || device.ok_or_else(|| Error::Config("the exact diminution bound needs a bounding device".into()));
    match which {
        BoundKind::Rs => romano_shaikh_bound(c, alpha, direction),
        BoundKind::Ex => exact_diminution_bound(c, need_device()?, alpha, direction),
        BoundKind::Min => {
            let rs = romano_shaikh_bound(c, alpha, direction)?;
            Ok(rs.min(exact_diminution_bound(c, need_device()?, alpha, direction)?))
        }
    }
}

/// Largest `x` on a refining grid with `bound(c(x)) <= zeta`, for the family
/// `c_l(x) = min(1, x base_l)`.
///
/// Each round evaluates `grid_points` equispaced points of the current
/// bracket, keeps the largest feasible one and refines between it and its
/// right neighbour. The bound at the result is re-evaluated as a certificate.
pub fn calibrate_diminution(
    base: &CriticalValues,
    device: Option<&BoundingDevice>,
    which: BoundKind,
    alpha: f64,
    zeta: f64,
    direction: Direction,
    search: DiminutionSearch,
) -> Result<DiminutionCalibration> {
    check_unit("zeta", zeta)?;
    if !(search.x_max > 0.0 && search.x_max.is_finite()) || search.grid_points < 2 {
        return Err(Error::domain("diminution search needs x_max > 0 and at least two grid points"));
    }
    let bound = |x: f64| diminution_bound(&scaled_family(base, x), device, which, alpha, direction);
    let (mut lo, mut hi) = (0.0, search.x_max);
    // c(0) = 0 makes x = 0 feasible; every bracket starts at a feasible point
    let mut x_star = 0.0;
    let mut hit_bracket = false;
    let n = search.grid_points;
    for round in 0..=search.rounds {
        let xs: Vec<f64> = (1..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = xs.par_iter().map(|&x| bound(x)).collect::<Result<_>>()?;
        match values.iter().rposition(|&v| v <= zeta) {
            Some(j) if j == xs.len() - 1 => {
                x_star = xs[j];
                hit_bracket = round == 0;
                break;
            }
            Some(j) => {
                x_star = xs[j];
                lo = xs[j];
                hi = xs[j + 1];
            }
            None => hi = xs[0],
        }
    }
    let degenerate = x_star == 0.0;
    let certificate = bound(x_star)?;
    if certificate > zeta {
        return Err(Error::Numerical(format!("diminution certificate fails: bound {certificate} > zeta {zeta} at x = {x_star}")));
    }
    let source = match which {
        BoundKind::Rs => "dim_rs",
        BoundKind::Ex => "dim_ex",
        BoundKind::Min => "dim_min",
    };
    let critical_values = CriticalValues::new(scaled_family(base, x_star), base.mode, source, alpha, Some(zeta))?;
    Ok(DiminutionCalibration { x_star, bound_at_x_star: certificate, which, critical_values, hit_bracket, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NoiseModel;
    use crate::numerics::std_normal_pdf;
    use crate::procedures::values::lr_values;

    #[test]
    fn b_and_d_examples() {
        assert_eq!(b_alpha(15, 30, 0.2, Direction::StepUp), 30);
        assert_eq!(b_alpha(3, 30, 0.2, Direction::StepUp), 14);
        // step-down with u = m: first term floor(0) + 1
        assert_eq!(b_alpha(30, 30, 0.2, Direction::StepDown), 1);
        assert_eq!(b_alpha(20, 30, 0.2, Direction::StepDown), 13);
        assert_eq!(d_func(28, 30, 15, 0.2, Direction::StepUp), 13);
        assert_eq!(d_func(28, 30, 29, 0.2, Direction::StepUp), 27);
        assert_eq!(d_func(28, 30, 15, 0.2, Direction::StepDown), 6);
        assert_eq!(d_func(0, 30, 30, 0.2, Direction::StepUp), 1);
        assert_eq!(d_func(0, 30, 30, 0.2, Direction::StepDown), 1);
    }

    #[test]
    fn romano_shaikh_hand_case() {
        // m = 3, alpha = 1/2, step-up:
        // u=1: 1 * 0.01; u=2: 2 * (0.01 + 0.01/2 + 0.01/2); u=3: 3 * (0.01 + 0.01/2 + 0.01/3)
        let c = [0.01, 0.02, 0.03];
        let got = romano_shaikh_bound(&c, 0.5, Direction::StepUp).unwrap();
        assert!((got - 0.055).abs() < 1e-15, "{got}");
        assert_eq!(romano_shaikh_bound(&[0.0; 3], 0.5, Direction::StepUp).unwrap(), 0.0);
        assert!(romano_shaikh_bound(&[0.02, 0.01], 0.5, Direction::StepUp).is_err());
    }

    #[test]
    fn romano_shaikh_nondecreasing_in_x() {
        let base = lr_values(0.1, 0.05, 50).unwrap();
        for direction in [Direction::StepUp, Direction::StepDown] {
            let mut prev = 0.0;
            for j in 0..=40 {
                let v = romano_shaikh_bound(&scaled_family(&base, j as f64 * 0.25), 0.1, direction).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    /// `P(at least k of u nulls <= t)` by enumeration of null subsets,
    /// given the common conditional probability `p`.
    fn subset_tail(p: f64, k: usize, u: usize) -> f64 {
        (0u32..1 << u)
            .filter(|s| s.count_ones() as usize >= k)
            .map(|s| p.powi(s.count_ones() as i32) * (1.0 - p).powi((u - s.count_ones() as usize) as i32))
            .sum()
    }

    /// The exact bound written out literally, with `B0` from `prob`.
    fn literal_bound(c: &[f64], alpha: f64, direction: Direction, prob: impl Fn(f64, usize, usize) -> f64) -> f64 {
        let m = c.len();
        let cl = |l: usize| if l == 0 { 0.0 } else { c[l - 1] };
        let b0 = |t: f64, k: usize, u: usize| if t == 0.0 || k > u { 0.0 } else { prob(t, k, u) };
        (1..=m)
            .map(|u| {
                (1..=b_alpha(u, m, alpha, direction))
                    .map(|l| {
                        let d0 = d_func(l - 1, m, u, alpha, direction);
                        let d1 = d_func(l, m, u, alpha, direction);
                        (b0(cl(l), d0, u) - b0(cl(l - 1), d0, u)).min(b0(cl(l), d1, u) - b0(cl(l - 1), d1, u))
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn exact_bound_matches_literal_small_m() {
        let c = [0.02, 0.05, 0.2];
        for alpha in [0.3, 0.5] {
            for direction in [Direction::StepUp, Direction::StepDown] {
                let device = BoundingDevice::exact_independent(3);
                let got = exact_diminution_bound(&c, &device, alpha, direction).unwrap();
                let want = literal_bound(&c, alpha, direction, subset_tail);
                assert!((got - want).abs() < 1e-14, "{got} vs {want}");

                // equicorrelated nulls: midpoint rule over the factor
                let rho: f64 = 0.4;
                let model = NoiseModel::gauss_equi(rho).unwrap();
                let device = BoundingDevice::exact(3, &model).unwrap();
                let got = exact_diminution_bound(&c, &device, alpha, direction).unwrap();
                let want = literal_bound(&c, alpha, direction, |t, k, u| {
                    let h = 1e-3;
                    (0..18_000)
                        .map(|i| {
                            let w = -9.0 + (i as f64 + 0.5) * h;
                            h * std_normal_pdf(w) * subset_tail(model.f0(t, w).unwrap(), k, u)
                        })
                        .sum()
                });
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn exact_increments_nonnegative() {
        let model = NoiseModel::gauss_equi(0.2).unwrap();
        let device = BoundingDevice::exact(40, &model).unwrap();
        let base = lr_values(0.2, 0.05, 40).unwrap();
        for x in [0.5, 1.0, 3.0] {
            for direction in [Direction::StepUp, Direction::StepDown] {
                let inc = exact_diminution_increments(&scaled_family(&base, x), &device, 0.2, direction).unwrap();
                for row in &inc {
                    for &v in &row[1..] {
                        assert!(v >= -1e-14, "{v}");
                    }
                }
            }
        }
    }

    #[test]
    fn calibration_certificate() {
        let m = 40;
        let base = lr_values(0.2, 0.05, m).unwrap();
        let model = NoiseModel::gauss_equi(0.1).unwrap();
        let device = BoundingDevice::exact(m, &model).unwrap();
        let search = DiminutionSearch::default();
        let rs = calibrate_diminution(&base, None, BoundKind::Rs, 0.2, 0.05, Direction::StepUp, search).unwrap();
        let both = calibrate_diminution(&base, Some(&device), BoundKind::Min, 0.2, 0.05, Direction::StepUp, search).unwrap();
        for cal in [&rs, &both] {
            assert!(!cal.degenerate && !cal.hit_bracket);
            assert!(cal.bound_at_x_star <= 0.05);
            let again = diminution_bound(&cal.critical_values.taus, Some(&device), cal.which, 0.2, Direction::StepUp).unwrap();
            assert!(again <= 0.05);
        }
        // the minimum of both bounds can only allow a larger scale, up to grid resolution
        assert!(both.x_star >= rs.x_star - 10.0 / 63.0);
        assert!(calibrate_diminution(&base, None, BoundKind::Ex, 0.2, 0.05, Direction::StepUp, search).is_err());
    }

    #[test]
    fn calibration_brackets() {
        let base = lr_values(0.2, 0.05, 20).unwrap();
        let search = DiminutionSearch { x_max: 1.0, ..Default::default() };
        let cal = calibrate_diminution(&base, None, BoundKind::Rs, 0.2, 0.99, Direction::StepUp, search).unwrap();
        assert!(cal.hit_bracket && cal.x_star == 1.0);
        let cal = calibrate_diminution(&base, None, BoundKind::Rs, 0.2, 1e-12, Direction::StepUp, search).unwrap();
        assert!(cal.degenerate && cal.x_star == 0.0 && cal.bound_at_x_star == 0.0);
    }
}
