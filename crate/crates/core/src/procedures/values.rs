//! Closed-form and model-based critical value families.

use crate::bounding::{check_unit, falling_ratio, invert, BoundingDevice, CriticalValues, Mode, INVERT_MAX_ITER};
use crate::error::{Error, Result};
use crate::models::NoiseModel;
use crate::numerics::{bisect_last_true, std_normal_upper, std_normal_upper_inv};
use crate::{fdp_k, guarded_ceil};

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::domain("need at least one hypothesis"));
    }
    Ok(())
}

/// Linear values `alpha l / m`.
pub fn bh_values(alpha: f64, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_m(m)?;
    let taus = (1..=m).map(|l| alpha * l as f64 / m as f64).collect();
    CriticalValues::new(taus, Mode::Nonadaptive, "bh", alpha, None)
}

/// `zeta (floor(alpha l) + 1) / m(l)` with `m(l) = m - l + floor(alpha l) + 1`.
pub fn lr_values(alpha: f64, zeta: f64, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    check_m(m)?;
    let taus = (1..=m)
        .map(|l| {
            let k = fdp_k(alpha, l);
            zeta * k as f64 / (m - l + k) as f64
        })
        .collect();
    CriticalValues::new(taus, Mode::Adaptive, "lr", alpha, Some(zeta))
}

/// Constant `zeta / m`: the Bonferroni rule as a threshold sequence.
pub fn bonferroni_values(alpha: f64, zeta: f64, m: usize) -> Result<CriticalValues> {
    check_unit("zeta", zeta)?;
    check_m(m)?;
    CriticalValues::new(vec![zeta / m as f64; m], Mode::Nonadaptive, "bonferroni", alpha, Some(zeta))
}

/// `w -> F0(t, w)` with independent nulls allowed (`F0 = t`).
fn f0(model: &NoiseModel, t: f64, w: f64) -> Result<f64> {
    match model {
        NoiseModel::Independent => Ok(t),
        _ => model.f0(t, w),
    }
}

fn factor_quantile(model: &NoiseModel, x: f64) -> Result<f64> {
    match model {
        NoiseModel::Independent => Ok(0.0),
        _ => model.w_upper_quantile(x),
    }
}

fn check_asymptotic_model(model: &NoiseModel) -> Result<()> {
    match model {
        NoiseModel::Independent => Ok(()),
        NoiseModel::GaussGeneral(_) => {
            Err(Error::Config("asymptotic critical values need a scalar factor model, got gauss_general".into()))
        }
        _ if model.is_positively_dependent() => Ok(()),
        _ => Err(Error::Config(format!("{} model is not positively dependent", model.kind_name()))),
    }
}

/// Largest `t` with `F0(t, q) <= target`, by bisection; the residual must
/// vanish to 1e-9.
fn solve_f0(model: &NoiseModel, q: f64, target: f64) -> Result<f64> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    if target >= 1.0 {
        return Ok(1.0);
    }
    let mut err = None;
    let t = bisect_last_true(0.0, 1.0, 200, |t| match f0(model, t, q) {
        Ok(v) => v <= target,
        Err(e) => {
            err.get_or_insert(e);
            false
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let residual = (f0(model, t, q)? - target).abs();
    if residual > 1e-9 {
        return Err(Error::Numerical(format!(
            "F0(., {q}) is not continuous and increasing near {t}: residual {residual:.3e} at target {target}"
        )));
    }
    Ok(t)
}

/// Closed form of `F0(t, q) = x` for Gaussian equicorrelation.
fn equi_closed_form(rho: f64, q: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(std_normal_upper(rho.sqrt() * q + (1.0 - rho).sqrt() * std_normal_upper_inv(x)?))
}

/// Values solving `F0(tau_l, q_zeta) = alpha l / m`, where `q_zeta` is the
/// upper `zeta` quantile of the factor.
///
/// Gaussian equicorrelation uses the closed form, which at `rho = 0` is the
/// linear family itself; other models invert `F0` numerically.
pub fn asymptotic_rw_values(model: &NoiseModel, alpha: f64, zeta: f64, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    check_m(m)?;
    check_asymptotic_model(model)?;
    let taus = match *model {
        NoiseModel::GaussEqui { rho: 0.0 } | NoiseModel::Independent => bh_values(alpha, m)?.taus,
        NoiseModel::GaussEqui { rho } => {
            let q = std_normal_upper_inv(zeta)?;
            (1..=m).map(|l| equi_closed_form(rho, q, alpha * l as f64 / m as f64)).collect::<Result<_>>()?
        }
        _ => return asymptotic_rw_values_generic(model, alpha, zeta, m),
    };
    CriticalValues::new(taus, Mode::Nonadaptive, "rw_asymptotic", alpha, Some(zeta))
}

/// [`asymptotic_rw_values`] through numerical inversion of `F0` for every
/// model, closed forms included.
pub fn asymptotic_rw_values_generic(model: &NoiseModel, alpha: f64, zeta: f64, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    check_m(m)?;
    check_asymptotic_model(model)?;
    let q = factor_quantile(model, zeta)?;
    let taus = (1..=m).map(|l| solve_f0(model, q, alpha * l as f64 / m as f64)).collect::<Result<_>>()?;
    CriticalValues::new(taus, Mode::Nonadaptive, "rw_asymptotic", alpha, Some(zeta))
}

/// Largest `tau_l` with
/// `F0(tau_l, q_{zeta (1 - lambda)}) <= (alpha l / m - sqrt(-ln(lambda zeta / 2) / (2 m)))_+`.
pub fn dkw_values(model: &NoiseModel, alpha: f64, zeta: f64, lambda: f64, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    check_unit("lambda", lambda)?;
    check_m(m)?;
    check_asymptotic_model(model)?;
    let pad = dkw_padding(zeta, lambda, m);
    let level = zeta * (1.0 - lambda);
    let taus = match *model {
        NoiseModel::GaussEqui { rho } if rho > 0.0 => {
            let q = std_normal_upper_inv(level)?;
            (1..=m).map(|l| equi_closed_form(rho, q, alpha * l as f64 / m as f64 - pad)).collect::<Result<_>>()?
        }
        _ => {
            let q = factor_quantile(model, level)?;
            (1..=m).map(|l| solve_f0(model, q, alpha * l as f64 / m as f64 - pad)).collect::<Result<_>>()?
        }
    };
    CriticalValues::new(taus, Mode::Nonadaptive, "dkw", alpha, Some(zeta))
}

/// `sqrt(-ln(lambda zeta / 2) / (2 m))`.
pub fn dkw_padding(zeta: f64, lambda: f64, m: usize) -> f64 {
    (-(lambda * zeta / 2.0).ln() / (2.0 * m as f64)).sqrt()
}

/// `l_K = ceil((K - 1) / alpha)`.
pub fn split_seam(alpha: f64, big_k: usize) -> usize {
    guarded_ceil((big_k - 1) as f64 / alpha)
}

/// Values mixing a K-Markov part at level `lambda zeta` with a Markov part
/// at level `(1 - lambda) zeta` below the seam `l_K`.
pub fn split_values(model: &NoiseModel, alpha: f64, zeta: f64, lambda: f64, big_k: usize, m: usize) -> Result<CriticalValues> {
    check_unit("alpha", alpha)?;
    check_unit("zeta", zeta)?;
    check_m(m)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0,1], got {lambda}")));
    }
    if big_k > 1 {
        check_asymptotic_model(model)?;
    }
    let device = BoundingDevice::kmarkov(m, big_k, model)?;
    let lz = lambda * zeta;
    // tau~_l(lambda zeta, u): K-max probability equal to
    // lambda zeta falling(k, K) / falling(u, K)
    let kmarkov_value = |l: usize, u: usize| -> Result<f64> {
        let k = fdp_k(alpha, l);
        if k < big_k || u < big_k || lz == 0.0 {
            return Ok(0.0);
        }
        if big_k == 1 {
            return Ok(lz * k as f64 / u as f64);
        }
        let target = lz / falling_ratio(u, k, big_k);
        if target >= 1.0 {
            return Ok(1.0);
        }
        let mut err = None;
        let t = bisect_last_true(0.0, 1.0, INVERT_MAX_ITER.max(200), |t| match device.kmax_probability(t) {
            Ok(v) => v <= target,
            Err(e) => {
                err.get_or_insert(e);
                false
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(t),
        }
    };
    let seam = split_seam(alpha, big_k);
    let low_cap = if seam >= 1 { kmarkov_value(seam, m)? } else { 0.0 };
    let mut taus = Vec::with_capacity(m);
    for l in 1..=m {
        let k = fdp_k(alpha, l);
        let ml = m - l + k;
        let tau = if l >= seam {
            kmarkov_value(l, ml)?
        } else {
            ((1.0 - lambda) * zeta * k as f64 / ml as f64).min(low_cap)
        };
        taus.push(tau);
    }
    CriticalValues::new(taus, Mode::Adaptive, format!("split{lambda}k{big_k}"), alpha, Some(zeta))
}

/// Adaptive values of the exact device, i.e. the k-FWE based values that
/// incorporate the model's dependence.
pub fn exact_adaptive_values(model: &NoiseModel, alpha: f64, zeta: f64, m: usize) -> Result<CriticalValues> {
    invert(&BoundingDevice::exact(m, model)?, Mode::Adaptive, alpha, zeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FactorDist, FactorModel, GaussGeneral, LoadingDist, NoiseDist};

    fn equi(rho: f64) -> NoiseModel {
        NoiseModel::gauss_equi(rho).unwrap()
    }

    #[test]
    fn bh_and_lr_examples() {
        let bh = bh_values(0.2, 4).unwrap();
        let want = [0.05, 0.10, 0.15, 0.20];
        for (a, b) in bh.taus.iter().zip(want) {
            assert!((a - b).abs() < 1e-16);
        }
        let lr = lr_values(0.1, 0.05, 37).unwrap();
        assert_eq!(lr.tau(1), 0.05 / 37.0);
        let markov = invert(&BoundingDevice::markov(37), Mode::Adaptive, 0.1, 0.05).unwrap();
        for l in 1..=37 {
            assert!((lr.tau(l) - markov.tau(l)).abs() <= 1e-15);
        }
    }

    #[test]
    fn asymptotic_values_examples() {
        let rw0 = asymptotic_rw_values(&equi(0.0), 0.2, 0.05, 50).unwrap();
        assert_eq!(rw0.taus, bh_values(0.2, 50).unwrap().taus);
        let rw = asymptotic_rw_values(&equi(0.1), 0.2, 0.05, 100).unwrap();
        let arg = 0.1f64.sqrt() * 1.644_853_626_951_472_2 + 0.9f64.sqrt() * 0.841_621_233_572_914_3;
        assert!((arg - 1.31865).abs() < 1e-4);
        assert!((rw.tau(100) - std_normal_upper(arg)).abs() < 1e-12);
        assert!((rw.tau(100) - 0.0937).abs() < 1e-4);
        assert!(matches!(
            asymptotic_rw_values(&NoiseModel::GaussGeneral(GaussGeneral::equicorrelated(3, 0.1).unwrap()), 0.2, 0.05, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn closed_form_matches_generic_inversion() {
        for rho in [0.0, 0.1, 0.5] {
            for zeta in [0.05, 0.5] {
                let a = asymptotic_rw_values(&equi(rho), 0.2, zeta, 300).unwrap();
                let b = asymptotic_rw_values_generic(&equi(rho), 0.2, zeta, 300).unwrap();
                for l in 1..=300 {
                    assert!((a.tau(l) - b.tau(l)).abs() <= 1e-10, "rho={rho} zeta={zeta} l={l}");
                }
            }
        }
    }

    #[test]
    fn generic_values_solve_defining_equation() {
        let f = FactorModel::new(
            LoadingDist::uniform(vec![0.0, 0.5, 1.0]),
            FactorDist::STANDARD_NORMAL,
            NoiseDist::Logistic { scale: 1.0 },
        )
        .unwrap();
        let model = NoiseModel::Factor(f);
        let cv = asymptotic_rw_values(&model, 0.2, 0.1, 40).unwrap();
        let q = model.w_upper_quantile(0.1).unwrap();
        for l in 1..=40 {
            assert!((model.f0(cv.tau(l), q).unwrap() - 0.2 * l as f64 / 40.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn dkw_examples() {
        assert!((dkw_padding(0.05, 0.5, 1_000_000) - 1.48e-3).abs() < 1e-5);
        let m = 1000;
        let cv = dkw_values(&equi(0.1), 0.2, 0.05, 0.5, m).unwrap();
        let pad = dkw_padding(0.05, 0.5, m);
        let rw = asymptotic_rw_values(&equi(0.1), 0.2, 0.05 * 0.5, m).unwrap();
        for l in 1..=m {
            if 0.2 * l as f64 / m as f64 <= pad {
                assert_eq!(cv.tau(l), 0.0);
            } else {
                assert!(cv.tau(l) > 0.0);
            }
            assert!(cv.tau(l) <= rw.tau(l));
        }
        // generic route agrees with the closed form
        let f = FactorModel::new(LoadingDist::point(1.0 / 3.0), FactorDist::STANDARD_NORMAL, NoiseDist::Normal { scale: 1.0 }).unwrap();
        let g = dkw_values(&NoiseModel::Factor(f), 0.2, 0.05, 0.5, m).unwrap();
        for l in 1..=m {
            assert!((g.tau(l) - cv.tau(l)).abs() < 1e-9);
        }
    }

    #[test]
    fn split_reduces_to_lr() {
        for m in [5, 60, 301] {
            for model in [NoiseModel::Independent, equi(0.3)] {
                let s = split_values(&model, 0.1, 0.05, 1.0, 1, m).unwrap();
                assert_eq!(s.taus, lr_values(0.1, 0.05, m).unwrap().taus);
            }
        }
    }

    #[test]
    fn split_seam_and_monotonicity() {
        assert_eq!(split_seam(0.2, 2), 5);
        assert_eq!(split_seam(0.1, 2), 10);
        assert_eq!(split_seam(0.3, 1), 0);
        for &alpha in &[0.05, 0.1, 0.2, 0.25] {
            for &lambda in &[0.0, 0.5, 0.95] {
                for model in [NoiseModel::Independent, equi(0.1), equi(0.3)] {
                    for big_k in [2, 3] {
                        split_values(&model, alpha, 0.05, lambda, big_k, 60).unwrap();
                    }
                }
            }
        }
        // independent K = 2: tau^2 = lambda zeta k (k-1) / (m(l) (m(l)-1))
        let (m, alpha, zeta, lambda) = (100, 0.2, 0.05, 0.5);
        let s = split_values(&NoiseModel::Independent, alpha, zeta, lambda, 2, m).unwrap();
        for l in 5..=m {
            let k = fdp_k(alpha, l) as f64;
            let ml = (m - l) as f64 + k;
            let want = (lambda * zeta * k * (k - 1.0) / (ml * (ml - 1.0))).sqrt();
            assert!((s.tau(l) - want).abs() < 1e-14);
        }
        let cap = (lambda * zeta * 2.0 / (100.0 * 99.0f64)).sqrt();
        for l in 1..5 {
            let k = fdp_k(alpha, l) as f64;
            let want = ((1.0 - lambda) * zeta * k / ((m - l) as f64 + k)).min(cap);
            assert!((s.tau(l) - want).abs() < 1e-14);
        }
    }
}
