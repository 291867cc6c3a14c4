use std::sync::OnceLock;

use crate::error::{Error, Result};

const FACTORIAL_TABLE_LEN: usize = 171;

fn ln_factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [0.0; FACTORIAL_TABLE_LEN];
        let mut fact = 1.0f64;
        for (n, slot) in out.iter_mut().enumerate().skip(1) {
            fact *= n as f64;
            *slot = fact.ln();
        }
        out
    })
}

/// `ln(n!)`, tabulated up to 170 and from Stirling's series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        return ln_factorial_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// `ln C(n, k)` for `k <= n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Upper tail `P(Bin(n, p) >= k)`.
///
/// Direct log-space summation for `n <= 50`, regularized incomplete beta
/// `I_p(k, n - k + 1)` otherwise. `k = n + 1` gives exactly 0; larger `k`
/// is a domain error.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("binomial probability must be in [0,1], got {p}")));
    }
    if k > n + 1 {
        return Err(Error::domain(format!("binomial tail needs k <= n+1, got k={k}, n={n}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if k == n + 1 || p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let value = if n <= 50 { direct_upper(n, k, p) } else { incomplete_beta_upper(n, k, p) };
    Ok(value.clamp(0.0, 1.0))
}

fn direct_upper(n: u64, k: u64, p: f64) -> f64 {
    let lp = p.ln();
    let lq = (-p).ln_1p();
    // summed from the far end so each extra term can only increase the total
    (k..=n)
        .rev()
        .map(|j| (ln_choose(n, j) + j as f64 * lp + (n - j) as f64 * lq).exp())
        .sum()
}

fn incomplete_beta_upper(n: u64, k: u64, p: f64) -> f64 {
    let a = k as f64;
    let b = (n - k + 1) as f64;
    let ln_beta = ln_factorial(k - 1) + ln_factorial(n - k) - ln_factorial(n);
    let front = (a * p.ln() + b * (-p).ln_1p() - ln_beta).exp();
    if p < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, p) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - p) / b
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    fn big_choose(n: u64, k: u64) -> BigInt {
        let mut acc = BigInt::one();
        for i in 0..k {
            acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        acc
    }

    /// Exact rational P(Bin(n, num/den) >= k).
    fn rational_tail(n: u64, k: u64, num: u64, den: u64) -> f64 {
        let mut total = BigRational::zero();
        for j in k..=n {
            let term = big_choose(n, j)
                * BigInt::from(num).pow(j as u32)
                * BigInt::from(den - num).pow((n - j) as u32);
            total += BigRational::from_integer(term);
        }
        (total / BigRational::from_integer(BigInt::from(den).pow(n as u32))).to_f64().unwrap()
    }

    #[test]
    fn spot_values() {
        assert!((binomial_upper_tail(2, 1, 0.1).unwrap() - 0.19).abs() < 1e-15);
        assert_eq!(binomial_upper_tail(5, 0, 0.3).unwrap(), 1.0);
        assert_eq!(binomial_upper_tail(5, 6, 0.3).unwrap(), 0.0);
        let want = rational_tail(30, 15, 1, 2);
        assert!((want - 0.572_232).abs() < 1e-6);
        let got = binomial_upper_tail(30, 15, 0.5).unwrap();
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(binomial_upper_tail(5, 7, 0.3).is_err());
        assert!(binomial_upper_tail(5, 2, 1.3).is_err());
        assert!(binomial_upper_tail(5, 2, f64::NAN).is_err());
    }

    #[test]
    fn matches_rational_oracle_both_regimes() {
        for &(n, num, den) in &[(20u64, 1u64, 10u64), (50, 3, 7), (51, 1, 10), (120, 1, 20), (400, 1, 2), (300, 97, 100)] {
            for k in 0..=n + 1 {
                let want = rational_tail(n, k, num, den);
                let got = binomial_upper_tail(n, k, num as f64 / den as f64).unwrap();
                if want < 1e-290 {
                    assert!(got < 1e-280);
                    continue;
                }
                let rel = ((got - want) / want).abs();
                assert!(rel <= 1e-10, "n={n} k={k} p={num}/{den}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn complement_with_direct_lower_sum() {
        for n in 0..=50u64 {
            for &p in &[0.001, 0.05, 0.3, 0.5, 0.77, 0.999] {
                for k in 0..=n + 1 {
                    let lower: f64 = (0..k)
                        .map(|j| (ln_choose(n, j) + j as f64 * f64::ln(p) + (n - j) as f64 * f64::ln(1.0 - p)).exp())
                        .sum();
                    let upper = binomial_upper_tail(n, k, p).unwrap();
                    assert!((upper + lower - 1.0).abs() <= 1e-12, "n={n} k={k} p={p}");
                }
            }
        }
    }

    #[test]
    fn monotone_on_small_grids() {
        let ps: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        for n in 0..=20u64 {
            for &p in &ps {
                let mut prev = f64::INFINITY;
                for k in 0..=n + 1 {
                    let v = binomial_upper_tail(n, k, p).unwrap();
                    assert!(v <= prev);
                    prev = v;
                }
            }
            for k in 0..=n + 1 {
                let mut prev = 0.0;
                for &p in &ps {
                    let v = binomial_upper_tail(n, k, p).unwrap();
                    assert!(v >= prev * (1.0 - 4.0 * f64::EPSILON), "n={n} k={k} p={p}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn ln_factorial_agrees_across_table_boundary() {
        let mut direct = 0.0f64;
        for n in 1..=400u64 {
            direct += (n as f64).ln();
            assert!((ln_factorial(n) - direct).abs() <= 1e-12 * direct, "n={n}");
        }
    }
}
