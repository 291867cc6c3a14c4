//! Binomial tails along a path `u -> k(u) = max(k0, u - slack)`.
//!
//! The diminution bound needs `P(Bin(u, p) >= k(u))` for every `u` at once;
//! walking `u` upward with one pmf update per step costs `O(m)` instead of
//! `m` separate tail evaluations.

use crate::numerics::ln_choose;

/// `ln n` for `n = 0..=len`, with `ln 0` unused.
#[derive(Debug, Clone)]
pub(crate) struct LnTable(Vec<f64>);

impl LnTable {
    pub(crate) fn new(len: usize) -> Self {
        LnTable((0..=len + 1).map(|n| (n as f64).ln()).collect())
    }

    #[inline]
    fn get(&self, n: usize) -> f64 {
        self.0[n]
    }
}

/// Threshold of the path at `u`.
#[inline]
pub(crate) fn path_k(k0: usize, slack: Option<usize>, u: usize) -> usize {
    match slack {
        Some(c) if u > c => k0.max(u - c),
        _ => k0,
    }
}

/// Adds `weight * P(Bin(u, p) >= k(u))` to `out[u]` for `u = 0..out.len()`.
pub(crate) fn add_path_tails(p: f64, k0: usize, slack: Option<usize>, weight: f64, ln: &LnTable, out: &mut [f64]) {
    debug_assert!(k0 >= 1);
    let m = out.len() - 1;
    if p <= 0.0 || k0 > m {
        return;
    }
    if p >= 1.0 {
        for (u, o) in out.iter_mut().enumerate() {
            if path_k(k0, slack, u) <= u {
                *o += weight;
            }
        }
        return;
    }
    let lnp = p.ln();
    let lnq = (-p).ln_1p();
    // flat part: k = k0 for u in k0..=flat_end
    let flat_end = match slack {
        Some(c) => m.min(k0 + c),
        None => m,
    };
    let mut tail = (k0 as f64 * lnp).exp();
    // ln P(Bin(u, p) = k0 - 1) at u = k0
    let mut ln_pmf = ln.get(k0) + (k0 - 1) as f64 * lnp + lnq;
    out[k0] += weight * tail;
    for u in k0..flat_end {
        tail += (lnp + ln_pmf).exp();
        out[u + 1] += weight * tail;
        ln_pmf += lnq + ln.get(u + 1) - ln.get(u + 2 - k0);
    }
    let Some(c) = slack else { return };
    if flat_end == m {
        return;
    }
    // diagonal part: P(failures <= c) for u > k0 + c
    let u0 = k0 + c;
    let mut ln_fail = ln_choose(u0 as u64, c as u64) + c as f64 * lnq + k0 as f64 * lnp;
    for u in u0..m {
        tail = (tail - (lnq + ln_fail).exp()).max(0.0);
        out[u + 1] += weight * tail;
        ln_fail += lnp + ln.get(u + 1) - ln.get(u + 1 - c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::binomial_upper_tail;

    fn check(p: f64, k0: usize, slack: Option<usize>, m: usize) {
        let ln = LnTable::new(m);
        let mut out = vec![0.0; m + 1];
        add_path_tails(p, k0, slack, 1.0, &ln, &mut out);
        for (u, &got) in out.iter().enumerate() {
            let k = path_k(k0, slack, u);
            let want = if k > u { 0.0 } else { binomial_upper_tail(u as u64, k as u64, p).unwrap() };
            // the reference tail is accurate to a few 1e-14 for n > 50
            assert!((got - want).abs() < 1e-12, "p={p} k0={k0} slack={slack:?} u={u}: {got} vs {want}");
        }
    }

    #[test]
    fn flat_paths_match_pointwise_tails() {
        for &p in &[1e-9, 1e-4, 0.013, 0.2, 0.5, 0.87, 0.999_999] {
            for k0 in [1, 2, 7, 40, 199] {
                check(p, k0, None, 200);
            }
        }
    }

    #[test]
    fn slanted_paths_match_pointwise_tails() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.9999] {
            for k0 in [1, 3, 21] {
                for c in [0, 1, 5, 60, 150, 400] {
                    check(p, k0, Some(c), 150);
                }
            }
        }
    }

    #[test]
    fn degenerate_probabilities() {
        for slack in [None, Some(0), Some(3)] {
            check(0.0, 2, slack, 10);
            check(1.0, 2, slack, 10);
        }
        let mut out = vec![0.0; 5];
        add_path_tails(0.4, 9, None, 1.0, &LnTable::new(4), &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_scales_contribution() {
        let ln = LnTable::new(30);
        let mut a = vec![0.0; 31];
        let mut b = vec![0.0; 31];
        add_path_tails(0.2, 4, Some(10), 1.0, &ln, &mut a);
        add_path_tails(0.2, 4, Some(10), 0.25, &ln, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((0.25 * x - y).abs() < 1e-16);
        }
    }
}
