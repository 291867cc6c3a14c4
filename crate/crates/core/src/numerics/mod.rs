//! Special functions and quadrature used by every other module.

mod binomial;
mod normal;
mod quadrature;

pub use binomial::{binomial_upper_tail, ln_choose, ln_factorial};
pub use normal::{std_normal_pdf, std_normal_upper, std_normal_upper_inv};
pub use quadrature::{
    composite_gauss_legendre, gauss_hermite_rule, gauss_legendre_rule, QuadratureRule, DEFAULT_QUADRATURE_ORDER,
};

/// Largest `t` in `[lo, hi]` with `pred(t)` true, for a predicate that is
/// true on an initial segment. `pred(lo)` is assumed to hold.
///
/// Runs at most `max_iter` halvings and stops early once the bracket can no
/// longer be split in floating point.
pub fn bisect_last_true(mut lo: f64, mut hi: f64, max_iter: usize, mut pred: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
