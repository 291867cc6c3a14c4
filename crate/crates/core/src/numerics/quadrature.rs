use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Default node count for expectations over a latent factor.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Nodes and probability weights approximating an expectation `E f(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum `Σ w_i f(x_i)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Golub-Welsch eigenvalues of a symmetric tridiagonal Jacobi matrix with zero
/// diagonal, sorted ascending.
fn jacobi_nodes(order: usize, offdiag: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for i in 1..order {
        let b = offdiag(i);
        jac[(i - 1, i)] = b;
        jac[(i, i - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes
}

/// Symmetrize a sorted node set around zero.
fn symmetrize(nodes: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let v = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -v;
        nodes[n - 1 - i] = v;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// Orthonormal Hermite polynomials for the standard normal weight: returns
/// `(p_n(x), p_n'(x), Σ_{j<n} p_j(x)^2)`.
fn hermite_eval(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for j in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, (n as f64).sqrt() * prev, sumsq)
}

/// Orthonormal Legendre polynomials for the uniform probability on `[-1, 1]`.
fn legendre_eval(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for j in 0..n {
        sumsq += (2 * j + 1) as f64 * cur * cur;
        let next = ((2 * j + 1) as f64 * x * cur - j as f64 * prev) / (j + 1) as f64;
        prev = cur;
        cur = next;
    }
    let nf = n as f64;
    let deriv = nf * (x * cur - prev) / (x * x - 1.0);
    let scale = (2.0 * nf + 1.0).sqrt();
    (scale * cur, scale * deriv, sumsq)
}

fn build_rule(order: usize, offdiag: impl Fn(usize) -> f64, eval: fn(usize, f64) -> (f64, f64, f64)) -> QuadratureRule {
    let mut nodes = jacobi_nodes(order, offdiag);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = eval(order, *x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    symmetrize(&mut nodes);
    let weights = nodes.iter().map(|&x| 1.0 / eval(order, x).2).collect();
    QuadratureRule { nodes, weights }
}

/// Gauss-Hermite rule for `E f(Z)`, `Z ~ N(0, 1)`: exact for polynomials of
/// degree at most `2 * order - 1`.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::domain("quadrature order must be at least 1"));
    }
    Ok(build_rule(order, |k| (k as f64).sqrt(), hermite_eval))
}

/// Gauss-Legendre rule for `E f(U)`, `U` uniform on `[lo, hi]`.
pub fn gauss_legendre_rule(order: usize, lo: f64, hi: f64) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::domain("quadrature order must be at least 1"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("invalid interval [{lo}, {hi}]")));
    }
    let kf = |k: usize| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    };
    let mut rule = build_rule(order, kf, legendre_eval);
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    for x in rule.nodes.iter_mut() {
        *x = mid + half * *x;
    }
    Ok(rule)
}

/// Composite Gauss-Legendre rule for `∫ f(x) dx` over `[breaks[0], breaks[last]]`,
/// with one `order`-point panel between consecutive breakpoints.
///
/// The weights are plain length weights; callers multiply in a density.
pub fn composite_gauss_legendre(breaks: &[f64], order: usize) -> Result<QuadratureRule> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("composite rule needs at least two increasing breakpoints"));
    }
    let base = gauss_legendre_rule(order, -1.0, 1.0)?;
    let mut nodes = Vec::with_capacity(order * (breaks.len() - 1));
    let mut weights = Vec::with_capacity(nodes.capacity());
    for w in breaks.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (&x, &wt) in base.nodes.iter().zip(&base.weights) {
            nodes.push(mid + half * x);
            // base weights are probabilities on [-1, 1]
            weights.push(2.0 * half * wt);
        }
    }
    Ok(QuadratureRule { nodes, weights })
}
