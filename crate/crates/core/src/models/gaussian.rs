use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian noise with a general correlation matrix `Gamma` and a factor
/// `L` with `L L^T = Gamma` used for sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussGeneral {
    gamma: DMatrix<f64>,
    factor: DMatrix<f64>,
}

const NEGATIVE_EIGEN_TOL: f64 = 1e-12;

impl GaussGeneral {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        let n = gamma.nrows();
        if n == 0 || gamma.ncols() != n {
            return Err(Error::Model("correlation matrix must be square and non-empty".into()));
        }
        for i in 0..n {
            if !gamma[(i, i)].is_finite() || (gamma[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Model(format!("correlation matrix diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (gamma[(i, j)], gamma[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::Model(format!("correlation matrix not symmetric at ({i},{j})")));
                }
            }
        }
        let factor = match gamma.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = SymmetricEigen::new(gamma.clone());
                let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                if min < -NEGATIVE_EIGEN_TOL {
                    return Err(Error::Model(format!(
                        "correlation matrix is not positive semidefinite (smallest eigenvalue {min:e})"
                    )));
                }
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        Ok(GaussGeneral { gamma, factor })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Model("correlation matrix rows have unequal lengths".into()));
        }
        GaussGeneral::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Equicorrelated matrix with off-diagonal `rho`.
    pub fn equicorrelated(m: usize, rho: f64) -> Result<Self> {
        GaussGeneral::new(DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho }))
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.gamma.row(i).iter().copied().collect()).collect()
    }

    /// `out = L z`.
    pub fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(n) {
                acc += self.factor[(i, j)] * zj;
            }
            *o = acc;
        }
    }
}
