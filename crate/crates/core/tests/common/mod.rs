//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use lpsur::lp::{build_design, LpDesign};
use lpsur::samplers::{sample_std_normal_matrix, sample_uniform, RngState, SpdMatrix};
use nalgebra::{DMatrix, DVector};

/// `A Aᵀ + shift·I` with standard normal `A`.
pub fn random_spd(dim: usize, shift: f64, rng: &mut RngState) -> SpdMatrix {
    let a = sample_std_normal_matrix(dim, dim, rng);
    SpdMatrix::new(&a * a.transpose() + DMatrix::identity(dim, dim) * shift).unwrap()
}

pub fn uniform_int(lo: usize, hi: usize, rng: &mut RngState) -> usize {
    lo + ((hi - lo + 1) as f64 * sample_uniform(rng)) as usize
}

/// Dense `Φ̄ (I ⊗ Ω) Φ̄ᵀ`, with both factors assembled entry by entry.
/// `phi[0]` must be the selector vector.
pub fn dense_xi_oracle(phi: &[DVector<f64>], omega: &DMatrix<f64>) -> DMatrix<f64> {
    let m = omega.nrows();
    let p = phi.len();
    let mut bar = DMatrix::zeros(p, m * p);
    for h in 0..p {
        for j in 0..=h {
            for v in 0..m {
                bar[(h, j * m + v)] = phi[h - j][v];
            }
        }
    }
    let mut block = DMatrix::zeros(m * p, m * p);
    for b in 0..p {
        for r in 0..m {
            for c in 0..m {
                block[(b * m + r, b * m + c)] = omega[(r, c)];
            }
        }
    }
    &bar * block * bar.transpose()
}

/// SUR GLS estimate from the full normal equations
/// `(Σ⁻¹ ⊗ XᵀX) vec Θ = vec(XᵀY Σ⁻¹)`, solved by LU.
pub fn gls_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    let p = y.ncols();
    let s_inv = sigma.clone().try_inverse().unwrap();
    let xtx = x.transpose() * x;
    let mut lhs = DMatrix::zeros(k * p, k * p);
    for a in 0..p {
        for b in 0..p {
            for i in 0..k {
                for j in 0..k {
                    lhs[(a * k + i, b * k + j)] = s_inv[(a, b)] * xtx[(i, j)];
                }
            }
        }
    }
    let rhs_m = x.transpose() * y * &s_inv;
    let rhs = DVector::from_column_slice(rhs_m.as_slice());
    let sol = lhs.lu().solve(&rhs).unwrap();
    DMatrix::from_column_slice(k, p, sol.as_slice())
}

/// `(XᵀX)⁻¹ XᵀY` through the normal equations.
pub fn ols_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xtx = x.transpose() * x;
    xtx.lu().solve(&(x.transpose() * y)).unwrap()
}

/// An LP design on a random autocorrelated series with random dimensions.
pub fn random_lp_design(rng: &mut RngState) -> LpDesign {
    let m = uniform_int(1, 4, rng);
    let lags = uniform_int(1, 4, rng);
    let horizon = uniform_int(0, 5, rng);
    let t = uniform_int(60, 240, rng);
    let e = sample_std_normal_matrix(t + horizon + 1, m, rng);
    let w = DMatrix::from_fn(t + horizon, m, |i, j| e[(i + 1, j)] + 0.6 * e[(i, (j + 1) % m)]);
    let target = uniform_int(0, m - 1, rng);
    build_design(&w, target, lags, horizon).unwrap()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
