//! Frequentist estimators for the SUR-form LP model: equation-by-equation
//! OLS, the divisor-`T` residual covariance, and iterated feasible GLS.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp::{LpCoeffs, LpDesign, ResidCov};
use crate::table::Table;

/// Relative pivot tolerance for declaring `X` rank deficient.
const RANK_TOL: f64 = 1e-10;

pub const DEFAULT_FGLS_MAX_ITER: usize = 10;
pub const DEFAULT_FGLS_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct LpEstimate {
    pub coeffs: LpCoeffs,
    pub sigma: ResidCov,
    /// `T_eff × (H+1)`, equal to `Y - X Θ̂`.
    pub residuals: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LpEstimate {
    /// Writes `theta.csv` (`K × (H+1)`) and `sigma.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path, design: &LpDesign) -> Result<()> {
        let horizons: Vec<String> = (0..self.sigma.dim()).map(|h| format!("h_{h}")).collect();

        let mut theta = Table::new(std::iter::once("regressor".to_string()).chain(horizons.iter().cloned()));
        for (i, name) in regressor_names(design).into_iter().enumerate() {
            let row: Vec<f64> = self.coeffs.theta.row(i).iter().copied().collect();
            theta.push_row(name, &row);
        }
        theta.write(&dir.join("theta.csv"))?;

        let mut sigma = Table::new(std::iter::once("row".to_string()).chain(horizons.iter().cloned()));
        for (i, name) in horizons.iter().enumerate() {
            let row: Vec<f64> = self.sigma.matrix().row(i).iter().copied().collect();
            sigma.push_row(name.clone(), &row);
        }
        sigma.write(&dir.join("sigma.csv"))
    }
}

pub fn regressor_names(design: &LpDesign) -> Vec<String> {
    let mut names = Vec::with_capacity(design.n_regressors());
    for lag in 1..=design.lags {
        for var in 1..=design.n_vars {
            names.push(format!("x_{lag}_{var}"));
        }
    }
    names.push("x_const".into());
    names
}

/// Thin QR of `X`, reused by every solve against the same regressors.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if n < k {
            return Err(Error::SeriesTooShort { usable: n, required: k });
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let q = qr.q();
        let scale = r.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (j, d) in r.diagonal().iter().enumerate() {
            if !(d.abs() > RANK_TOL * scale) {
                return Err(Error::RankDeficient { column: j, pivot: d.abs() });
            }
        }
        Ok(Self { q, r })
    }

    /// `(XᵀX)⁻¹XᵀY` as `R⁻¹ QᵀY`.
    pub fn solve(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let qty = self.q.transpose() * y;
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal")
    }

    /// `R⁻¹`, a square root of `(XᵀX)⁻¹`: `R⁻¹ R⁻ᵀ = (XᵀX)⁻¹`.
    pub fn inverse_r(&self) -> DMatrix<f64> {
        let k = self.r.ncols();
        self.r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("R has a nonzero diagonal")
    }
}

/// `Σ̂ = T_eff⁻¹ ÛᵀÛ` (no degrees-of-freedom correction).
pub fn residual_cov(residuals: &DMatrix<f64>) -> Result<ResidCov> {
    let n = residuals.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("no residual rows".into()));
    }
    ResidCov::new(residuals.transpose() * residuals / n as f64)
}

/// `Θ̂ = (XᵀX)⁻¹XᵀY` and its residuals, without the covariance step.
pub fn ols_coefficients(design: &LpDesign) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ls = LeastSquares::new(&design.x)?;
    let theta = ls.solve(&design.y);
    let residuals = &design.y - &design.x * &theta;
    Ok((theta, residuals))
}

/// OLS coefficients plus `Σ̂`. Fails with `NotSpd` when the residuals are
/// collinear (for example an exact fit).
pub fn ols_estimate(design: &LpDesign) -> Result<LpEstimate> {
    let (theta, residuals) = ols_coefficients(design)?;
    let sigma = residual_cov(&residuals)?;
    Ok(LpEstimate {
        coeffs: LpCoeffs::new(theta)?,
        sigma,
        residuals,
        iterations: 1,
        converged: true,
    })
}

/// Generalized least squares for a given `Σ`: solves the SUR normal equations
/// `(Σ⁻¹ ⊗ XᵀX) vec Θ = vec(XᵀY Σ⁻¹)` without exploiting the common-regressor
/// structure.
pub fn gls_step(design: &LpDesign, sigma: &ResidCov) -> Result<DMatrix<f64>> {
    let k = design.n_regressors();
    let p = design.n_responses();
    let sigma_inv = sigma.sigma.inverse();
    let xtx = design.x.transpose() * &design.x;
    let lhs = sigma_inv.kronecker(&xtx);
    let rhs = design.x.transpose() * &design.y * &sigma_inv;
    let rhs = DMatrix::from_column_slice(k * p, 1, rhs.as_slice());
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::not_spd("GLS normal equations"))?;
    let vec_theta = chol.solve(&rhs);
    Ok(DMatrix::from_column_slice(k, p, vec_theta.as_slice()))
}

/// OLS followed by alternating GLS and covariance updates until the relative
/// change in `vec Θ̂` drops below `tol` or `max_iter` estimates have been made.
pub fn fgls_estimate(design: &LpDesign, max_iter: usize, tol: f64) -> Result<LpEstimate> {
    let mut est = ols_estimate(design)?;
    est.converged = false;
    while est.iterations < max_iter {
        let theta = gls_step(design, &est.sigma)?;
        let change = (&theta - &est.coeffs.theta).norm() / est.coeffs.theta.norm().max(f64::MIN_POSITIVE);
        let residuals = &design.y - &design.x * &theta;
        est = LpEstimate {
            sigma: residual_cov(&residuals)?,
            coeffs: LpCoeffs::new(theta)?,
            residuals,
            iterations: est.iterations + 1,
            converged: false,
        };
        if change < tol {
            est.converged = true;
            break;
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{sample_std_normal_matrix, RngState};

    fn random_design(n: usize, k: usize, p: usize, seed: u64) -> LpDesign {
        let mut rng = RngState::new(seed, 0);
        let mut x = sample_std_normal_matrix(n, k, &mut rng);
        x.column_mut(k - 1).fill(1.0);
        let theta = sample_std_normal_matrix(k, p, &mut rng);
        let y = &x * theta + sample_std_normal_matrix(n, p, &mut rng);
        LpDesign::new(y, x, 0, k - 1, 1).unwrap()
    }

    #[test]
    fn square_design_interpolates() {
        let mut d = random_design(5, 5, 2, 1);
        d.y = sample_std_normal_matrix(5, 2, &mut RngState::new(2, 0));
        let (theta, residuals) = ols_coefficients(&d).unwrap();
        assert!(residuals.amax() < 1e-10);
        let direct = d.x.clone().try_inverse().unwrap() * &d.y;
        assert!((theta - direct).amax() < 1e-10);
        assert!(matches!(ols_estimate(&d), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn noiseless_recovery() {
        let d = random_design(40, 4, 3, 3);
        let theta0 = DMatrix::from_fn(4, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let d = LpDesign::new(&d.x * &theta0, d.x.clone(), 0, 3, 1).unwrap();
        let (theta, _) = ols_coefficients(&d).unwrap();
        assert!((theta - theta0).amax() < 1e-10);
    }

    #[test]
    fn rank_deficiency_reports_column() {
        let mut d = random_design(30, 4, 2, 4);
        let c = d.x.column(0).clone_owned();
        d.x.set_column(2, &(c * 2.0));
        match ols_estimate(&d) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn residual_orthogonality() {
        let d = random_design(200, 6, 4, 5);
        let est = ols_estimate(&d).unwrap();
        let xtu = d.x.transpose() * &est.residuals;
        let xty = d.x.transpose() * &d.y;
        assert!(xtu.amax() <= 1e-8 * xty.amax());
    }

    #[test]
    fn residual_cov_examples() {
        let r = DMatrix::<f64>::identity(4, 4);
        let s = residual_cov(&r).unwrap();
        assert!((s.matrix() - DMatrix::<f64>::identity(4, 4) / 4.0).amax() < 1e-15);

        let r = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        assert_eq!(residual_cov(&r).unwrap().matrix()[(0, 0)], 1.0);

        let collinear = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        assert!(residual_cov(&collinear).is_err());
    }

    #[test]
    fn fgls_matches_ols_with_common_regressors() {
        let d = random_design(120, 7, 5, 6);
        let ols = ols_estimate(&d).unwrap();
        let fgls = fgls_estimate(&d, DEFAULT_FGLS_MAX_ITER, DEFAULT_FGLS_TOL).unwrap();
        assert!((&fgls.coeffs.theta - &ols.coeffs.theta).amax() <= 1e-8);
        assert!(fgls.converged);
        assert_eq!(fgls.iterations, 2);
        assert!((fgls.sigma.matrix() - ols.sigma.matrix()).amax() <= 1e-10);
    }

    #[test]
    fn fgls_single_iteration_is_ols() {
        let d = random_design(50, 3, 2, 7);
        let fgls = fgls_estimate(&d, 1, 1e-8).unwrap();
        assert_eq!(fgls.iterations, 1);
        assert!(!fgls.converged);
    }

    #[test]
    fn estimate_csv_export() {
        let d = random_design(30, 3, 2, 8);
        let est = ols_estimate(&d).unwrap();
        let dir = tempfile::tempdir().unwrap();
        est.write_csv(dir.path(), &d).unwrap();
        let theta = Table::read(&dir.path().join("theta.csv")).unwrap();
        assert_eq!(theta.rows.len(), 3);
        assert_eq!(theta.header.len(), 3);
        let block = theta.numeric_block(1, &dir.path().join("theta.csv")).unwrap();
        assert_eq!(block, est.coeffs.theta);
    }
}
