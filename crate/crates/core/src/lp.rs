//! Local projection model in SUR form.
//!
//! For a target variable `m`, row `t` of the design stacks the responses
//! `y_t = (w_t^m, .., w_{t+H}^m)` against the common regressors
//! `x_{t-1} = (w_{t-1}ᵀ, .., w_{t-L}ᵀ, 1)`, so the whole model is
//! `Y = X Θ + U` with `u_t ~ N(0, Σ)`.
//!
//! When the data come from a VMA(L) process, the residual vector is a
//! lower block-triangular combination of the shocks `ε_t..ε_{t+H}` and its
//! covariance has the closed form `Ξ = Φ̄ (I ⊗ Ω_ε) Φ̄ᵀ`.
//!
//! Variable indices are zero-based throughout this module.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dgp::VmaParams;
use crate::error::{Error, Result};
use crate::samplers::SpdMatrix;
use crate::table;

/// Stacked SUR regression data.
#[derive(Clone, Debug, PartialEq)]
pub struct LpDesign {
    /// `T_eff × (H+1)` responses.
    pub y: DMatrix<f64>,
    /// `T_eff × K` regressors, intercept last.
    pub x: DMatrix<f64>,
    pub target: usize,
    pub n_vars: usize,
    pub lags: usize,
    pub horizon: usize,
}

impl LpDesign {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, target: usize, n_vars: usize, lags: usize) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "design rows",
                expected: y.nrows(),
                actual: x.nrows(),
            });
        }
        if y.ncols() == 0 {
            return Err(Error::InvalidParameter("design needs at least one response column".into()));
        }
        let horizon = y.ncols() - 1;
        Ok(Self {
            y,
            x,
            target,
            n_vars,
            lags,
            horizon,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_responses(&self) -> usize {
        self.y.ncols()
    }

    /// Column of `X` holding `w^{var}_{t-lag}` (`lag` is one-based).
    pub fn regressor_index(&self, lag: usize, var: usize) -> usize {
        (lag - 1) * self.n_vars + var
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header: Vec<String> = (0..=self.horizon).map(|h| format!("y_{h}")).collect();
        for lag in 1..=self.lags {
            for var in 1..=self.n_vars {
                header.push(format!("x_{lag}_{var}"));
            }
        }
        header.push("x_const".into());
        let mut joined = DMatrix::zeros(self.n_rows(), self.n_responses() + self.n_regressors());
        joined.columns_mut(0, self.n_responses()).copy_from(&self.y);
        joined
            .columns_mut(self.n_responses(), self.n_regressors())
            .copy_from(&self.x);
        table::write_matrix(path, &header, &joined)
    }
}

/// Builds the design from `n_obs × M` observations `w_1..w_{T+H}`. Usable
/// rows are `t = L+1 .. T` with `T = n_obs - H`, so `T_eff = T - L`.
pub fn build_design(w: &DMatrix<f64>, target: usize, lags: usize, horizon: usize) -> Result<LpDesign> {
    let m = w.ncols();
    if target >= m {
        return Err(Error::InvalidParameter(format!(
            "target variable {target} out of range for {m} variables"
        )));
    }
    if lags == 0 {
        return Err(Error::InvalidParameter("at least one lag is required".into()));
    }
    let k = m * lags + 1;
    let sample_len = w.nrows().saturating_sub(horizon);
    let usable = sample_len.saturating_sub(lags);
    if usable < k {
        return Err(Error::SeriesTooShort { usable, required: k });
    }
    // Zero-based observation index of time t is t - 1.
    let y = DMatrix::from_fn(usable, horizon + 1, |r, h| w[(lags + r + h, target)]);
    let x = DMatrix::from_fn(usable, k, |r, c| {
        if c == k - 1 {
            1.0
        } else {
            let lag = c / m + 1;
            let var = c % m;
            w[(lags + r - lag, var)]
        }
    });
    LpDesign::new(y, x, target, m, lags)
}

/// Impulse response read off the coefficients: entry `l-1` is the horizon
/// `l-1` coefficient on `w^{shock}_{t-1}`, which estimates `Γ_l[target, shock]`
/// when the shock variable is exogenous.
pub fn irf_from_theta(theta: &DMatrix<f64>, design: &LpDesign, shock: usize, len: usize) -> Result<Vec<f64>> {
    if len > design.n_responses() {
        return Err(Error::InvalidParameter(format!(
            "impulse response of length {len} needs horizon >= {}, have {}",
            len.saturating_sub(1),
            design.horizon
        )));
    }
    let row = design.regressor_index(1, shock);
    Ok((0..len).map(|h| theta[(row, h)]).collect())
}

/// `K × (H+1)` coefficient matrix; column `h` is `θ_(h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpCoeffs {
    pub theta: DMatrix<f64>,
}

impl LpCoeffs {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(Self { theta })
    }
}

/// Covariance of the stacked residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidCov {
    pub sigma: SpdMatrix,
}

impl ResidCov {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            sigma: SpdMatrix::new(sigma)?,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.sigma.matrix()
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }
}

/// Log of the SUR density
/// `Π_t N(y_t | Θᵀx_{t-1}, Σ)`, evaluated through the Cholesky factor of `Σ`.
pub fn log_likelihood(design: &LpDesign, coeffs: &LpCoeffs, cov: &ResidCov) -> Result<f64> {
    let p = design.n_responses();
    if coeffs.theta.nrows() != design.n_regressors() || coeffs.theta.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "log_likelihood coefficients",
            expected: design.n_regressors() * p,
            actual: coeffs.theta.len(),
        });
    }
    if cov.dim() != p {
        return Err(Error::DimensionMismatch {
            context: "log_likelihood covariance",
            expected: p,
            actual: cov.dim(),
        });
    }
    let n = design.n_rows() as f64;
    let resid = &design.y - &design.x * &coeffs.theta;
    // Solve L Z = Rᵀ for all rows at once; the quadratic form is ‖Z‖².
    let z = cov
        .sigma
        .cholesky_factor()
        .solve_lower_triangular(&resid.transpose())
        .ok_or_else(|| Error::not_spd("singular covariance factor"))?;
    let quad = z.norm_squared();
    Ok(-0.5 * (p as f64) * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * cov.sigma.log_det() - 0.5 * quad)
}

/// First-lag LP coefficient vectors for the target variable. Entry 0 is
/// the selector `ι_m`; entries `1..=H` are `φ_(h),1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiFirstLag {
    pub vectors: Vec<DVector<f64>>,
}

impl PhiFirstLag {
    /// Prepends `ι_target` to the given `φ_(1)..φ_(H)`.
    pub fn new(target: usize, n_vars: usize, lagged: Vec<DVector<f64>>) -> Result<Self> {
        if target >= n_vars {
            return Err(Error::InvalidParameter(format!(
                "target variable {target} out of range for {n_vars} variables"
            )));
        }
        if let Some(bad) = lagged.iter().find(|v| v.len() != n_vars) {
            return Err(Error::DimensionMismatch {
                context: "phi vector",
                expected: n_vars,
                actual: bad.len(),
            });
        }
        let mut vectors = Vec::with_capacity(lagged.len() + 1);
        let mut iota = DVector::zeros(n_vars);
        iota[target] = 1.0;
        vectors.push(iota);
        vectors.extend(lagged);
        Ok(Self { vectors })
    }

    pub fn horizon(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.vectors[0].len()
    }
}

/// Population first-lag coefficients: `φ_(h),1` is row `target` of `Γ_h`
/// for `h ≤ L` and zero beyond the VMA order.
pub fn phi_from_gamma(params: &VmaParams, target: usize, horizon: usize) -> Result<PhiFirstLag> {
    let m = params.n_vars();
    let lagged = (1..=horizon)
        .map(|h| match params.gammas.get(h - 1) {
            Some(g) => g.row(target).transpose(),
            None => DVector::zeros(m),
        })
        .collect();
    PhiFirstLag::new(target, m, lagged)
}

/// The `(H+1) × M(H+1)` lower block-triangular loading matrix `Φ̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarPhi {
    pub rows: DMatrix<f64>,
}

impl BarPhi {
    pub fn from_phi(phi: &PhiFirstLag) -> Self {
        let m = phi.n_vars();
        let p = phi.horizon() + 1;
        let mut rows = DMatrix::zeros(p, m * p);
        for h in 0..p {
            for j in 0..=h {
                rows.view_mut((h, j * m), (1, m))
                    .copy_from(&phi.vectors[h - j].transpose());
            }
        }
        Self { rows }
    }

    /// `Φ̄ (I ⊗ Ω) Φ̄ᵀ` with the Kronecker product materialized.
    pub fn dense_xi(&self, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.rows.nrows();
        let big = DMatrix::<f64>::identity(p, p).kronecker(omega);
        &self.rows * big * self.rows.transpose()
    }
}

/// `Ξ[i,j] = Σ_{k=0..min(i,j)} φ_{i-k}ᵀ Ω φ_{j-k}`, the blockwise form of
/// `Φ̄ (I ⊗ Ω) Φ̄ᵀ`.
pub fn analytic_xi(phi: &PhiFirstLag, omega: &SpdMatrix, target: usize) -> Result<ResidCov> {
    let m = phi.n_vars();
    if omega.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "analytic_xi omega",
            expected: m,
            actual: omega.dim(),
        });
    }
    if target >= m || phi.vectors[0].iter().enumerate().any(|(i, v)| *v != if i == target { 1.0 } else { 0.0 }) {
        return Err(Error::InvalidParameter(format!(
            "phi vector 0 must be the selector for variable {target}"
        )));
    }
    let p = phi.horizon() + 1;
    let o = omega.matrix();
    let loaded: Vec<DVector<f64>> = phi.vectors.iter().map(|v| o * v).collect();
    let mut xi = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| phi.vectors[i - k].dot(&loaded[j - k])).sum();
            xi[(i, j)] = v;
            xi[(j, i)] = v;
        }
    }
    ResidCov::new(xi)
}

/// `e_h = Σ_{j=0..h} φ_{h-j}ᵀ ε_{t+j}` for one window of shocks
/// (`(H+1) × M`, row `j` = `ε_{t+j}`).
pub fn lp_residual_realization(shock_window: &DMatrix<f64>, phi: &PhiFirstLag) -> Result<DVector<f64>> {
    let p = phi.horizon() + 1;
    if shock_window.nrows() != p || shock_window.ncols() != phi.n_vars() {
        return Err(Error::DimensionMismatch {
            context: "shock window",
            expected: p * phi.n_vars(),
            actual: shock_window.len(),
        });
    }
    Ok(DVector::from_fn(p, |h, _| {
        (0..=h)
            .map(|j| phi.vectors[h - j].dot(&shock_window.row(j).transpose()))
            .sum()
    }))
}
