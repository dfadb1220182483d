//! Gibbs sampler for `(Θ, Σ)` under a flat prior on `Θ` and the Jeffreys
//! prior `|Σ|^{-(H+2)/2}`:
//!
//! ```text
//! vec(Θ) | Σ ~ N(vec Θ̂_OLS, Σ ⊗ (XᵀX)⁻¹)
//! Σ | Θ      ~ IW(T_eff, (Y - XΘ)ᵀ(Y - XΘ))
//! ```
//!
//! The Θ conditional is drawn in matrix-variate form, `Θ̂ + R⁻¹ Z L_Σᵀ`, where
//! `X = QR` and `L_Σ L_Σᵀ = Σ`, so the `K(H+1)`-square precision is never built.
//!
//! Also here: the Geweke mean-equality diagnostic with a Bartlett-window
//! spectral variance, numerical standard errors, and posterior summaries.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{ols_estimate, LeastSquares};
use crate::lp::{LpCoeffs, LpDesign, ResidCov};
use crate::samplers::{lower_triangle, sample_inverse_wishart, sample_std_normal_matrix, RngState, SpdMatrix};
use crate::table::Table;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GibbsInit {
    /// Start at `Θ̂_OLS`, `Σ̂_OLS`.
    #[default]
    Ols,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Total sweeps, including burn-in.
    pub n_draws: usize,
    pub n_burn: usize,
    pub init: GibbsInit,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_draws: 11_000,
            n_burn: 1_000,
            init: GibbsInit::Ols,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_draws {
            return Err(Error::InvalidParameter(format!(
                "n_burn ({}) must be smaller than n_draws ({})",
                self.n_burn, self.n_draws
            )));
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        self.n_draws - self.n_burn
    }
}

/// Post-burn-in draws, in sampling order.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    pub theta_draws: Vec<DMatrix<f64>>,
    pub sigma_draws: Vec<DMatrix<f64>>,
    pub config: GibbsConfig,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.theta_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_draws.is_empty()
    }

    pub fn theta_chain(&self, row: usize, col: usize) -> Vec<f64> {
        self.theta_draws.iter().map(|t| t[(row, col)]).collect()
    }

    pub fn sigma_chain(&self, row: usize, col: usize) -> Vec<f64> {
        self.sigma_draws.iter().map(|s| s[(row, col)]).collect()
    }

    /// One row per draw: `draw`, `theta_<row>_<h>` (column-major), then the
    /// lower triangle of `Σ` as `sigma_<i>_<j>`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let Some(first) = self.theta_draws.first() else {
            return Err(Error::InvalidParameter("no draws to export".into()));
        };
        let (k, p) = first.shape();
        let mut header = vec!["draw".to_string()];
        for h in 0..p {
            for r in 0..k {
                header.push(format!("theta_{r}_{h}"));
            }
        }
        for i in 0..p {
            for j in 0..=i {
                header.push(format!("sigma_{i}_{j}"));
            }
        }
        let mut table = Table::new(header);
        for (d, (theta, sigma)) in self.theta_draws.iter().zip(&self.sigma_draws).enumerate() {
            let mut row: Vec<f64> = theta.as_slice().to_vec();
            row.extend(lower_triangle(sigma));
            table.push_row((d + self.config.n_burn).to_string(), &row);
        }
        table.write(path)
    }
}

/// Cached pieces of the Θ conditional for one design.
#[derive(Clone, Debug)]
pub struct ThetaConditional {
    mean: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl ThetaConditional {
    pub fn new(design: &LpDesign) -> Result<Self> {
        let ls = LeastSquares::new(&design.x)?;
        Ok(Self {
            mean: ls.solve(&design.y),
            r_inv: ls.inverse_r(),
        })
    }

    /// The conditional mean. It does not depend on `Σ`.
    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    /// `R⁻¹` with `R⁻¹R⁻ᵀ = (XᵀX)⁻¹`.
    pub fn row_factor(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    /// `Θ̂ + R⁻¹ Z L_Σᵀ` for a given standard normal matrix `Z`.
    pub fn transform(&self, sigma: &ResidCov, z: &DMatrix<f64>) -> DMatrix<f64> {
        &self.mean + &self.r_inv * z * sigma.sigma.cholesky_factor().transpose()
    }

    pub fn draw(&self, sigma: &ResidCov, rng: &mut RngState) -> Result<LpCoeffs> {
        if sigma.dim() != self.mean.ncols() {
            return Err(Error::DimensionMismatch {
                context: "theta conditional sigma",
                expected: self.mean.ncols(),
                actual: sigma.dim(),
            });
        }
        let z = sample_std_normal_matrix(self.mean.nrows(), self.mean.ncols(), rng);
        LpCoeffs::new(self.transform(sigma, &z))
    }
}

pub fn draw_theta_conditional(sigma: &ResidCov, design: &LpDesign, rng: &mut RngState) -> Result<LpCoeffs> {
    ThetaConditional::new(design)?.draw(sigma, rng)
}

pub fn draw_sigma_conditional(coeffs: &LpCoeffs, design: &LpDesign, rng: &mut RngState) -> Result<ResidCov> {
    let resid = &design.y - &design.x * &coeffs.theta;
    let sse = SpdMatrix::new(resid.transpose() * resid)?;
    let sigma = sample_inverse_wishart(design.n_rows() as f64, &sse, rng)?;
    Ok(ResidCov { sigma })
}

/// Runs the sampler, updating `Σ` then `Θ` in every sweep.
pub fn run_gibbs(design: &LpDesign, cfg: &GibbsConfig, rng: &mut RngState) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let n = design.n_rows();
    if n <= design.n_regressors() || n <= design.n_responses() + 1 {
        return Err(Error::SeriesTooShort {
            usable: n,
            required: design.n_regressors().max(design.n_responses() + 1) + 1,
        });
    }
    let theta_cond = ThetaConditional::new(design)?;
    let GibbsInit::Ols = cfg.init;
    let init = ols_estimate(design)?;
    let mut theta = init.coeffs;
    let mut theta_draws = Vec::with_capacity(cfg.n_kept());
    let mut sigma_draws = Vec::with_capacity(cfg.n_kept());
    let wrap = |draw: usize| move |e: Error| Error::GibbsDraw { draw, source: Box::new(e) };

    for draw in 0..cfg.n_draws {
        let sigma = draw_sigma_conditional(&theta, design, rng).map_err(wrap(draw))?;
        theta = theta_cond.draw(&sigma, rng).map_err(wrap(draw))?;
        if draw >= cfg.n_burn {
            theta_draws.push(theta.theta.clone());
            sigma_draws.push(sigma.sigma.into_matrix());
        }
    }
    Ok(PosteriorDraws {
        theta_draws,
        sigma_draws,
        config: cfg.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeResult {
    pub z_scores: Vec<f64>,
    pub pass: Vec<bool>,
    pub frac_a: f64,
    pub frac_b: f64,
    pub alpha: f64,
}

impl GewekeResult {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|p| *p)
    }

    pub fn n_pass(&self) -> usize {
        self.pass.iter().filter(|p| **p).count()
    }
}

pub const GEWEKE_FRAC_A: f64 = 0.1;
pub const GEWEKE_FRAC_B: f64 = 0.5;
pub const GEWEKE_ALPHA: f64 = 0.05;
pub const GEWEKE_MIN_LEN: usize = 100;

/// Spectral density at frequency zero with Bartlett weights
/// `1 - k/(b+1)` and bandwidth `b = ⌊√n⌋`.
pub fn spectral_density_zero(x: &[f64]) -> Result<f64> {
    let n = x.len();
    let b = (n as f64).sqrt().floor() as usize;
    if n < b + 1 || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "segment of length {n} is shorter than bandwidth + 1 = {}",
            b + 1
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |k: usize| dev[..n - k].iter().zip(&dev[k..]).map(|(a, c)| a * c).sum::<f64>() / n as f64;
    let mut s = autocov(0);
    for k in 1..=b {
        s += 2.0 * (1.0 - k as f64 / (b + 1) as f64) * autocov(k);
    }
    Ok(s.max(0.0))
}

/// Standard error of a chain mean, `√(S(0)/n)`.
pub fn numerical_standard_error(chain: &[f64]) -> Result<f64> {
    Ok((spectral_density_zero(chain)? / chain.len() as f64).sqrt())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn geweke_z(chain: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    let n = chain.len();
    if n < GEWEKE_MIN_LEN {
        return Err(Error::InvalidParameter(format!(
            "chain of length {n} is shorter than {GEWEKE_MIN_LEN}"
        )));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < frac_a, frac_b and frac_a + frac_b <= 1, got {frac_a}, {frac_b}"
        )));
    }
    let n_a = ((frac_a * n as f64).floor() as usize).max(1);
    let n_b = ((frac_b * n as f64).floor() as usize).max(1);
    let a = &chain[..n_a];
    let b = &chain[n - n_b..];
    let var = spectral_density_zero(a)? / n_a as f64 + spectral_density_zero(b)? / n_b as f64;
    let diff = mean(a) - mean(b);
    if var > 0.0 {
        Ok(diff / var.sqrt())
    } else if diff == 0.0 {
        Ok(0.0)
    } else {
        Ok(diff.signum() * f64::INFINITY)
    }
}

/// Two-sided critical value `z_{1-α/2}`.
pub fn normal_critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

/// Compares the mean of the first `frac_a` of the chain with the mean of the
/// last `frac_b`. A chain with zero spectral variance and equal segment means
/// scores `z = 0`.
pub fn geweke_test(chain: &[f64], frac_a: f64, frac_b: f64, alpha: f64) -> Result<GewekeResult> {
    geweke_test_many(&[chain], frac_a, frac_b, alpha)
}

pub fn geweke_test_many<C: AsRef<[f64]>>(chains: &[C], frac_a: f64, frac_b: f64, alpha: f64) -> Result<GewekeResult> {
    let crit = normal_critical_value(alpha)?;
    let z_scores = chains
        .iter()
        .map(|c| geweke_z(c.as_ref(), frac_a, frac_b))
        .collect::<Result<Vec<_>>>()?;
    let pass = z_scores.iter().map(|z| z.abs() <= crit).collect();
    Ok(GewekeResult {
        z_scores,
        pass,
        frac_a,
        frac_b,
        alpha,
    })
}

/// Entrywise posterior means and central 90% intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub theta_mean: DMatrix<f64>,
    pub theta_lo: DMatrix<f64>,
    pub theta_hi: DMatrix<f64>,
    pub sigma_mean: DMatrix<f64>,
    pub sigma_lo: DMatrix<f64>,
    pub sigma_hi: DMatrix<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn summarize(draws: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (r, c) = draws[0].shape();
    let n = draws.len() as f64;
    let mut mean = DMatrix::zeros(r, c);
    let mut lo = DMatrix::zeros(r, c);
    let mut hi = DMatrix::zeros(r, c);
    let mut buf = Vec::with_capacity(draws.len());
    for i in 0..r {
        for j in 0..c {
            buf.clear();
            buf.extend(draws.iter().map(|d| d[(i, j)]));
            mean[(i, j)] = buf.iter().sum::<f64>() / n;
            buf.sort_by(f64::total_cmp);
            lo[(i, j)] = quantile_sorted(&buf, 0.05);
            hi[(i, j)] = quantile_sorted(&buf, 0.95);
        }
    }
    (mean, lo, hi)
}

pub fn posterior_summary(draws: &PosteriorDraws) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    let (theta_mean, theta_lo, theta_hi) = summarize(&draws.theta_draws);
    let (sigma_mean, sigma_lo, sigma_hi) = summarize(&draws.sigma_draws);
    Ok(PosteriorSummary {
        theta_mean,
        theta_lo,
        theta_hi,
        sigma_mean,
        sigma_lo,
        sigma_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::sample_std_normal;

    fn small_design(n: usize, k: usize, p: usize, seed: u64) -> LpDesign {
        let mut rng = RngState::new(seed, 0);
        let mut x = sample_std_normal_matrix(n, k, &mut rng);
        x.column_mut(k - 1).fill(1.0);
        let theta = sample_std_normal_matrix(k, p, &mut rng);
        let y = &x * theta + sample_std_normal_matrix(n, p, &mut rng);
        LpDesign::new(y, x, 0, k - 1, 1).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(GibbsConfig::default().validate().is_ok());
        let bad = GibbsConfig {
            n_draws: 10,
            n_burn: 10,
            ..GibbsConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_design_adds_unit_noise() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = LpDesign::new(y.clone(), DMatrix::identity(2, 2), 0, 1, 1).unwrap();
        let sigma = ResidCov::new(DMatrix::identity(2, 2)).unwrap();
        let cond = ThetaConditional::new(&d).unwrap();
        assert!((cond.mean() - &y).amax() < 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 1.1, 0.5]);
        let draw = cond.transform(&sigma, &z);
        // R⁻¹ for X = I is ±I depending on the Householder sign convention.
        let diff = draw - &y;
        for i in 0..2 {
            for j in 0..2 {
                assert!((diff[(i, j)].abs() - z[(i, j)].abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_conditional_moments() {
        let d = small_design(12, 2, 2, 21);
        let sigma = ResidCov::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0])).unwrap();
        let cond = ThetaConditional::new(&d).unwrap();
        let mut rng = RngState::new(22, 0);
        let n = 100_000;
        let draws: Vec<DMatrix<f64>> = (0..n).map(|_| cond.draw(&sigma, &mut rng).unwrap().theta).collect();
        let mut mean = DMatrix::<f64>::zeros(2, 2);
        for d in &draws {
            mean += d;
        }
        mean /= n as f64;
        let xtx_inv = (d.x.transpose() * &d.x).try_inverse().unwrap();
        let target_cov = sigma.matrix().kronecker(&xtx_inv);
        for idx in 0..4 {
            let se = (target_cov[(idx, idx)] / n as f64).sqrt();
            assert!((mean.as_slice()[idx] - cond.mean().as_slice()[idx]).abs() < 3.0 * se);
        }
        // vec-covariance against Σ ⊗ (XᵀX)⁻¹.
        let mut cov = DMatrix::<f64>::zeros(4, 4);
        for d in &draws {
            let v = DMatrix::from_column_slice(4, 1, (d - &mean).as_slice());
            cov += &v * v.transpose();
        }
        cov /= (n - 1) as f64;
        for i in 0..4 {
            for j in 0..4 {
                let se = ((target_cov[(i, i)] * target_cov[(j, j)] + target_cov[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - target_cov[(i, j)]).abs() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn sigma_conditional_mean() {
        let d = small_design(30, 3, 3, 23);
        let coeffs = ols_estimate(&d).unwrap().coeffs;
        let resid = &d.y - &d.x * &coeffs.theta;
        let sse = resid.transpose() * &resid;
        // IW mean: SSE / (T_eff - (H+1) - 1).
        let target = &sse / (30.0 - 3.0 - 1.0);
        let mut rng = RngState::new(24, 0);
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let s = draw_sigma_conditional(&coeffs, &d, &mut rng).unwrap();
            draws.push(s.sigma.into_matrix());
        }
        for i in 0..3 {
            for j in 0..3 {
                let chain: Vec<f64> = draws.iter().map(|s| s[(i, j)]).collect();
                let m = mean(&chain);
                let sd = (chain.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                assert!((m - target[(i, j)]).abs() < 3.0 * sd / (n as f64).sqrt(), "({i},{j})");
            }
        }
    }

    #[test]
    fn gibbs_is_deterministic_and_counts_match() {
        let d = small_design(60, 3, 2, 25);
        let cfg = GibbsConfig {
            n_draws: 300,
            n_burn: 100,
            ..GibbsConfig::default()
        };
        let a = run_gibbs(&d, &cfg, &mut RngState::new(7, 3)).unwrap();
        let b = run_gibbs(&d, &cfg, &mut RngState::new(7, 3)).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a.sigma_draws.len(), 200);
        assert_eq!(a.theta_draws, b.theta_draws);
        assert_eq!(a.sigma_draws, b.sigma_draws);
        assert!(a.sigma_draws.iter().all(|s| SpdMatrix::new(s.clone()).is_ok()));
    }

    #[test]
    fn gibbs_rejects_short_design() {
        let d = small_design(4, 3, 3, 26);
        assert!(run_gibbs(&d, &GibbsConfig::default(), &mut RngState::new(0, 0)).is_err());
    }

    #[test]
    fn constant_chain_passes() {
        let r = geweke_test(&vec![2.5; 500], 0.1, 0.5, 0.05).unwrap();
        assert_eq!(r.z_scores, vec![0.0]);
        assert!(r.all_pass());
    }

    #[test]
    fn geweke_rejects_bad_input() {
        assert!(geweke_test(&[0.0; 50], 0.1, 0.5, 0.05).is_err());
        assert!(geweke_test(&[0.0; 500], 0.6, 0.5, 0.05).is_err());
        assert!(geweke_test(&[0.0; 500], 0.1, 0.5, 1.5).is_err());
    }

    #[test]
    fn geweke_detects_drift() {
        let mut rng = RngState::new(31, 0);
        let n = 10_000;
        let noise = sample_std_normal(n, &mut rng);
        let chain: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64 + 0.1 * noise[i]).collect();
        let r = geweke_test(&chain, 0.1, 0.5, 0.05).unwrap();
        assert!(!r.all_pass());
    }

    #[test]
    fn critical_value() {
        assert!((normal_critical_value(0.05).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn spectral_density_of_white_noise() {
        let x: Vec<f64> = sample_std_normal(20_000, &mut RngState::new(32, 0)).iter().copied().collect();
        let s = spectral_density_zero(&x).unwrap();
        assert!((s - 1.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn single_draw_summary() {
        let theta = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let sigma = DMatrix::from_element(1, 1, 0.7);
        let draws = PosteriorDraws {
            theta_draws: vec![theta.clone()],
            sigma_draws: vec![sigma.clone()],
            config: GibbsConfig {
                n_draws: 2,
                n_burn: 1,
                ..GibbsConfig::default()
            },
        };
        let s = posterior_summary(&draws).unwrap();
        assert_eq!(s.theta_mean, theta);
        assert_eq!(s.theta_lo, theta);
        assert_eq!(s.theta_hi, theta);
        assert_eq!(s.sigma_mean, sigma);
    }

    #[test]
    fn constant_draws_summary() {
        let theta = DMatrix::from_element(1, 1, 3.25);
        let draws = PosteriorDraws {
            theta_draws: vec![theta.clone(); 50],
            sigma_draws: vec![DMatrix::from_element(1, 1, 1.5); 50],
            config: GibbsConfig::default(),
        };
        let s = posterior_summary(&draws).unwrap();
        assert_eq!(s.theta_mean[(0, 0)], 3.25);
        assert_eq!(s.sigma_mean[(0, 0)], 1.5);
        assert_eq!(s.sigma_hi[(0, 0)], 1.5);
    }

    #[test]
    fn quantiles_interpolate() {
        let sorted: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&sorted, 0.05), 5.0);
        assert_eq!(quantile_sorted(&sorted, 0.95), 95.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
    }
}
