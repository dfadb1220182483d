//! Data generating process: a finite-order Gaussian VMA
//!
//! ```text
//! w_t = ε_t + Σ_{l=1..L} Γ_l ε_{t-l},   ε_t ~ N(0, Ω_ε)
//! ```
//!
//! and the randomized parameter recipe used by the Monte Carlo experiments,
//! in which variable 1 is a pure exogenous shock and the (2,1) entries of
//! `Γ_1..Γ_L` carry the impulse response of interest.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::{
    sample_inverse_gamma, sample_inverse_wishart, sample_mvn, sample_std_normal_matrix,
    sample_uniform, RngState, SpdMatrix,
};
use crate::table::{self, Table};

/// Dimensions and shape parameter of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    /// Number of variables `M`.
    pub n_vars: usize,
    /// VMA order `L` (also the number of regressor lags).
    pub order: usize,
    /// Largest projection horizon `H`.
    pub horizon: usize,
    /// Sample length `T`.
    pub sample_len: usize,
    /// Shape `d` of the impulse response weights.
    pub irf_shape: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_vars: 3,
            order: 5,
            horizon: 7,
            sample_len: 200,
            irf_shape: 0.8,
            seed: 20200710,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vars < 2 {
            return Err(Error::InvalidParameter(format!("n_vars must be >= 2, got {}", self.n_vars)));
        }
        if self.order < 1 {
            return Err(Error::InvalidParameter("order must be >= 1".into()));
        }
        if self.sample_len <= self.n_vars * self.order + 1 {
            return Err(Error::InvalidParameter(format!(
                "sample_len must exceed n_vars*order + 1 = {}, got {}",
                self.n_vars * self.order + 1,
                self.sample_len
            )));
        }
        if !self.irf_shape.is_finite() {
            return Err(Error::InvalidParameter("irf_shape must be finite".into()));
        }
        Ok(())
    }

    /// Number of stored observations, `T + H`.
    pub fn n_obs(&self) -> usize {
        self.sample_len + self.horizon
    }
}

/// VMA coefficient matrices `Γ_1..Γ_L` and the shock covariance `Ω_ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct VmaParams {
    pub gammas: Vec<DMatrix<f64>>,
    pub omega: SpdMatrix,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    gammas: Vec<Vec<Vec<f64>>>,
    omega: Vec<Vec<f64>>,
}

impl VmaParams {
    pub fn new(gammas: Vec<DMatrix<f64>>, omega: SpdMatrix) -> Result<Self> {
        let m = omega.dim();
        if gammas.is_empty() {
            return Err(Error::InvalidParameter("at least one VMA lag is required".into()));
        }
        for g in &gammas {
            if g.nrows() != m || g.ncols() != m {
                return Err(Error::DimensionMismatch {
                    context: "VMA coefficient matrix",
                    expected: m,
                    actual: if g.nrows() != m { g.nrows() } else { g.ncols() },
                });
            }
        }
        Ok(Self { gammas, omega })
    }

    pub fn n_vars(&self) -> usize {
        self.omega.dim()
    }

    pub fn order(&self) -> usize {
        self.gammas.len()
    }

    /// First rows of every `Γ_l` are zero: variable 1 is its own shock.
    pub fn has_exogenous_first_variable(&self) -> bool {
        self.gammas.iter().all(|g| g.row(0).iter().all(|v| *v == 0.0))
    }

    /// `Ω_ε = blkdiag(ω₁², Ω*)`.
    pub fn omega_is_block_diagonal(&self) -> bool {
        let o = self.omega.matrix();
        (1..o.nrows()).all(|j| o[(0, j)] == 0.0 && o[(j, 0)] == 0.0)
    }

    /// `(2,1)` entries of `Γ_1..Γ_L`.
    pub fn irf(&self) -> Vec<f64> {
        self.gammas.iter().map(|g| g[(1, 0)]).collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = ParamsFile {
            gammas: self.gammas.iter().map(table::matrix_to_rows).collect(),
            omega: table::matrix_to_rows(self.omega.matrix()),
        };
        table::write_json(path, &file)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file: ParamsFile = table::read_json(path)?;
        let gammas = file
            .gammas
            .iter()
            .map(|g| table::rows_to_matrix(g, "gammas"))
            .collect::<Result<Vec<_>>>()?;
        let omega = SpdMatrix::new(table::rows_to_matrix(&file.omega, "omega")?)?;
        Self::new(gammas, omega)
    }
}

/// Normalized impulse response weights `γ_1..γ_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct IrfTruth {
    pub values: Vec<f64>,
}

/// `γ_l = l·exp(d(1-l)) / Σ_k k·exp(d(1-k))`, `l = 1..L`.
pub fn gen_irf_weights(order: usize, shape: f64) -> IrfTruth {
    let raw: Vec<f64> = (1..=order)
        .map(|l| {
            let l = l as f64;
            l * (shape * (1.0 - l)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    IrfTruth {
        values: raw.into_iter().map(|v| v / total).collect(),
    }
}

/// Draws `Γ_1..Γ_L` and `Ω_ε`.
///
/// Steps, in order:
/// 1. `Γ*` ((M-1)×M, iid N(0,1)) drawn once; rows 2..M of `Γ_l` = `0.5(L-l)/L · Γ*`.
/// 2. Diagonal entries (i,i), i = 2..M, of `Γ_1` replaced by U(0,1) draws.
/// 3. Entry (2,1) of `Γ_l` replaced by `γ_l`.
/// 4. First rows zeroed.
/// 5. `Ω_ε = blkdiag(ω₁², Ω*)`, `ω₁² ~ IG(1,1)`, `Ω* ~ IW(M-1, I_{M-1})`
///    (2 degrees of freedom for M = 3; the smallest valid integer df in general).
pub fn gen_vma_params(cfg: &DgpConfig, rng: &mut RngState) -> Result<VmaParams> {
    cfg.validate()?;
    let m = cfg.n_vars;
    let order = cfg.order;
    let base = sample_std_normal_matrix(m - 1, m, rng);

    let mut gammas: Vec<DMatrix<f64>> = (1..=order)
        .map(|l| {
            let factor = 0.5 * (order - l) as f64 / order as f64;
            let mut g = DMatrix::zeros(m, m);
            g.rows_mut(1, m - 1).copy_from(&(&base * factor));
            g
        })
        .collect();

    for i in 1..m {
        gammas[0][(i, i)] = sample_uniform(rng);
    }

    let irf = gen_irf_weights(order, cfg.irf_shape);
    for (g, v) in gammas.iter_mut().zip(&irf.values) {
        g[(1, 0)] = *v;
    }

    for g in &mut gammas {
        g.row_mut(0).fill(0.0);
    }

    let omega1 = sample_inverse_gamma(1.0, 1.0, rng)?;
    let omega_rest = sample_inverse_wishart((m - 1) as f64, &SpdMatrix::identity(m - 1), rng)?;
    let mut omega = DMatrix::zeros(m, m);
    omega[(0, 0)] = omega1;
    omega.view_mut((1, 1), (m - 1, m - 1)).copy_from(omega_rest.matrix());

    VmaParams::new(gammas, SpdMatrix::new(omega)?)
}

/// A simulated sample. Row `s` of `w` holds time `t = s + 1`; row `r` of
/// `eps` holds time `t = r + 1 - L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesData {
    pub w: DMatrix<f64>,
    pub eps: DMatrix<f64>,
    pub config: DgpConfig,
}

impl SeriesData {
    /// Largest absolute deviation from `w_t = ε_t + Σ_l Γ_l ε_{t-l}`.
    pub fn reconstruction_error(&self, params: &VmaParams) -> f64 {
        let rebuilt = vma_filter(&params.gammas, &self.eps);
        (&rebuilt - &self.w).amax()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_series_csv(path, &self.w)
    }
}

fn vma_filter(gammas: &[DMatrix<f64>], eps: &DMatrix<f64>) -> DMatrix<f64> {
    let order = gammas.len();
    let n = eps.nrows() - order;
    let m = eps.ncols();
    let mut w = DMatrix::zeros(n, m);
    for s in 0..n {
        let mut row = eps.row(s + order).transpose();
        for (l, g) in gammas.iter().enumerate() {
            row += g * eps.row(s + order - (l + 1)).transpose();
        }
        w.set_row(s, &row.transpose());
    }
    w
}

/// Draws shocks for `t = 1-L .. T+H` and filters them through the VMA. No
/// burn-in is needed for a finite-order moving average.
pub fn simulate_vma(params: &VmaParams, cfg: &DgpConfig, rng: &mut RngState) -> Result<SeriesData> {
    if params.n_vars() != cfg.n_vars {
        return Err(Error::DimensionMismatch {
            context: "simulate_vma n_vars",
            expected: cfg.n_vars,
            actual: params.n_vars(),
        });
    }
    if params.order() != cfg.order {
        return Err(Error::DimensionMismatch {
            context: "simulate_vma order",
            expected: cfg.order,
            actual: params.order(),
        });
    }
    let m = cfg.n_vars;
    let n_shocks = cfg.n_obs() + cfg.order;
    let zero = DVector::zeros(m);
    let mut eps = DMatrix::zeros(n_shocks, m);
    for r in 0..n_shocks {
        let e = sample_mvn(&zero, &params.omega, rng)?;
        eps.set_row(r, &e.transpose());
    }
    let w = vma_filter(&params.gammas, &eps);
    Ok(SeriesData {
        w,
        eps,
        config: cfg.clone(),
    })
}

/// `t, w_1, .., w_M` with `t` starting at 1.
pub fn write_series_csv(path: &Path, w: &DMatrix<f64>) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=w.ncols()).map(|j| format!("w_{j}")));
    let mut t = Table::new(header);
    for i in 0..w.nrows() {
        let row: Vec<f64> = w.row(i).iter().copied().collect();
        t.push_row((i + 1).to_string(), &row);
    }
    t.write(path)
}

pub fn read_series_csv(path: &Path) -> Result<DMatrix<f64>> {
    let t = Table::read(path)?;
    if t.header.first().map(String::as_str) != Some("t") || t.header.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "expected header `t,w_1,...`".into(),
        });
    }
    t.numeric_block(1, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lag_weight_is_one() {
        for d in [-2.0, 0.0, 0.8, 5.0] {
            assert_eq!(gen_irf_weights(1, d).values, vec![1.0]);
        }
    }

    #[test]
    fn default_weights() {
        let w = gen_irf_weights(5, 0.8).values;
        let expected = [0.325624, 0.292624, 0.197227, 0.118159, 0.066366];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn weights_are_normalized() {
        for order in 1..12 {
            for d in [-1.0, 0.0, 0.3, 0.8, 2.0] {
                let w = gen_irf_weights(order, d).values;
                assert!(w.iter().all(|v| *v > 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_recipe_invariants() {
        let cfg = DgpConfig::default();
        let params = gen_vma_params(&cfg, &mut RngState::new(3, 0)).unwrap();
        assert!(params.has_exogenous_first_variable());
        assert!(params.omega_is_block_diagonal());
        assert_eq!(params.irf(), gen_irf_weights(5, 0.8).values);
        let last = &params.gammas[4];
        for i in 1..3 {
            for j in 0..3 {
                if (i, j) != (1, 0) {
                    assert_eq!(last[(i, j)], 0.0);
                }
            }
        }
        // Diagonal of Γ_1 below the first row lies in (0, 1).
        for i in 1..3 {
            assert!(params.gammas[0][(i, i)] > 0.0 && params.gammas[0][(i, i)] < 1.0);
        }
        // Off-diagonal scaled entries share one Γ* across lags.
        let ratio = params.gammas[1][(2, 1)] / params.gammas[2][(2, 1)];
        assert!((ratio - 3.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn recipe_generalizes_to_more_variables() {
        let cfg = DgpConfig {
            n_vars: 5,
            order: 3,
            ..DgpConfig::default()
        };
        let params = gen_vma_params(&cfg, &mut RngState::new(4, 0)).unwrap();
        assert_eq!(params.n_vars(), 5);
        assert!(params.has_exogenous_first_variable());
        assert!(params.omega_is_block_diagonal());
    }

    #[test]
    fn white_noise_when_gammas_vanish() {
        let cfg = DgpConfig::default();
        let params = VmaParams::new(vec![DMatrix::zeros(3, 3); 5], SpdMatrix::identity(3)).unwrap();
        let series = simulate_vma(&params, &cfg, &mut RngState::new(9, 1)).unwrap();
        assert_eq!(series.w, series.eps.rows(5, cfg.n_obs()).into_owned());
    }

    #[test]
    fn simulated_series_reconstructs() {
        let cfg = DgpConfig::default();
        let params = gen_vma_params(&cfg, &mut RngState::new(1, 0)).unwrap();
        let series = simulate_vma(&params, &cfg, &mut RngState::new(1, 1)).unwrap();
        assert_eq!(series.w.nrows(), 207);
        assert_eq!(series.eps.nrows(), 212);
        let scale = series.w.amax().max(1.0);
        assert!(series.reconstruction_error(&params) <= 1e-12 * scale);
        // Variable 1 is its own shock.
        assert_eq!(series.w.column(0), series.eps.rows(5, 207).column(0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = DgpConfig::default();
        let params = gen_vma_params(&cfg, &mut RngState::new(1, 0)).unwrap();
        let a = simulate_vma(&params, &cfg, &mut RngState::new(1, 5)).unwrap();
        let b = simulate_vma(&params, &cfg, &mut RngState::new(1, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = DgpConfig::default();
        cfg.sample_len = 16;
        assert!(cfg.validate().is_err());
        cfg.sample_len = 17;
        assert!(cfg.validate().is_ok());
        cfg.n_vars = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn series_and_params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DgpConfig::default();
        let params = gen_vma_params(&cfg, &mut RngState::new(2, 0)).unwrap();
        let series = simulate_vma(&params, &cfg, &mut RngState::new(2, 1)).unwrap();
        let sp = dir.path().join("series.csv");
        let pp = dir.path().join("params.json");
        series.write_csv(&sp).unwrap();
        params.write_json(&pp).unwrap();
        assert_eq!(read_series_csv(&sp).unwrap(), series.w);
        assert_eq!(VmaParams::read_json(&pp).unwrap(), params);
    }
}
