//! Monte Carlo replication harness.
//!
//! VMA parameters are drawn once from `(master_seed, stream 0)` and held
//! fixed; trial `i` simulates a fresh sample from `(master_seed, stream i+1)`
//! and runs the requested estimators on the LP design for the target
//! variable. Trials are independent, so they run on a rayon pool and are
//! collected in trial order.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    geweke_test_many, numerical_standard_error, posterior_summary, run_gibbs, GibbsConfig, GEWEKE_ALPHA,
    GEWEKE_FRAC_A, GEWEKE_FRAC_B,
};
use crate::dgp::{gen_irf_weights, gen_vma_params, simulate_vma, DgpConfig, VmaParams};
use crate::error::{Error, Result};
use crate::estimators::{fgls_estimate, ols_estimate, DEFAULT_FGLS_MAX_ITER, DEFAULT_FGLS_TOL};
use crate::lp::{analytic_xi, build_design, irf_from_theta, phi_from_gamma, LpDesign};
use crate::samplers::{lower_triangle, RngState};
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    Fgls,
    Gibbs,
}

impl EstimatorKind {
    /// Suffix used in output file names.
    pub fn file_tag(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::Fgls => "fgls",
            EstimatorKind::Gibbs => "bayes",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FglsConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FglsConfig {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_FGLS_MAX_ITER,
            tol: DEFAULT_FGLS_TOL,
        }
    }
}

/// Experiment settings. Variable indices are one-based here, matching the
/// CSV column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpConfig,
    pub n_trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub gibbs: GibbsConfig,
    pub fgls: FglsConfig,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Response variable of the LP model.
    pub target_var: usize,
    /// Exogenous shock variable whose lag-1 coefficients trace the IRF.
    pub shock_var: usize,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            n_trials: 1_000,
            estimators: vec![EstimatorKind::Ols, EstimatorKind::Gibbs],
            gibbs: GibbsConfig::default(),
            fgls: FglsConfig::default(),
            master_seed: 20200710,
            out_dir: PathBuf::from("mc_out"),
            target_var: 2,
            shock_var: 1,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        for (name, v) in [("target_var", self.target_var), ("shock_var", self.shock_var)] {
            if v == 0 || v > self.dgp.n_vars {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} is outside 1..={}",
                    self.dgp.n_vars
                )));
            }
        }
        if self.irf_len() == 0 {
            return Err(Error::InvalidParameter("horizon too small to hold any impulse response".into()));
        }
        if self.estimators.contains(&EstimatorKind::Gibbs) {
            self.gibbs.validate()?;
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of impulse response coefficients tracked: `min(L, H+1)`.
    pub fn irf_len(&self) -> usize {
        self.dgp.order.min(self.dgp.horizon + 1)
    }
}

/// Analytic truths the trials are compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthRecord {
    pub xi: DMatrix<f64>,
    /// Lower triangle of `Ξ`, row-major.
    pub xi_true: Vec<f64>,
    pub irf_true: Vec<f64>,
    pub params: VmaParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub estimator: EstimatorKind,
    /// Lower triangle of `Σ̂` (or its posterior mean), row-major.
    pub sigma_hat: Vec<f64>,
    pub irf_hat: Vec<f64>,
    /// Numerical standard errors of the posterior-mean IRF (Gibbs only).
    pub irf_nse: Option<Vec<f64>>,
    /// Geweke z-scores of the monitored chains: IRF coefficients, then the
    /// diagonal of `Σ` (Gibbs only).
    pub geweke_z: Option<Vec<f64>>,
    pub geweke_pass: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct MonteCarloOutput {
    pub truth: TruthRecord,
    pub records: Vec<TrialRecord>,
    /// `(trial, message)` for trials that were skipped.
    pub failures: Vec<(usize, String)>,
}

impl MonteCarloOutput {
    pub fn records_for(&self, kind: EstimatorKind) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.estimator == kind)
    }
}

pub fn compute_truth(cfg: &ExperimentConfig) -> Result<TruthRecord> {
    let params = gen_vma_params(&cfg.dgp, &mut RngState::new(cfg.master_seed, 0))?;
    let target = cfg.target_var - 1;
    let phi = phi_from_gamma(&params, target, cfg.dgp.horizon)?;
    let xi = analytic_xi(&phi, &params.omega, target)?.sigma.into_matrix();
    let irf_true = if cfg.target_var == 2 && cfg.shock_var == 1 {
        gen_irf_weights(cfg.dgp.order, cfg.dgp.irf_shape).values[..cfg.irf_len()].to_vec()
    } else {
        params.gammas[..cfg.irf_len()]
            .iter()
            .map(|g| g[(target, cfg.shock_var - 1)])
            .collect()
    };
    Ok(TruthRecord {
        xi_true: lower_triangle(&xi),
        xi,
        irf_true,
        params,
    })
}

fn run_trial(cfg: &ExperimentConfig, params: &VmaParams, trial: usize) -> Result<Vec<TrialRecord>> {
    let mut rng = RngState::new(cfg.master_seed, trial as u64 + 1);
    let series = simulate_vma(params, &cfg.dgp, &mut rng)?;
    let design = build_design(&series.w, cfg.target_var - 1, cfg.dgp.order, cfg.dgp.horizon)?;
    let mut kinds = cfg.estimators.clone();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .map(|kind| run_estimator(cfg, &design, kind, trial, &mut rng))
        .collect()
}

fn run_estimator(
    cfg: &ExperimentConfig,
    design: &LpDesign,
    kind: EstimatorKind,
    trial: usize,
    rng: &mut RngState,
) -> Result<TrialRecord> {
    let shock = cfg.shock_var - 1;
    let len = cfg.irf_len();
    let plain = |theta: &DMatrix<f64>, sigma: &DMatrix<f64>| -> Result<TrialRecord> {
        Ok(TrialRecord {
            trial,
            estimator: kind,
            sigma_hat: lower_triangle(sigma),
            irf_hat: irf_from_theta(theta, design, shock, len)?,
            irf_nse: None,
            geweke_z: None,
            geweke_pass: None,
        })
    };
    match kind {
        EstimatorKind::Ols => {
            let est = ols_estimate(design)?;
            plain(&est.coeffs.theta, est.sigma.matrix())
        }
        EstimatorKind::Fgls => {
            let est = fgls_estimate(design, cfg.fgls.max_iter, cfg.fgls.tol)?;
            plain(&est.coeffs.theta, est.sigma.matrix())
        }
        EstimatorKind::Gibbs => {
            let draws = run_gibbs(design, &cfg.gibbs, rng)?;
            let summary = posterior_summary(&draws)?;
            let row = design.regressor_index(1, shock);
            let mut monitored: Vec<Vec<f64>> = (0..len).map(|h| draws.theta_chain(row, h)).collect();
            let irf_nse = monitored
                .iter()
                .map(|c| numerical_standard_error(c))
                .collect::<Result<Vec<_>>>()?;
            monitored.extend((0..design.n_responses()).map(|i| draws.sigma_chain(i, i)));
            let geweke = geweke_test_many(&monitored, GEWEKE_FRAC_A, GEWEKE_FRAC_B, GEWEKE_ALPHA)?;
            let mut rec = plain(&summary.theta_mean, &summary.sigma_mean)?;
            rec.irf_nse = Some(irf_nse);
            rec.geweke_pass = Some(geweke.all_pass());
            rec.geweke_z = Some(geweke.z_scores);
            Ok(rec)
        }
    }
}

/// Runs every trial. Individual failures are recorded and skipped; more than
/// `⌊n_trials / 100⌋` failures abort the run.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloOutput> {
    cfg.validate()?;
    let truth = compute_truth(cfg)?;
    let work = || -> Vec<Result<Vec<TrialRecord>>> {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, &truth.params, i))
            .collect()
    };
    let results = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (trial, res) in results.into_iter().enumerate() {
        match res {
            Ok(recs) => records.extend(recs),
            Err(e) => failures.push((trial, e.to_string())),
        }
    }
    let limit = cfg.n_trials / 100;
    if failures.len() > limit {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: cfg.n_trials,
            limit,
        });
    }
    Ok(MonteCarloOutput {
        truth,
        records,
        failures,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn sigma_entry_names(dim: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in 0..=i {
            names.push(format!("s_{i}_{j}"));
        }
    }
    names
}

/// Writes `sigma_<tag>.csv` and `irf_<tag>.csv` per estimator (one row per
/// trial plus a `truth` row), `summary.csv`, `geweke.csv` for Gibbs runs and
/// `failures.csv` when trials were skipped. Returns the written paths.
pub fn write_histogram_tables(output: &MonteCarloOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if output.records.is_empty() {
        return Err(Error::InvalidParameter("no trial records to write".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let truth = &output.truth;
    let sigma_names = sigma_entry_names(truth.xi.nrows());
    let irf_names: Vec<String> = (1..=truth.irf_true.len()).map(|l| format!("irf_{l}")).collect();

    let mut kinds: Vec<EstimatorKind> = output.records.iter().map(|r| r.estimator).collect();
    kinds.sort();
    kinds.dedup();

    let mut written = Vec::new();
    let mut summary = Table::new(["table", "entry", "mean", "sd", "truth"]);

    for kind in kinds {
        let recs: Vec<&TrialRecord> = output.records_for(kind).collect();
        let tag = kind.file_tag();
        for (name, header, truth_row, pick) in [
            (
                format!("sigma_{tag}"),
                &sigma_names,
                &truth.xi_true,
                (|r: &TrialRecord| r.sigma_hat.clone()) as fn(&TrialRecord) -> Vec<f64>,
            ),
            (format!("irf_{tag}"), &irf_names, &truth.irf_true, |r: &TrialRecord| r.irf_hat.clone()),
        ] {
            let mut table = Table::new(std::iter::once("trial".to_string()).chain(header.iter().cloned()));
            let rows: Vec<Vec<f64>> = recs.iter().map(|r| pick(r)).collect();
            for (r, row) in recs.iter().zip(&rows) {
                table.push_row(r.trial.to_string(), row);
            }
            table.push_row("truth", truth_row);
            let path = out_dir.join(format!("{name}.csv"));
            table.write(&path)?;
            written.push(path);

            for (j, entry) in header.iter().enumerate() {
                let column: Vec<f64> = rows.iter().map(|row| row[j]).collect();
                let (mean, sd) = mean_sd(&column);
                summary.rows.push(vec![
                    name.clone(),
                    entry.clone(),
                    crate::table::fmt_f64(mean),
                    crate::table::fmt_f64(sd),
                    crate::table::fmt_f64(truth_row[j]),
                ]);
            }
        }

        if kind == EstimatorKind::Gibbs {
            let mut header = vec!["trial".to_string()];
            header.extend(irf_names.iter().map(|n| format!("z_{n}")));
            header.extend((0..truth.xi.nrows()).map(|i| format!("z_s_{i}_{i}")));
            header.push("all_pass".into());
            let mut table = Table::new(header);
            for r in &recs {
                let mut row = vec![r.trial.to_string()];
                row.extend(r.geweke_z.iter().flatten().map(|z| crate::table::fmt_f64(*z)));
                row.push(r.geweke_pass.unwrap_or(false).to_string());
                table.rows.push(row);
            }
            let path = out_dir.join("geweke.csv");
            table.write(&path)?;
            written.push(path);
        }
    }

    let path = out_dir.join("summary.csv");
    summary.write(&path)?;
    written.push(path);

    if !output.failures.is_empty() {
        let mut table = Table::new(["trial", "error"]);
        for (trial, msg) in &output.failures {
            table.rows.push(vec![trial.to_string(), msg.clone()]);
        }
        let path = out_dir.join("failures.csv");
        table.write(&path)?;
        written.push(path);
    }
    Ok(written)
}
