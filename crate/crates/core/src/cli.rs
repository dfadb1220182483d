//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::bayes::{posterior_summary, run_gibbs, GibbsConfig};
use crate::dgp::{gen_vma_params, read_series_csv, simulate_vma, VmaParams};
use crate::error::{Error, Result};
use crate::estimators::{fgls_estimate, ols_estimate, regressor_names};
use crate::experiment::{run_monte_carlo, write_histogram_tables, ExperimentConfig};
use crate::lp::{analytic_xi, build_design, irf_from_theta, phi_from_gamma, LpDesign};
use crate::samplers::RngState;
use crate::table::{self, Table};

/// Name accepted by `--config` for the built-in experiment defaults.
pub const BUILTIN_DEFAULTS: &str = "paper_defaults";

#[derive(Debug, Parser)]
#[command(name = "lpsur", version, about = "Local projections as SUR: simulation, estimation, Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one VMA sample; writes series.csv and params.json.
    Simulate(SimulateArgs),
    /// Print the analytic LP residual covariance for a params file.
    Xi(XiArgs),
    /// OLS or FGLS estimation on a series file.
    Estimate(EstimateArgs),
    /// Gibbs sampling on a series file; prints the posterior summary.
    Gibbs(GibbsArgs),
    /// Full Monte Carlo experiment.
    Mc(McArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON experiment config, or `paper_defaults` for the built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Series CSV (`t,w_1,...,w_M`).
    #[arg(long, value_name = "PATH")]
    series: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Target variable (1-based); defaults to the config's target_var.
    #[arg(long)]
    target: Option<usize>,
    /// Regressor lags; defaults to the config's VMA order.
    #[arg(long)]
    lags: Option<usize>,
    /// Largest horizon; defaults to the config's horizon.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct XiArgs {
    /// Params JSON (`{"gammas": [...], "omega": [...]}`).
    #[arg(long, value_name = "PATH")]
    params: PathBuf,
    /// Target variable (1-based); defaults to 2, or 1 for a univariate model.
    #[arg(long)]
    target: Option<usize>,
    /// Largest horizon; defaults to the VMA order.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Ols,
    Fgls,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "ols")]
    method: Method,
}

#[derive(Debug, Args)]
struct GibbsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
}

#[derive(Debug, Args)]
struct McArgs {
    /// JSON experiment config, or `paper_defaults` for the built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

pub fn load_config(spec: Option<&str>) -> Result<ExperimentConfig> {
    match spec {
        None | Some(BUILTIN_DEFAULTS) => Ok(ExperimentConfig::default()),
        Some(path) => {
            let path = Path::new(path);
            if !path.is_file() {
                return Err(Error::InvalidParameter(format!(
                    "--config: no such file {}",
                    path.display()
                )));
            }
            table::read_json(path)
        }
    }
}

/// Renders a matrix as `[[a,b],[c,d]]` using shortest round-trip floats.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn one_based(v: usize, n: usize, flag: &str) -> Result<usize> {
    if v == 0 || v > n {
        return Err(Error::InvalidParameter(format!("{flag} {v} is outside 1..={n}")));
    }
    Ok(v - 1)
}

fn load_design(args: &ModelArgs) -> Result<(LpDesign, ExperimentConfig)> {
    let cfg = load_config(args.config.config.as_deref())?;
    let w = read_series_csv(&args.series)?;
    let target = one_based(args.target.unwrap_or(cfg.target_var), w.ncols(), "--target")?;
    let lags = args.lags.unwrap_or(cfg.dgp.order);
    let horizon = args.horizon.unwrap_or(cfg.dgp.horizon);
    Ok((build_design(&w, target, lags, horizon)?, cfg))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(args.config.config.as_deref())?.dgp;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let params = gen_vma_params(&cfg, &mut RngState::new(cfg.seed, 0))?;
    let series = simulate_vma(&params, &cfg, &mut RngState::new(cfg.seed, 1))?;
    create_dir(&args.out)?;
    series.write_csv(&args.out.join("series.csv"))?;
    params.write_json(&args.out.join("params.json"))?;
    println!(
        "wrote {} observations of {} variables to {}",
        series.w.nrows(),
        series.w.ncols(),
        args.out.display()
    );
    Ok(())
}

fn xi(args: XiArgs) -> Result<()> {
    let params = VmaParams::read_json(&args.params)?;
    let m = params.n_vars();
    let default_target = if m >= 2 { 2 } else { 1 };
    let target = one_based(args.target.unwrap_or(default_target), m, "--target")?;
    let horizon = args.horizon.unwrap_or(params.order());
    let phi = phi_from_gamma(&params, target, horizon)?;
    let xi = analytic_xi(&phi, &params.omega, target)?;
    println!("{}", format_matrix(xi.matrix()));
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let header: Vec<String> = (0..=horizon).map(|h| format!("h_{h}")).collect();
        table::write_matrix(&dir.join("xi.csv"), &header, xi.matrix())?;
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (design, cfg) = load_design(&args.model)?;
    let est = match args.method {
        Method::Ols => ols_estimate(&design)?,
        Method::Fgls => fgls_estimate(&design, cfg.fgls.max_iter, cfg.fgls.tol)?,
    };
    let shock = one_based(cfg.shock_var, design.n_vars, "shock_var")?;
    let len = design.lags.min(design.horizon + 1);
    let irf = irf_from_theta(&est.coeffs.theta, &design, shock, len)?;
    println!("rows: {}  regressors: {}  iterations: {}  converged: {}", design.n_rows(), design.n_regressors(), est.iterations, est.converged);
    println!("irf: {}", format_matrix(&DMatrix::from_row_slice(1, irf.len(), &irf)));
    println!("sigma: {}", format_matrix(est.sigma.matrix()));
    if let Some(dir) = &args.model.out {
        create_dir(dir)?;
        est.write_csv(dir, &design)?;
        design.write_csv(&dir.join("design.csv"))?;
    }
    Ok(())
}

fn gibbs(args: GibbsArgs) -> Result<()> {
    let (design, cfg) = load_design(&args.model)?;
    let mut gcfg: GibbsConfig = cfg.gibbs.clone();
    if let Some(d) = args.draws {
        gcfg.n_draws = d;
    }
    if let Some(b) = args.burn {
        gcfg.n_burn = b;
    }
    let seed = args.seed.unwrap_or(cfg.master_seed);
    let draws = run_gibbs(&design, &gcfg, &mut RngState::new(seed, 0))?;
    let summary = posterior_summary(&draws)?;

    let mut table = Table::new(["parameter", "mean", "q05", "q95"]);
    let names = regressor_names(&design);
    for h in 0..design.n_responses() {
        for (r, name) in names.iter().enumerate() {
            table.push_row(
                format!("theta[{name},h_{h}]"),
                &[summary.theta_mean[(r, h)], summary.theta_lo[(r, h)], summary.theta_hi[(r, h)]],
            );
        }
    }
    for i in 0..design.n_responses() {
        for j in 0..=i {
            table.push_row(
                format!("sigma[{i},{j}]"),
                &[summary.sigma_mean[(i, j)], summary.sigma_lo[(i, j)], summary.sigma_hi[(i, j)]],
            );
        }
    }
    let shock = one_based(cfg.shock_var, design.n_vars, "shock_var")?;
    let row = design.regressor_index(1, shock);
    let len = design.lags.min(design.horizon + 1);
    println!("kept draws: {}", draws.len());
    for h in 0..len {
        println!(
            "irf_{}: mean {:.6}  90% [{:.6}, {:.6}]",
            h + 1,
            summary.theta_mean[(row, h)],
            summary.theta_lo[(row, h)],
            summary.theta_hi[(row, h)]
        );
    }
    println!("sigma mean: {}", format_matrix(&summary.sigma_mean));
    if let Some(dir) = &args.model.out {
        create_dir(dir)?;
        table.write(&dir.join("posterior_summary.csv"))?;
        draws.write_csv(&dir.join("chain.csv"))?;
    }
    Ok(())
}

fn mc(args: McArgs) -> Result<()> {
    let mut cfg = load_config(Some(&args.config))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(n) = args.trials {
        cfg.n_trials = n;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = Some(j);
    }
    let output = run_monte_carlo(&cfg)?;
    let files = write_histogram_tables(&output, &cfg.out_dir)?;
    println!(
        "{} trials ({} skipped); wrote {} files to {}",
        cfg.n_trials,
        output.failures.len(),
        files.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Xi(a) => xi(a),
        Command::Estimate(a) => estimate(a),
        Command::Gibbs(a) => gibbs(a),
        Command::Mc(a) => mc(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
