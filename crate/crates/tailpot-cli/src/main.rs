//! Command-line front door for peaks-over-threshold tail inference on
//! serially dependent series.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical
//! non-convergence, 5 internal.

mod config;
mod ingest;
mod report;

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use config::AnalysisConfig;
use ingest::NaPolicy;
use report::{
    summarize_posterior, summarize_quantile, DynamicSection, ErrorInfo, FreqSection,
    HorizonSummary, QuantileSection, Report,
};
use tailpot::dynamic::{h_step_quantile, make_residuals, ArmaSpec, DynamicSettings, ResidualSet};
use tailpot::sim::{
    coverage_experiment, sigma_experiment, simulate, CoverageCell, CoverageConfig, ModelName,
    ModelSpec,
};
use tailpot::{
    assemble, confidence_ellipsoid, mle_fit, param_intervals, quantile_interval,
    quantile_posterior, sample_posterior, ExceedanceSet, FitOptions, QuantileTarget,
};

/// Error with a process exit code and a stable class for the report.
#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub class: String,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            exit: 2,
            class: "config-error".into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            exit: 3,
            class: "data-error".into(),
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            exit: 5,
            class: "io-error".into(),
            message: message.into(),
        }
    }
}

impl From<tailpot::Error> for CliError {
    fn from(e: tailpot::Error) -> Self {
        let exit = match &e {
            tailpot::Error::InvalidArgument(_) => 2,
            tailpot::Error::Data(_) | tailpot::Error::Degenerate(_) => 3,
            tailpot::Error::Boundary(_)
            | tailpot::Error::NonConvergence { .. }
            | tailpot::Error::Conditioning { .. } => 4,
            tailpot::Error::Internal(_) => 5,
        };
        CliError {
            exit,
            class: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tailpot",
    version,
    about = "Peaks-over-threshold tail inference for dependent time series"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by all subcommands; unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Column name or 0-based index (default: first column).
    #[arg(long)]
    column: Option<String>,
    /// 'error' or 'drop-with-warning'.
    #[arg(long)]
    na_policy: Option<String>,
    /// Number of upper order statistics used for the fit.
    #[arg(long)]
    k: Option<usize>,
    /// Extreme level(s) to extrapolate to; repeatable.
    #[arg(long = "tau-e")]
    tau_e: Vec<f64>,
    /// Nominal non-coverage level of regions and intervals.
    #[arg(long)]
    alpha: Option<f64>,
    /// Block length of the serial-covariance estimator.
    #[arg(long)]
    m: Option<usize>,
    /// 'sliding' or 'disjoint'.
    #[arg(long)]
    block: Option<String>,
    /// Shape prior: truncnormal:MEAN,SD | flat:MAX | point:VALUE.
    #[arg(long)]
    prior_gamma: Option<String>,
    /// Scale prior: lognormal:SD | vague:FACTOR.
    #[arg(long)]
    prior_sigma: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    /// MCMC iterations per chain (50% burn-in).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// delta | independence | mc[:DRAWS,SEED].
    #[arg(long)]
    variance_method: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero all timings so identical runs emit byte-identical reports.
    #[arg(long)]
    deterministic: bool,
    /// Dump posterior parameter draws to this CSV.
    #[arg(long)]
    draws_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct DynamicArgs {
    /// Autoregressive order of the conditional-mean filter.
    #[arg(long)]
    p: Option<usize>,
    /// Moving-average order.
    #[arg(long)]
    q: Option<usize>,
    /// Include an intercept in the filter.
    #[arg(long)]
    include_mean: bool,
    /// Exogenous-matrix CSV (all columns used, rows aligned with the input).
    #[arg(long)]
    exog: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// MLE fit plus serial covariance and frequentist regions.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Serial covariance matrices only.
    Covmat {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Naive and adjusted posterior summaries for (shape, scale).
    Posterior {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Extreme-quantile inference, frequentist and Bayesian, per tau-E.
    Quantile {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Past-conditional quantile via the ARMA residual pipeline.
    Dynamic {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        dynamic: DynamicArgs,
    },
    /// h-step-ahead conditional quantile posteriors.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        dynamic: DynamicArgs,
        /// Forecast horizon (posteriors are reported for 1..=h).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Generate a reference model path as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Model name, e.g. ar1_t1, arch1, clayton_exp, ar1_garch11.
        #[arg(long)]
        model: Option<String>,
        /// Path length.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Interval/region coverage experiment over a (model, n, k) grid.
    Coverage {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated model names.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        /// Comma-separated exceedance counts (paired with n_list by grid).
        #[arg(long, value_delimiter = ',')]
        k_list: Vec<usize>,
        #[arg(long)]
        replications: Option<usize>,
        /// Also write the per-cell table as CSV here.
        #[arg(long, alias = "emit-plot-data")]
        csv_out: Option<PathBuf>,
    },
    /// Replicate the covariance estimator across block lengths and modes.
    SigmaExp {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated block lengths.
        #[arg(long, value_delimiter = ',')]
        m_list: Vec<usize>,
        /// Comma-separated block modes.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, alias = "emit-plot-data")]
        csv_out: Option<PathBuf>,
    },
}

fn resolve(common: &CommonArgs) -> Result<AnalysisConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => AnalysisConfig::from_file(path)?,
        None => AnalysisConfig::default(),
    };
    if let Some(v) = &common.input {
        cfg.input = Some(v.display().to_string());
    }
    if let Some(v) = &common.column {
        cfg.column = Some(v.clone());
    }
    if let Some(v) = &common.na_policy {
        cfg.na_policy = v.clone();
    }
    if let Some(v) = common.k {
        cfg.k = Some(v);
    }
    if !common.tau_e.is_empty() {
        cfg.tau_e = common.tau_e.clone();
    }
    if let Some(v) = common.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = common.m {
        cfg.m = v;
    }
    if let Some(v) = &common.block {
        cfg.block = v.clone();
    }
    if let Some(v) = &common.prior_gamma {
        cfg.prior_gamma = Some(v.clone());
    }
    if let Some(v) = &common.prior_sigma {
        cfg.prior_sigma = Some(v.clone());
    }
    if let Some(v) = common.chains {
        cfg.chains = v;
    }
    if let Some(v) = common.iters {
        cfg.iters = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.variance_method {
        cfg.variance_method = v.clone();
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    // Eager validation of enumerated fields, before any computation.
    NaPolicy::parse(&cfg.na_policy)?;
    cfg.block_mode()?;
    cfg.prior()?;
    cfg.variance()?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(CliError::config(format!(
            "alpha must be in (0,1), got {}",
            cfg.alpha
        )));
    }
    Ok(cfg)
}

struct Timer {
    start: Instant,
    deterministic: bool,
}

impl Timer {
    fn new(deterministic: bool) -> Self {
        Timer {
            start: Instant::now(),
            deterministic,
        }
    }

    fn lap(&mut self, report: &mut Report, stage: &str) {
        let ms = if self.deterministic {
            0
        } else {
            self.start.elapsed().as_millis() as u64
        };
        report.timings_ms.insert(stage.to_string(), ms);
        self.start = Instant::now();
    }
}

fn load_series(cfg: &AnalysisConfig, report: &mut Report) -> Result<Vec<f64>, CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::config("--input is required"))?;
    let (series, warnings) = ingest::ingest_csv(
        Path::new(input),
        cfg.column.as_deref(),
        NaPolicy::parse(&cfg.na_policy)?,
    )?;
    if series.len() < 10 {
        return Err(CliError::data(format!(
            "need at least 10 usable rows for analysis, got {}",
            series.len()
        )));
    }
    report.load_warnings = Some(warnings);
    Ok(series)
}

fn require_k(cfg: &AnalysisConfig, n: usize) -> Result<usize, CliError> {
    let k = cfg
        .k
        .ok_or_else(|| CliError::config("--k is required"))?;
    if k >= n {
        return Err(CliError::config(format!(
            "k must be below the series length: k={k}, n={n}"
        )));
    }
    // tau_E validation before any computation.
    let tau_i = 1.0 - k as f64 / n as f64;
    for &t in &cfg.tau_e {
        if !(t > tau_i && t < 1.0) {
            return Err(CliError::config(format!(
                "tau_E must satisfy 1 - k/n = {tau_i} < tau_E < 1, got {t}"
            )));
        }
    }
    Ok(k)
}

fn dump_draws(
    path: &Path,
    naive: &tailpot::PosteriorDraws,
    adjusted: &tailpot::PosteriorDraws,
) -> Result<(), CliError> {
    let mut out = String::from("posterior,gamma,sigma\n");
    for (label, draws) in [("naive", naive), ("adjusted", adjusted)] {
        for (g, s) in &draws.draws {
            out.push_str(&format!("{label},{g},{s}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| CliError::io(format!("cannot write draws: {e}")))
}

/// The shared marginal analysis: fit, covariance, and (per stage) regions,
/// posteriors, and quantile posteriors on an arbitrary series.
#[allow(clippy::too_many_arguments)]
fn marginal_analysis(
    series: &[f64],
    cfg: &AnalysisConfig,
    report: &mut Report,
    timer: &mut Timer,
    with_freq: bool,
    with_posterior: bool,
    with_quantiles: bool,
    shift: f64,
    draws_out: Option<&Path>,
) -> Result<(), CliError> {
    let n = series.len();
    let k = require_k(cfg, n)?;
    let exc = ExceedanceSet::from_series(series, k)?;
    let fit = mle_fit(&exc, &FitOptions::default())?;
    timer.lap(report, "fit");
    let cov = assemble(series, k, cfg.m, cfg.block_mode()?, None, &fit)?;
    timer.lap(report, "covariance");
    report.fit = Some(fit.clone());
    report.covariance = Some(cov.clone());

    if with_freq {
        let (gamma, scale) = param_intervals(&fit, &cov, k, cfg.alpha)?;
        let region = confidence_ellipsoid(&fit, &cov, k, cfg.alpha)?;
        report.frequentist = Some(FreqSection {
            gamma,
            scale,
            region,
            alpha: cfg.alpha,
        });
        timer.lap(report, "frequentist");
    }

    if with_posterior || with_quantiles {
        let prior = cfg.prior()?;
        let mcmc = cfg.mcmc();
        let naive = sample_posterior(&exc, &fit, &cov, &prior, &mcmc, false)?;
        let adjusted = sample_posterior(&exc, &fit, &cov, &prior, &mcmc, true)?;
        report.posterior_naive = Some(summarize_posterior(&naive, cfg.alpha)?);
        report.posterior_adjusted = Some(summarize_posterior(&adjusted, cfg.alpha)?);
        timer.lap(report, "posterior");
        if let Some(path) = draws_out {
            dump_draws(path, &naive, &adjusted)?;
        }

        if with_quantiles {
            let method = cfg.variance()?;
            let mut sections = Vec::new();
            for tau_e in cfg.tau_e_list(n) {
                let target = QuantileTarget::new(n, k, tau_e)?;
                let mut freq =
                    quantile_interval(&fit, &cov, &exc, &target, cfg.alpha, method)?;
                freq.point += shift;
                freq.lower += shift;
                freq.upper += shift;
                let qp_naive = quantile_posterior(
                    &naive, &fit, &exc, &cov, &target, method, Some(1.0),
                )?;
                let qp_adj =
                    quantile_posterior(&adjusted, &fit, &exc, &cov, &target, method, None)?;
                sections.push(QuantileSection {
                    tau_e,
                    frequentist: freq,
                    naive: summarize_quantile(&qp_naive, cfg.alpha, shift)?,
                    adjusted: summarize_quantile(&qp_adj, cfg.alpha, shift)?,
                });
            }
            report.quantiles = Some(sections);
            timer.lap(report, "quantile");
        }
    }
    Ok(())
}

fn load_dynamic_inputs(
    cfg: &AnalysisConfig,
    dynamic: &DynamicArgs,
    report: &mut Report,
) -> Result<(Vec<f64>, ArmaSpec, Option<Vec<Vec<f64>>>, ResidualSet), CliError> {
    let series = load_series(cfg, report)?;
    let exog = match &dynamic.exog {
        Some(path) => Some(ingest::ingest_exog(path)?),
        None => cfg
            .exog
            .as_ref()
            .map(|p| ingest::ingest_exog(Path::new(p)))
            .transpose()?,
    };
    let exog_dim = exog.as_ref().map(|e| e[0].len()).unwrap_or(0);
    let p = dynamic.p.unwrap_or(cfg.p);
    let q = dynamic.q.unwrap_or(cfg.q);
    let include_mean = dynamic.include_mean || cfg.include_mean;
    let spec = ArmaSpec::new(p, q, include_mean, exog_dim)?;
    let res = make_residuals(&series, &spec, exog.as_deref(), None)?;
    Ok((series, spec, exog, res))
}

fn dynamic_settings(cfg: &AnalysisConfig, max_horizon: usize) -> Result<DynamicSettings, CliError> {
    Ok(DynamicSettings {
        m: cfg.m,
        mode: cfg.block_mode()?,
        prior: cfg.prior()?,
        mcmc: cfg.mcmc(),
        variance_method: cfg.variance()?,
        max_horizon: max_horizon.max(24),
    })
}

fn run(cmd: &Cmd) -> Result<Report, (Report, CliError)> {
    // Build the report skeleton first so errors can still carry the
    // resolved config.
    let common = match cmd {
        Cmd::Fit { common }
        | Cmd::Covmat { common }
        | Cmd::Posterior { common }
        | Cmd::Quantile { common }
        | Cmd::Dynamic { common, .. }
        | Cmd::Forecast { common, .. }
        | Cmd::Simulate { common, .. }
        | Cmd::Coverage { common, .. }
        | Cmd::SigmaExp { common, .. } => common,
    };
    let name = match cmd {
        Cmd::Fit { .. } => "fit",
        Cmd::Covmat { .. } => "covmat",
        Cmd::Posterior { .. } => "posterior",
        Cmd::Quantile { .. } => "quantile",
        Cmd::Dynamic { .. } => "dynamic",
        Cmd::Forecast { .. } => "forecast",
        Cmd::Simulate { .. } => "simulate",
        Cmd::Coverage { .. } => "coverage",
        Cmd::SigmaExp { .. } => "sigma-exp",
    };
    let cfg = match resolve(common) {
        Ok(cfg) => cfg,
        Err(e) => return Err((Report::new(name, AnalysisConfig::default()), e)),
    };
    let mut report = Report::new(name, cfg.clone());
    let mut timer = Timer::new(cfg.deterministic);
    match dispatch(cmd, &cfg, &mut report, &mut timer, common) {
        Ok(()) => {
            timer.lap(&mut report, "total_residual");
            Ok(report)
        }
        Err(e) => Err((report, e)),
    }
}

fn dispatch(
    cmd: &Cmd,
    cfg: &AnalysisConfig,
    report: &mut Report,
    timer: &mut Timer,
    common: &CommonArgs,
) -> Result<(), CliError> {
    match cmd {
        Cmd::Fit { .. } => {
            let series = load_series(cfg, report)?;
            timer.lap(report, "load");
            marginal_analysis(&series, cfg, report, timer, true, false, false, 0.0, None)
        }
        Cmd::Covmat { .. } => {
            let series = load_series(cfg, report)?;
            timer.lap(report, "load");
            marginal_analysis(&series, cfg, report, timer, false, false, false, 0.0, None)
        }
        Cmd::Posterior { .. } => {
            let series = load_series(cfg, report)?;
            timer.lap(report, "load");
            marginal_analysis(
                &series,
                cfg,
                report,
                timer,
                true,
                true,
                false,
                0.0,
                common.draws_out.as_deref(),
            )
        }
        Cmd::Quantile { .. } => {
            let series = load_series(cfg, report)?;
            timer.lap(report, "load");
            marginal_analysis(
                &series,
                cfg,
                report,
                timer,
                true,
                true,
                true,
                0.0,
                common.draws_out.as_deref(),
            )
        }
        Cmd::Dynamic { dynamic, .. } => {
            let (_, _, _, res) = load_dynamic_inputs(cfg, dynamic, report)?;
            timer.lap(report, "residuals");
            report.dynamic = Some(DynamicSection {
                coefficients: res.coefficients.clone(),
                cls_converged: true,
                discarded: res.discarded,
                n_residuals: res.residuals.len(),
                one_step_pred: res.one_step_pred,
                horizons: Vec::new(),
            });
            marginal_analysis(
                &res.residuals,
                cfg,
                report,
                timer,
                true,
                true,
                true,
                res.one_step_pred,
                common.draws_out.as_deref(),
            )
        }
        Cmd::Forecast {
            dynamic, horizon, ..
        } => {
            let (series, spec, exog, res) = load_dynamic_inputs(cfg, dynamic, report)?;
            timer.lap(report, "residuals");
            let h = horizon.unwrap_or(cfg.horizon);
            let k = require_k(cfg, res.residuals.len())?;
            let settings = dynamic_settings(cfg, h)?;
            let mut horizons = Vec::new();
            for tau_e in cfg.tau_e_list(res.residuals.len()) {
                let per_h = h_step_quantile(&series, &spec, exog.as_deref(), h, k, &settings, tau_e)?;
                for dq in per_h {
                    horizons.push(HorizonSummary {
                        horizon: dq.horizon,
                        tau_e,
                        shift: dq.shift,
                        quantile: summarize_quantile(&dq.posterior, cfg.alpha, 0.0)?,
                    });
                }
            }
            report.dynamic = Some(DynamicSection {
                coefficients: res.coefficients.clone(),
                cls_converged: true,
                discarded: res.discarded,
                n_residuals: res.residuals.len(),
                one_step_pred: res.one_step_pred,
                horizons,
            });
            timer.lap(report, "forecast");
            Ok(())
        }
        Cmd::Simulate {
            model, n, burn_in, ..
        } => {
            let model = model
                .as_deref()
                .or(cfg.model.as_deref())
                .ok_or_else(|| CliError::config("--model is required"))?;
            let model = ModelName::parse(model)?;
            let n = n
                .or(cfg.n)
                .ok_or_else(|| CliError::config("--n is required"))?;
            let spec = ModelSpec {
                name: model,
                n,
                seed: cfg.seed,
                burn_in: burn_in.unwrap_or(cfg.burn_in),
            };
            let sim = simulate(&spec)?;
            let mut csv = String::new();
            match &sim.innovations {
                Some(innov) => {
                    csv.push_str("value,innovation\n");
                    for (y, x) in sim.series.iter().zip(innov) {
                        csv.push_str(&format!("{y},{x}\n"));
                    }
                }
                None => {
                    csv.push_str("value\n");
                    for y in &sim.series {
                        csv.push_str(&format!("{y}\n"));
                    }
                }
            }
            timer.lap(report, "simulate");
            match &common.out {
                Some(path) => std::fs::write(path, csv)
                    .map_err(|e| CliError::io(format!("cannot write series: {e}")))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Cmd::Coverage {
            models,
            n_list,
            k_list,
            replications,
            csv_out,
            ..
        } => {
            let model_names = if models.is_empty() { &cfg.models } else { models };
            let ns = if n_list.is_empty() { &cfg.n_list } else { n_list };
            let ks = if k_list.is_empty() { &cfg.k_list } else { k_list };
            if model_names.is_empty() || ns.is_empty() || ks.is_empty() {
                return Err(CliError::config(
                    "coverage needs --models, --n-list, and --k-list",
                ));
            }
            let mut cells = Vec::new();
            for m in model_names {
                let model = ModelName::parse(m)?;
                for &n in ns {
                    for &k in ks {
                        cells.push(CoverageCell { model, n, k });
                    }
                }
            }
            let exp = CoverageConfig {
                cells,
                replications: replications.unwrap_or(cfg.replications),
                alpha: cfg.alpha,
                seed: cfg.seed,
                mcmc_iterations: cfg.iters.min(20_000),
                m: cfg.m,
                prior: cfg.experiment_prior()?,
            };
            let result = coverage_experiment(&exp)?;
            if let Some(path) = csv_out {
                std::fs::write(path, result.to_csv())
                    .map_err(|e| CliError::io(format!("cannot write CSV: {e}")))?;
            }
            report.coverage = Some(result);
            timer.lap(report, "coverage");
            Ok(())
        }
        Cmd::SigmaExp {
            model,
            n,
            m_list,
            modes,
            replications,
            csv_out,
            ..
        } => {
            let model = model
                .as_deref()
                .or(cfg.model.as_deref())
                .ok_or_else(|| CliError::config("--model is required"))?;
            let model = ModelName::parse(model)?;
            let n = n
                .or(cfg.n)
                .ok_or_else(|| CliError::config("--n is required"))?;
            let k = cfg.k.ok_or_else(|| CliError::config("--k is required"))?;
            let ms = if m_list.is_empty() { &cfg.m_list } else { m_list };
            let mode_names = if modes.is_empty() { &cfg.modes } else { modes };
            let mut block_modes = Vec::new();
            for m in mode_names {
                block_modes.push(config::parse_block(m)?);
            }
            let rows = sigma_experiment(
                model,
                n,
                k,
                ms,
                &block_modes,
                replications.unwrap_or(cfg.replications),
                cfg.seed,
            )?;
            if let Some(path) = csv_out {
                let mut csv =
                    String::from("m,mode,component,mean,q05,q95,replications,failures\n");
                for row in &rows {
                    for (ci, name) in ["s11", "s12", "s22"].iter().enumerate() {
                        csv.push_str(&format!(
                            "{},{:?},{},{},{},{},{},{}\n",
                            row.m,
                            row.mode,
                            name,
                            row.mean[ci],
                            row.q05[ci],
                            row.q95[ci],
                            row.replications,
                            row.failures
                        ));
                    }
                }
                std::fs::write(path, csv)
                    .map_err(|e| CliError::io(format!("cannot write CSV: {e}")))?;
            }
            report.sigma_experiment = Some(rows);
            timer.lap(report, "sigma_experiment");
            Ok(())
        }
    }
}

fn emit(report: &Report, out: Option<&Path>) -> i32 {
    let json = match serde_json::to_string_pretty(report) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("cannot serialize report: {e}");
            return 5;
        }
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json) {
                eprintln!("cannot write report: {e}");
                return 5;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{json}");
        }
    }
    0
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = match &cli.cmd {
        Cmd::Fit { common }
        | Cmd::Covmat { common }
        | Cmd::Posterior { common }
        | Cmd::Quantile { common }
        | Cmd::Dynamic { common, .. }
        | Cmd::Forecast { common, .. }
        | Cmd::Coverage { common, .. }
        | Cmd::SigmaExp { common, .. } => common.out.clone(),
        // simulate uses --out for the CSV itself; its report goes to stdout.
        Cmd::Simulate { .. } => None,
    };
    match run(&cli.cmd) {
        Ok(report) => {
            let code = emit(&report, out.as_deref());
            std::process::exit(code);
        }
        Err((mut report, err)) => {
            eprintln!("error: {}", err.message);
            report.error = Some(ErrorInfo {
                class: err.class.clone(),
                message: err.message.clone(),
            });
            let _ = emit(&report, out.as_deref());
            std::process::exit(err.exit);
        }
    }
}
