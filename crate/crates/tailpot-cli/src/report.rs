//! JSON report schema. Every run emits one report embedding the resolved
//! configuration; sections are present when the subcommand computes them.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::config::AnalysisConfig;
use tailpot::dynamic::ArmaCoefficients;
use tailpot::{
    CoverageReport, EllipsoidRegion, Interval, Mat2, MleFit, PosteriorDraws, QuantileInterval,
    QuantilePosterior, SerialCovariance, SigmaRow, Vec2,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: AnalysisConfig,
    /// Wall-clock stage timings; all zero under --deterministic.
    pub timings_ms: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_warnings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<MleFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<SerialCovariance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequentist: Option<FreqSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_naive: Option<PosteriorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_adjusted: Option<PosteriorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<QuantileSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_experiment: Option<Vec<SigmaRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl Report {
    pub fn new(command: &str, config: AnalysisConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            timings_ms: BTreeMap::new(),
            load_warnings: None,
            fit: None,
            covariance: None,
            frequentist: None,
            posterior_naive: None,
            posterior_adjusted: None,
            quantiles: None,
            dynamic: None,
            coverage: None,
            sigma_experiment: None,
            error: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    /// Stable machine-readable class, e.g. "invalid-argument".
    pub class: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct FreqSection {
    pub gamma: Interval,
    pub scale: Interval,
    pub region: EllipsoidRegion,
    pub alpha: f64,
}

#[derive(Debug, Serialize)]
pub struct PosteriorSummary {
    pub adjusted: bool,
    pub mean: Vec2,
    pub covariance: Mat2,
    pub gamma: Interval,
    pub scale: Interval,
    pub region: EllipsoidRegion,
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub rhat: f64,
    pub tuning_warning: bool,
}

pub fn summarize_posterior(
    draws: &PosteriorDraws,
    alpha: f64,
) -> tailpot::Result<PosteriorSummary> {
    let (region, gamma, scale) = tailpot::credible_summaries(draws, alpha)?;
    Ok(PosteriorSummary {
        adjusted: draws.adjusted,
        mean: draws.mean(),
        covariance: draws.covariance(),
        gamma,
        scale,
        region,
        n_draws: draws.draws.len(),
        acceptance_rate: draws.acceptance_rate,
        rhat: draws.rhat,
        tuning_warning: draws.tuning_warning,
    })
}

#[derive(Debug, Serialize)]
pub struct QuantileSummary {
    pub point: f64,
    pub interval: Interval,
    pub c_tilde: f64,
    pub v_hat: f64,
    pub n_draws: usize,
}

pub fn summarize_quantile(
    qp: &QuantilePosterior,
    alpha: f64,
    shift: f64,
) -> tailpot::Result<QuantileSummary> {
    let iv = qp.interval(alpha)?;
    Ok(QuantileSummary {
        point: qp.q_hat + shift,
        interval: Interval {
            lower: iv.lower + shift,
            upper: iv.upper + shift,
        },
        c_tilde: qp.c_tilde,
        v_hat: qp.v_hat,
        n_draws: qp.q_draws.len(),
    })
}

#[derive(Debug, Serialize)]
pub struct QuantileSection {
    pub tau_e: f64,
    pub frequentist: QuantileInterval,
    pub naive: QuantileSummary,
    pub adjusted: QuantileSummary,
}

#[derive(Debug, Serialize)]
pub struct DynamicSection {
    pub coefficients: ArmaCoefficients,
    pub cls_converged: bool,
    pub discarded: usize,
    pub n_residuals: usize,
    pub one_step_pred: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<HorizonSummary>,
}

#[derive(Debug, Serialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub tau_e: f64,
    pub shift: f64,
    pub quantile: QuantileSummary,
}
