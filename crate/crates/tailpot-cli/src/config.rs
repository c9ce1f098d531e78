//! Resolved analysis configuration: defaults, TOML file, then command-line
//! flags, in that order of precedence (flags win). The fully resolved config
//! is embedded in every report for audit.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;
use tailpot::covariance::BlockMode;
use tailpot::{GammaPrior, McmcSettings, PriorSpec, SigmaPrior, VarianceMethod};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    // Data ingestion.
    pub input: Option<String>,
    pub column: Option<String>,
    pub na_policy: String,
    pub exog: Option<String>,

    // Threshold and targets.
    pub k: Option<usize>,
    pub tau_e: Vec<f64>,
    pub alpha: f64,

    // Serial-covariance estimator.
    pub m: usize,
    pub block: String,

    // Priors and MCMC. Unset priors fall back to per-command defaults
    // (informative for data analysis, vague for the coverage experiment).
    pub prior_gamma: Option<String>,
    pub prior_sigma: Option<String>,
    pub chains: usize,
    pub iters: usize,
    pub seed: u64,
    pub variance_method: String,

    // Dynamic pipeline.
    pub p: usize,
    pub q: usize,
    pub include_mean: bool,
    pub horizon: usize,

    // Simulation lab.
    pub model: Option<String>,
    pub n: Option<usize>,
    pub burn_in: usize,
    pub models: Vec<String>,
    pub n_list: Vec<usize>,
    pub k_list: Vec<usize>,
    pub replications: usize,
    pub m_list: Vec<usize>,
    pub modes: Vec<String>,

    // Reporting.
    pub deterministic: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            input: None,
            column: None,
            na_policy: "error".into(),
            exog: None,
            k: None,
            tau_e: Vec::new(),
            alpha: 0.05,
            m: 50,
            block: "sliding".into(),
            prior_gamma: None,
            prior_sigma: None,
            chains: 2,
            iters: 20_000,
            seed: 0x7a11,
            variance_method: "delta".into(),
            p: 1,
            q: 0,
            include_mean: false,
            horizon: 1,
            model: None,
            n: None,
            burn_in: 1000,
            models: Vec::new(),
            n_list: Vec::new(),
            k_list: Vec::new(),
            replications: 500,
            m_list: vec![50],
            modes: vec!["sliding".into()],
            deterministic: false,
        }
    }
}

impl AnalysisConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))
    }

    pub fn block_mode(&self) -> Result<BlockMode, CliError> {
        parse_block(&self.block)
    }

    /// Prior for data analysis: defaults to the informative shape prior.
    pub fn prior(&self) -> Result<PriorSpec, CliError> {
        self.prior_with("truncnormal:0,0.4", "lognormal:1")
    }

    /// Prior for the coverage experiment: defaults to a vague shape prior so
    /// the credible intervals are prior-robust across tail regimes.
    pub fn experiment_prior(&self) -> Result<PriorSpec, CliError> {
        self.prior_with("flat:5", "lognormal:1")
    }

    fn prior_with(&self, default_gamma: &str, default_sigma: &str) -> Result<PriorSpec, CliError> {
        let gamma_spec = self.prior_gamma.as_deref().unwrap_or(default_gamma);
        let sigma_spec = self.prior_sigma.as_deref().unwrap_or(default_sigma);
        let gamma = match split_spec(gamma_spec)? {
            ("truncnormal", args) => {
                let (mean, sd) = two_floats(&args, "prior_gamma truncnormal:MEAN,SD")?;
                GammaPrior::TruncatedNormal { mean, sd }
            }
            ("flat", args) => GammaPrior::Flat {
                gamma_max: one_float(&args, "prior_gamma flat:MAX")?,
            },
            ("point", args) => GammaPrior::PointMass {
                value: one_float(&args, "prior_gamma point:VALUE")?,
            },
            (other, _) => {
                return Err(CliError::config(format!(
                    "prior_gamma must be truncnormal:MEAN,SD | flat:MAX | point:VALUE, got '{other}'"
                )))
            }
        };
        let sigma = match split_spec(sigma_spec)? {
            ("lognormal", args) => SigmaPrior::Lognormal {
                sd: one_float(&args, "prior_sigma lognormal:SD")?,
            },
            ("vague", args) => SigmaPrior::Vague {
                factor: one_float(&args, "prior_sigma vague:FACTOR")?,
            },
            (other, _) => {
                return Err(CliError::config(format!(
                    "prior_sigma must be lognormal:SD | vague:FACTOR, got '{other}'"
                )))
            }
        };
        Ok(PriorSpec { gamma, sigma })
    }

    pub fn mcmc(&self) -> McmcSettings {
        McmcSettings {
            chains: self.chains,
            iterations: self.iters,
            burn_in_frac: 0.5,
            seed: self.seed,
            target_accept: 0.234,
        }
    }

    pub fn variance(&self) -> Result<VarianceMethod, CliError> {
        match split_spec(&self.variance_method)? {
            ("delta", _) => Ok(VarianceMethod::Delta),
            ("independence", _) => Ok(VarianceMethod::Independence),
            ("mc", args) if args.is_empty() => Ok(VarianceMethod::Mc {
                draws: 2000,
                seed: self.seed,
            }),
            ("mc", args) => {
                let (d, s) = two_floats(&args, "variance_method mc:DRAWS,SEED")?;
                Ok(VarianceMethod::Mc {
                    draws: d as usize,
                    seed: s as u64,
                })
            }
            (other, _) => Err(CliError::config(format!(
                "variance_method must be delta | independence | mc[:DRAWS,SEED], got '{other}'"
            ))),
        }
    }

    /// Extreme levels to analyze; defaults to the just-out-of-sample level
    /// 1 - 1/n when none are configured.
    pub fn tau_e_list(&self, n: usize) -> Vec<f64> {
        if self.tau_e.is_empty() {
            vec![1.0 - 1.0 / n as f64]
        } else {
            self.tau_e.clone()
        }
    }
}

pub fn parse_block(s: &str) -> Result<BlockMode, CliError> {
    match s {
        "sliding" => Ok(BlockMode::Sliding),
        "disjoint" => Ok(BlockMode::Disjoint),
        other => Err(CliError::config(format!(
            "block mode must be 'sliding' or 'disjoint', got '{other}'"
        ))),
    }
}

fn split_spec(s: &str) -> Result<(&str, Vec<&str>), CliError> {
    let mut it = s.splitn(2, ':');
    let head = it.next().unwrap_or("");
    let args = it
        .next()
        .map(|rest| rest.split(',').map(str::trim).collect())
        .unwrap_or_default();
    Ok((head, args))
}

fn one_float(args: &[&str], what: &str) -> Result<f64, CliError> {
    if args.len() != 1 {
        return Err(CliError::config(format!("expected {what}")));
    }
    args[0]
        .parse()
        .map_err(|_| CliError::config(format!("expected {what}")))
}

fn two_floats(args: &[&str], what: &str) -> Result<(f64, f64), CliError> {
    if args.len() != 2 {
        return Err(CliError::config(format!("expected {what}")));
    }
    let a = args[0]
        .parse()
        .map_err(|_| CliError::config(format!("expected {what}")))?;
    let b = args[1]
        .parse()
        .map_err(|_| CliError::config(format!("expected {what}")))?;
    Ok((a, b))
}
