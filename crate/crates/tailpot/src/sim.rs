//! Simulation lab: reference generators for seven dependent time-series
//! models, Monte-Carlo truth oracles for their tail parameters, the
//! covariance-estimator experiment, and the coverage experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{credible_summaries, quantile_posterior, sample_posterior, McmcSettings, PriorSpec};
use crate::covariance::{assemble, BlockMode};
use crate::dynamic::{make_residuals, ArmaSpec};
use crate::error::{Error, Result};
use crate::freq::{
    confidence_ellipsoid, param_intervals, quantile_interval, QuantileTarget, VarianceMethod,
};
use crate::likelihood::{mle_fit, ExceedanceSet, FitOptions};
use crate::mat2::{Mat2, Vec2};

mod truths_table;

/// The seven reference data-generating processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    /// AR(1), coefficient 0.8, Student-t(1) innovations; marginal gamma = 1.
    Ar1T1,
    /// ARMA(1,1), coefficients (0.8, 0.8), Student-t(2); marginal gamma = 1/2.
    Arma11T2,
    /// ARCH(1): scale^2 = 2e-5 + 0.99 X^2, Gaussian; marginal gamma ~ 0.493.
    Arch1,
    /// Clayton-copula Markov chain (eta = 0.41), unit-exponential marginal.
    ClaytonExp,
    /// Clayton-copula Markov chain (eta = 1.06), power-law marginal with
    /// endpoint 1 and gamma = -1/3.
    ClaytonPower,
    /// ARMA(2,1), coefficients (0.5, 0.1875; 0.8), Student-t(5) innovations;
    /// innovation gamma = 1/5. Dynamic model.
    Arma21T5,
    /// AR(1) with GARCH(1,1) innovations; innovation gamma ~ 0.207. Dynamic.
    Ar1Garch11,
}

impl ModelName {
    pub const ALL: [ModelName; 7] = [
        ModelName::Ar1T1,
        ModelName::Arma11T2,
        ModelName::Arch1,
        ModelName::ClaytonExp,
        ModelName::ClaytonPower,
        ModelName::Arma21T5,
        ModelName::Ar1Garch11,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ar1_t1" => Ok(ModelName::Ar1T1),
            "arma11_t2" => Ok(ModelName::Arma11T2),
            "arch1" => Ok(ModelName::Arch1),
            "clayton_exp" => Ok(ModelName::ClaytonExp),
            "clayton_power" => Ok(ModelName::ClaytonPower),
            "arma21_t5" => Ok(ModelName::Arma21T5),
            "ar1_garch11" => Ok(ModelName::Ar1Garch11),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Ar1T1 => "ar1_t1",
            ModelName::Arma11T2 => "arma11_t2",
            ModelName::Arch1 => "arch1",
            ModelName::ClaytonExp => "clayton_exp",
            ModelName::ClaytonPower => "clayton_power",
            ModelName::Arma21T5 => "arma21_t5",
            ModelName::Ar1Garch11 => "ar1_garch11",
        }
    }

    /// Dynamic models expose an innovation series alongside the observables.
    pub fn is_dynamic(self) -> bool {
        matches!(self, ModelName::Arma21T5 | ModelName::Ar1Garch11)
    }

    /// True extreme-value index of the tail being estimated (marginal for
    /// the static models, innovation for the dynamic ones).
    pub fn gamma0(self) -> f64 {
        match self {
            ModelName::Ar1T1 => 1.0,
            ModelName::Arma11T2 => 0.5,
            ModelName::Arch1 => 0.493,
            ModelName::ClaytonExp => 0.0,
            ModelName::ClaytonPower => -1.0 / 3.0,
            ModelName::Arma21T5 => 0.2,
            ModelName::Ar1Garch11 => 0.207,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: ModelName,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl ModelSpec {
    pub fn new(name: ModelName, n: usize, seed: u64) -> Self {
        ModelSpec {
            name,
            n,
            seed,
            burn_in: 1000,
        }
    }
}

/// A simulated path; dynamic models also carry the true innovations,
/// index-aligned with the series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOutput {
    pub series: Vec<f64>,
    pub innovations: Option<Vec<f64>>,
}

// Clayton conditional-copula inverse on the survival scale: next survival
// value given the current one and an independent uniform v.
fn clayton_step(s: f64, v: f64, eta: f64) -> f64 {
    ((v.powf(-eta / (1.0 + eta)) - 1.0) * s.powf(-eta) + 1.0).powf(-1.0 / eta)
}

fn clayton_chain(n: usize, burn_in: usize, eta: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    // The chain has uniform marginals from the start, so the burn-in only
    // decorrelates the fixed initial draw.
    let mut s: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n + burn_in {
        if i >= burn_in {
            out.push(s);
        }
        let v: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        s = clayton_step(s, v, eta).clamp(f64::MIN_POSITIVE, 1.0);
    }
    out
}

// Power-law marginal with endpoint 1: F(x) = 1 - (1-x)^3 / 9, quantile from
// the survival value s = 1 - u.
fn power_marginal_from_survival(s: f64) -> f64 {
    1.0 - (9.0 * s).cbrt()
}

/// Generate one path. Deterministic given the spec; recursive models discard
/// `burn_in` initial steps. Dynamic models return the innovations too.
pub fn simulate(spec: &ModelSpec) -> Result<SimOutput> {
    if spec.n == 0 {
        return Err(Error::invalid("series length must be positive"));
    }
    if spec.burn_in < 500
        && !matches!(spec.name, ModelName::ClaytonExp | ModelName::ClaytonPower)
    {
        return Err(Error::invalid(
            "recursive models need burn_in >= 500".to_string(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (n, burn) = (spec.n, spec.burn_in);
    let out = match spec.name {
        ModelName::Ar1T1 => {
            let t = StudentT::new(1.0).unwrap();
            let mut x = 0.0;
            let mut series = Vec::with_capacity(n);
            for i in 0..n + burn {
                x = 0.8 * x + t.sample(&mut rng);
                if i >= burn {
                    series.push(x);
                }
            }
            SimOutput {
                series,
                innovations: None,
            }
        }
        ModelName::Arma11T2 => {
            let t = StudentT::new(2.0).unwrap();
            let (mut x, mut e_prev) = (0.0, 0.0);
            let mut series = Vec::with_capacity(n);
            for i in 0..n + burn {
                let e: f64 = t.sample(&mut rng);
                x = 0.8 * x + e + 0.8 * e_prev;
                e_prev = e;
                if i >= burn {
                    series.push(x);
                }
            }
            SimOutput {
                series,
                innovations: None,
            }
        }
        ModelName::Arch1 => {
            let mut x: f64 = 0.0;
            let mut series = Vec::with_capacity(n);
            for i in 0..n + burn {
                let psi2 = 2e-5 + 0.99 * x * x;
                let z: f64 = StandardNormal.sample(&mut rng);
                x = psi2.sqrt() * z;
                if i >= burn {
                    series.push(x);
                }
            }
            SimOutput {
                series,
                innovations: None,
            }
        }
        ModelName::ClaytonExp => {
            let series = clayton_chain(n, burn, 0.41, &mut rng)
                .into_iter()
                .map(|s| -s.ln())
                .collect();
            SimOutput {
                series,
                innovations: None,
            }
        }
        ModelName::ClaytonPower => {
            let series = clayton_chain(n, burn, 1.06, &mut rng)
                .into_iter()
                .map(power_marginal_from_survival)
                .collect();
            SimOutput {
                series,
                innovations: None,
            }
        }
        ModelName::Arma21T5 => {
            let t = StudentT::new(5.0).unwrap();
            let (mut y1, mut y2, mut x_prev) = (0.0, 0.0, 0.0);
            let mut series = Vec::with_capacity(n);
            let mut innov = Vec::with_capacity(n);
            for i in 0..n + burn {
                let x: f64 = t.sample(&mut rng);
                let y = 0.5 * y1 + 0.1875 * y2 + x + 0.8 * x_prev;
                y2 = y1;
                y1 = y;
                x_prev = x;
                if i >= burn {
                    series.push(y);
                    innov.push(x);
                }
            }
            SimOutput {
                series,
                innovations: Some(innov),
            }
        }
        ModelName::Ar1Garch11 => {
            let stationary_var = 2e-5 / (1.0 - 0.4 - 0.3);
            let (mut var, mut x, mut y): (f64, f64, f64) = (stationary_var, 0.0, 0.0);
            let mut series = Vec::with_capacity(n);
            let mut innov = Vec::with_capacity(n);
            for i in 0..n + burn {
                var = 2e-5 + 0.4 * x * x + 0.3 * var;
                let z: f64 = StandardNormal.sample(&mut rng);
                x = var.sqrt() * z;
                y = 0.8 * y + x;
                if i >= burn {
                    series.push(y);
                    innov.push(x);
                }
            }
            SimOutput {
                series,
                innovations: Some(innov),
            }
        }
    };
    Ok(out)
}

// --- truth oracles ----------------------------------------------------------

/// True target values for one (model, n, k) cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrueValues {
    pub gamma0: f64,
    /// GP-scale limit at the k/n exceedance level (innovation scale for
    /// dynamic models).
    pub a0: f64,
    /// Marginal (or innovation) quantile at level 1 - 1/n.
    pub quantile: f64,
}

// Ratio key: k/n in tenths of a percent, so 0.05 -> 50.
fn ratio_key(n: usize, k: usize) -> u32 {
    ((k as f64 / n as f64) * 1000.0).round() as u32
}

/// Look up the frozen truth constants (or closed forms where exact) for a
/// cell. Missing table entries are an error: regenerate the constants file
/// with the `gen_truths` binary for new grids.
pub fn true_values(model: ModelName, n: usize, k: usize) -> Result<TrueValues> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let gamma0 = model.gamma0();
    let t = n as f64 / k as f64;
    let p = 1.0 - 1.0 / n as f64;
    match model {
        // Unit-exponential marginal: excesses are exactly GP(0, 1).
        ModelName::ClaytonExp => Ok(TrueValues {
            gamma0,
            a0: 1.0,
            quantile: -(1.0 - p).ln(),
        }),
        // Power-law marginal: excesses over U(t) are exactly
        // GP(-1/3, (9/t)^{1/3} / 3).
        ModelName::ClaytonPower => Ok(TrueValues {
            gamma0,
            a0: (9.0 / t).cbrt() / 3.0,
            quantile: 1.0 - (9.0 * (1.0 - p)).cbrt(),
        }),
        _ => {
            let rk = ratio_key(n, k);
            let a0 = truths_table::A0
                .iter()
                .find(|e| e.0 == model.as_str() && e.1 == rk)
                .map(|e| e.2)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "no tabulated a0 for {} at k/n = {}/1000; run gen_truths",
                        model.as_str(),
                        rk
                    ))
                })?;
            let quantile = match model {
                // Stationary AR(1) with Cauchy innovations is Cauchy(0, 5).
                ModelName::Ar1T1 => {
                    5.0 * (std::f64::consts::PI * (p - 0.5)).tan()
                }
                _ => truths_table::QUANTILE
                    .iter()
                    .find(|e| e.0 == model.as_str() && e.1 == n)
                    .map(|e| e.2)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "no tabulated quantile for {} at n = {n}; run gen_truths",
                            model.as_str()
                        ))
                    })?,
            };
            Ok(TrueValues {
                gamma0,
                a0,
                quantile,
            })
        }
    }
}

// The series whose tail the inference targets: the marginal path for static
// models, the innovation path for dynamic ones.
fn target_series(model: ModelName, sim: SimOutput) -> Vec<f64> {
    if model.is_dynamic() {
        sim.innovations.expect("dynamic models carry innovations")
    } else {
        sim.series
    }
}

/// Monte-Carlo oracle for a0 at exceedance ratio k/n: the average GP-fit
/// scale over independent huge-sample fits at the same ratio.
pub fn oracle_a0(model: ModelName, ratio: f64, n_big: usize, reps: usize, seed: u64) -> Result<f64> {
    let k_big = (ratio * n_big as f64).round() as usize;
    let sigmas: Vec<Result<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate(&ModelSpec::new(model, n_big, mix(seed, 0xa0, r)))?;
            let series = target_series(model, sim);
            let exc = ExceedanceSet::from_series(&series, k_big)?;
            let fit = mle_fit(&exc, &FitOptions::default())?;
            Ok(fit.params.sigma)
        })
        .collect();
    let mut sum = 0.0;
    for s in sigmas {
        sum += s?;
    }
    Ok(sum / reps as f64)
}

/// Monte-Carlo oracle for the level-p quantile of the target distribution:
/// pooled empirical quantile over `points` simulated values.
pub fn oracle_quantile(model: ModelName, p: f64, points: usize, seed: u64) -> Result<f64> {
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::invalid("oracle targets upper-tail levels only"));
    }
    let chunk = 2_000_000usize.min(points);
    let n_chunks = points.div_ceil(chunk);
    // Keep only each chunk's top slice; the pooled top is ample for the
    // requested level.
    let keep_per_chunk = (((1.0 - p) * chunk as f64) as usize * 20).max(1000);
    let mut top: Vec<f64> = (0..n_chunks as u64)
        .into_par_iter()
        .map(|c| {
            let sim = simulate(&ModelSpec::new(model, chunk, mix(seed, 0x09, c)))
                .expect("oracle simulation");
            let mut series = target_series(model, sim);
            let cut = series.len() - keep_per_chunk.min(series.len());
            if cut > 0 {
                series.select_nth_unstable_by(cut, |a, b| a.partial_cmp(b).unwrap());
            }
            series.split_off(cut)
        })
        .flatten()
        .collect();
    top.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = (n_chunks * chunk) as f64;
    let rank_from_top = (total * (1.0 - p)).round() as usize;
    if rank_from_top >= top.len() || rank_from_top == 0 {
        return Err(Error::Internal(
            "oracle retained too few points for the requested level".into(),
        ));
    }
    Ok(top[top.len() - rank_from_top])
}

// --- covariance-estimator experiment ----------------------------------------

/// Aggregated estimates of one Sigma component set for one (m, mode) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaRow {
    pub m: usize,
    pub mode: BlockMode,
    /// Component order: (1,1), (1,2), (2,2).
    pub mean: [f64; 3],
    pub q05: [f64; 3],
    pub q95: [f64; 3],
    pub replications: usize,
    pub failures: usize,
    pub error: Option<String>,
}

fn sigma_components(m: Mat2) -> [f64; 3] {
    [m.a, 0.5 * (m.b + m.c), m.d]
}

/// Replicate the covariance estimator across simulated paths for each block
/// length and mode, reporting means and 5%/95% quantiles per component.
pub fn sigma_experiment(
    model: ModelName,
    n: usize,
    k: usize,
    m_list: &[usize],
    modes: &[BlockMode],
    replications: usize,
    seed: u64,
) -> Result<Vec<SigmaRow>> {
    if !matches!(
        model,
        ModelName::Ar1T1 | ModelName::Arma11T2 | ModelName::Arch1
    ) {
        return Err(Error::invalid(
            "sigma_experiment supports ar1_t1, arma11_t2, arch1".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for &m in m_list {
        for &mode in modes {
            let results: Vec<Result<[f64; 3]>> = (0..replications as u64)
                .into_par_iter()
                .map(|r| {
                    let sim = simulate(&ModelSpec::new(model, n, mix(seed, 0x51, r)))?;
                    let exc = ExceedanceSet::from_series(&sim.series, k)?;
                    let fit = mle_fit(&exc, &FitOptions::default())?;
                    let cov = assemble(&sim.series, k, m, mode, None, &fit)?;
                    Ok(sigma_components(cov.sigma_hat))
                })
                .collect();
            let mut ok: Vec<[f64; 3]> = Vec::new();
            let mut first_err = None;
            for r in results {
                match r {
                    Ok(c) => ok.push(c),
                    Err(e) => {
                        if first_err.is_none() {
                            first_err = Some(e.to_string());
                        }
                    }
                }
            }
            let failures = replications - ok.len();
            let mut mean = [f64::NAN; 3];
            let mut q05 = [f64::NAN; 3];
            let mut q95 = [f64::NAN; 3];
            if !ok.is_empty() {
                for c in 0..3 {
                    let mut vals: Vec<f64> = ok.iter().map(|v| v[c]).collect();
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    mean[c] = vals.iter().sum::<f64>() / vals.len() as f64;
                    q05[c] = crate::bayes::empirical_quantile(&vals, 0.05);
                    q95[c] = crate::bayes::empirical_quantile(&vals, 0.95);
                }
            }
            rows.push(SigmaRow {
                m,
                mode,
                mean,
                q05,
                q95,
                replications,
                failures,
                error: if ok.is_empty() { first_err } else { None },
            });
        }
    }
    Ok(rows)
}

/// Large-sample Monte-Carlo reference for Sigma: the mean estimate over
/// long paths at the same exceedance fraction and block length as the cell
/// under study. Holding the block length fixed while n grows removes the
/// finite-sample rank bias; the residual block-truncation bias vanishes only
/// as m grows and is deliberately kept, matching the way the reference
/// truth lines were produced.
pub fn sigma_truth(model: ModelName, ratio: f64, m: usize, reps: usize, seed: u64) -> Result<Mat2> {
    let n = 100_000usize;
    let k = (ratio * n as f64).round() as usize;
    let comps: Vec<Result<Mat2>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate(&ModelSpec::new(model, n, mix(seed, 0x57, r)))?;
            let exc = ExceedanceSet::from_series(&sim.series, k)?;
            let fit = mle_fit(&exc, &FitOptions::default())?;
            let cov = assemble(&sim.series, k, m, BlockMode::Sliding, None, &fit)?;
            Ok(cov.sigma_hat)
        })
        .collect();
    let mut acc = Mat2::new(0.0, 0.0, 0.0, 0.0);
    for c in comps {
        acc = acc.add(c?);
    }
    Ok(acc.scale(1.0 / reps as f64))
}

// --- coverage experiment ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Unadjusted Bayesian credible interval.
    Bci,
    /// Adjusted Bayesian credible interval.
    Baci,
    /// Frequentist confidence interval.
    Fci,
    /// Unadjusted Bayesian credible region.
    Bcr,
    /// Adjusted Bayesian credible region.
    Bacr,
    /// Frequentist confidence region.
    Fcr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Gamma,
    Scale,
    Theta,
    Quantile,
}

/// The (estimator, target) rows reported per cell, matching the reference
/// table layout: three interval estimators for each scalar target plus three
/// region estimators for the parameter pair.
pub const REPORT_ROWS: [(Estimator, Target); 12] = [
    (Estimator::Bci, Target::Gamma),
    (Estimator::Baci, Target::Gamma),
    (Estimator::Fci, Target::Gamma),
    (Estimator::Bci, Target::Scale),
    (Estimator::Baci, Target::Scale),
    (Estimator::Fci, Target::Scale),
    (Estimator::Bcr, Target::Theta),
    (Estimator::Bacr, Target::Theta),
    (Estimator::Fcr, Target::Theta),
    (Estimator::Bci, Target::Quantile),
    (Estimator::Baci, Target::Quantile),
    (Estimator::Fci, Target::Quantile),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoverageCell {
    pub model: ModelName,
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub cells: Vec<CoverageCell>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Iterations per chain (2 chains, 50% burn-in) for each posterior.
    pub mcmc_iterations: usize,
    /// Block length of the covariance estimator.
    pub m: usize,
    /// Prior used by both posteriors in every replication.
    pub prior: PriorSpec,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            cells: Vec::new(),
            replications: 500,
            alpha: 0.05,
            seed: 0xc07e,
            mcmc_iterations: 5000,
            m: 50,
            prior: PriorSpec::flat(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelName,
    pub n: usize,
    pub k: usize,
    pub estimator: Estimator,
    pub target: Target,
    pub hits: usize,
    pub replications: usize,
    pub failures: usize,
    pub coverage: f64,
    /// Set when more than 5% of replications failed.
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub seed: u64,
    pub replications: usize,
    pub cells: Vec<CellResult>,
}

impl CoverageReport {
    pub fn coverage_of(
        &self,
        model: ModelName,
        n: usize,
        k: usize,
        estimator: Estimator,
        target: Target,
    ) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| {
                c.model == model
                    && c.n == n
                    && c.k == k
                    && c.estimator == estimator
                    && c.target == target
            })
            .map(|c| c.coverage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,n,k,estimator,target,hits,replications,failures,coverage,invalid\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{},{},{},{:.6},{}\n",
                c.model.as_str(),
                c.n,
                c.k,
                c.estimator,
                c.target,
                c.hits,
                c.replications,
                c.failures,
                c.coverage,
                c.invalid
            ));
        }
        out
    }
}

// SplitMix64-style mixer for counter-derived replication seeds.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(seed: u64, tag: u64, rep: u64) -> u64 {
    splitmix(seed ^ splitmix(tag) ^ splitmix(rep.wrapping_mul(0x2545_f491_4f6c_dd1d)))
}

fn cell_rep_seed(seed: u64, cell: &CoverageCell, rep: u64, tag: u64) -> u64 {
    let model_tag = splitmix(cell.model.as_str().bytes().fold(0u64, |a, b| {
        a.wrapping_mul(131).wrapping_add(b as u64)
    }));
    mix(
        seed ^ model_tag ^ splitmix(cell.n as u64) ^ splitmix((cell.k as u64) << 20),
        tag,
        rep,
    )
}

// Containment outcomes of the 12 report rows for one replication.
type RepHits = [bool; 12];

fn one_replication(cell: &CoverageCell, cfg: &CoverageConfig, rep: u64) -> Result<RepHits> {
    let truths = true_values(cell.model, cell.n, cell.k)?;
    let sim_seed = cell_rep_seed(cfg.seed, cell, rep, 0x01);
    let mcmc_seed = cell_rep_seed(cfg.seed, cell, rep, 0x02);

    // Build the series whose tail is analyzed, plus the truth of the
    // quantile target (conditional for dynamic models).
    let (series, quantile_truth, shift) = match cell.model {
        ModelName::Arma21T5 => {
            let nbar = cell.n + (cell.n as f64).sqrt().ceil() as usize;
            let sim = simulate(&ModelSpec::new(cell.model, nbar, sim_seed))?;
            let x = sim.innovations.as_ref().unwrap();
            let y = &sim.series;
            let spec = ArmaSpec::new(2, 1, false, 0)?;
            let res = make_residuals(y, &spec, None, None)?;
            let v_true = 0.5 * y[nbar - 1] + 0.1875 * y[nbar - 2] + 0.8 * x[nbar - 1];
            (res.residuals.clone(), v_true + truths.quantile, res.one_step_pred)
        }
        ModelName::Ar1Garch11 => {
            let nbar = cell.n + (cell.n as f64).sqrt().ceil() as usize;
            let sim = simulate(&ModelSpec::new(cell.model, nbar, sim_seed))?;
            let y = &sim.series;
            let spec = ArmaSpec::new(1, 0, false, 0)?;
            let res = make_residuals(y, &spec, None, None)?;
            let v_true = 0.8 * y[nbar - 1];
            (res.residuals.clone(), v_true + truths.quantile, res.one_step_pred)
        }
        _ => {
            let sim = simulate(&ModelSpec::new(cell.model, cell.n, sim_seed))?;
            (sim.series, truths.quantile, 0.0)
        }
    };

    let n = series.len();
    let exc = ExceedanceSet::from_series(&series, cell.k)?;
    let fit = mle_fit(&exc, &FitOptions::default())?;
    let cov = assemble(&series, cell.k, cfg.m, BlockMode::Sliding, None, &fit)?;
    let target = QuantileTarget::new(n, cell.k, 1.0 - 1.0 / cell.n as f64)?;
    let theta0 = Vec2(truths.gamma0, truths.a0);

    // Frequentist regions and intervals.
    let (f_gamma, f_scale) = param_intervals(&fit, &cov, cell.k, cfg.alpha)?;
    let f_region = confidence_ellipsoid(&fit, &cov, cell.k, cfg.alpha)?;
    let f_quant = quantile_interval(&fit, &cov, &exc, &target, cfg.alpha, VarianceMethod::Delta)?;

    // Bayesian posteriors (vague shape prior per the experiment design).
    let prior = cfg.prior;
    let mcmc = McmcSettings {
        chains: 2,
        iterations: cfg.mcmc_iterations,
        burn_in_frac: 0.5,
        seed: mcmc_seed,
        target_accept: 0.234,
    };
    let naive = sample_posterior(&exc, &fit, &cov, &prior, &mcmc, false)?;
    let adjusted = sample_posterior(&exc, &fit, &cov, &prior, &mcmc, true)?;

    let (b_region, b_gamma, b_scale) = credible_summaries(&naive, cfg.alpha)?;
    let (ba_region, ba_gamma, ba_scale) = credible_summaries(&adjusted, cfg.alpha)?;

    // Quantile: raw induced posterior for the unadjusted interval, refined
    // spread-corrected posterior for the adjusted one.
    let b_quant = quantile_posterior(
        &naive,
        &fit,
        &exc,
        &cov,
        &target,
        VarianceMethod::Delta,
        Some(1.0),
    )?
    .interval(cfg.alpha)?;
    // The spread correction needs the exact-map Monte-Carlo variance: the
    // delta-method scalar misses the curvature of the extrapolation in the
    // shape direction, which is substantial at experiment-scale k.
    let ba_quant = quantile_posterior(
        &adjusted,
        &fit,
        &exc,
        &cov,
        &target,
        VarianceMethod::Mc {
            draws: 4000,
            seed: cell_rep_seed(cfg.seed, cell, rep, 0x03),
        },
        None,
    )?
    .interval(cfg.alpha)?;

    let q_truth_res = quantile_truth - shift; // residual/marginal scale
    Ok([
        b_gamma.contains(truths.gamma0),
        ba_gamma.contains(truths.gamma0),
        f_gamma.contains(truths.gamma0),
        b_scale.contains(truths.a0),
        ba_scale.contains(truths.a0),
        f_scale.contains(truths.a0),
        b_region.contains(theta0)?,
        ba_region.contains(theta0)?,
        f_region.contains(theta0)?,
        b_quant.contains(q_truth_res),
        ba_quant.contains(q_truth_res),
        f_quant.contains_value(q_truth_res),
    ])
}

/// Run the coverage experiment over the configured grid. Replications are
/// parallel but seeded by replication index, so the report is identical for
/// any thread count.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::invalid("alpha must be in (0,1)"));
    }
    let mut cells = Vec::new();
    if cfg.replications == 0 {
        return Ok(CoverageReport {
            alpha: cfg.alpha,
            seed: cfg.seed,
            replications: 0,
            cells,
        });
    }
    for cell in &cfg.cells {
        // Fail fast on missing truth constants.
        true_values(cell.model, cell.n, cell.k)?;
        let outcomes: Vec<Result<RepHits>> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| one_replication(cell, cfg, rep))
            .collect();
        let mut hits = [0usize; 12];
        let mut ok = 0usize;
        for o in &outcomes {
            if let Ok(h) = o {
                ok += 1;
                for (i, hit) in h.iter().enumerate() {
                    if *hit {
                        hits[i] += 1;
                    }
                }
            } else {
                log::warn!(
                    "coverage replication failed for {} n={} k={}: {}",
                    cell.model.as_str(),
                    cell.n,
                    cell.k,
                    o.as_ref().err().unwrap()
                );
            }
        }
        let failures = cfg.replications - ok;
        let invalid = (failures as f64) > 0.05 * cfg.replications as f64;
        for (i, (estimator, tgt)) in REPORT_ROWS.iter().enumerate() {
            cells.push(CellResult {
                model: cell.model,
                n: cell.n,
                k: cell.k,
                estimator: *estimator,
                target: *tgt,
                hits: hits[i],
                replications: cfg.replications,
                failures,
                coverage: if ok > 0 { hits[i] as f64 / ok as f64 } else { f64::NAN },
                invalid,
            });
        }
    }
    Ok(CoverageReport {
        alpha: cfg.alpha,
        seed: cfg.seed,
        replications: cfg.replications,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_gamma(series: &[f64], k: usize) -> f64 {
        let exc = ExceedanceSet::from_series(series, k).unwrap();
        mle_fit(&exc, &FitOptions::default()).unwrap().params.gamma
    }

    // Serial dependence inflates the estimator's variance well beyond the
    // iid 1/sqrt(k) rate, so average the estimate over independent paths.
    fn mean_gamma(model: ModelName, n: usize, k: usize, seeds: std::ops::Range<u64>) -> f64 {
        let count = seeds.end - seeds.start;
        let sum: f64 = seeds
            .into_iter()
            .map(|s| {
                let sim = simulate(&ModelSpec::new(model, n, s)).unwrap();
                fit_gamma(&target_series(model, sim), k)
            })
            .sum();
        sum / count as f64
    }

    #[test]
    fn marginal_tail_indices_match_theory() {
        let n = 1_000_000;
        let k = 10_000;
        let g = mean_gamma(ModelName::Ar1T1, n, k, 1..13);
        assert!((g - 1.0).abs() < 0.05, "ar1_t1 gamma {g}");
        let g = mean_gamma(ModelName::Arch1, n, k, 1..13);
        assert!((g - 0.493).abs() < 0.05, "arch1 gamma {g}");
        let g = mean_gamma(ModelName::Ar1Garch11, n, k, 1..13);
        assert!((g - 0.207).abs() < 0.05, "garch innovation gamma {g}");
    }

    #[test]
    fn clayton_power_is_bounded_with_negative_shape() {
        let sim = simulate(&ModelSpec::new(ModelName::ClaytonPower, 100_000, 4)).unwrap();
        assert!(sim.series.iter().all(|x| *x <= 1.0));
        let g = fit_gamma(&sim.series, 1000);
        assert!((g + 1.0 / 3.0).abs() < 0.08, "clayton_power gamma {g}");
    }

    // One-sample Kolmogorov-Smirnov p-value against a reference cdf.
    fn ks_p(sample: &mut Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sample.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in sample.iter().enumerate() {
            let f = cdf(x);
            d = d.max((f - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - f).abs());
        }
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for j in 1..=100 {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            p += 2.0 * sign * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn innovation_generators_match_reference_cdfs() {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut normals: Vec<f64> = (0..100_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let p = ks_p(&mut normals, crate::special::normal_cdf);
        assert!(p > 0.001, "normal KS p = {p}");

        let t5 = StudentT::new(5.0).unwrap();
        let mut ts: Vec<f64> = (0..100_000).map(|_| t5.sample(&mut rng)).collect();
        let oracle = statrs::distribution::StudentsT::new(0.0, 1.0, 5.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let p = ks_p(&mut ts, |x| oracle.cdf(x));
        assert!(p > 0.001, "t5 KS p = {p}");

        // t1 = Cauchy, closed-form cdf.
        let t1 = StudentT::new(1.0).unwrap();
        let mut cs: Vec<f64> = (0..100_000).map(|_| t1.sample(&mut rng)).collect();
        let p = ks_p(&mut cs, |x| 0.5 + x.atan() / std::f64::consts::PI);
        assert!(p > 0.001, "t1 KS p = {p}");
    }

    #[test]
    fn clayton_chain_is_stationary_uniform() {
        // Marginal of the chain state at fixed times, across replications.
        for (idx, reps) in [(1000usize, 4000usize), (10_000, 1000)] {
            let mut vals: Vec<f64> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha12Rng::seed_from_u64(mix(6, idx as u64, r));
                    let chain = clayton_chain(1, idx, 0.41, &mut rng);
                    chain[0]
                })
                .collect();
            let p = ks_p(&mut vals, |x| x.clamp(0.0, 1.0));
            assert!(p > 0.001, "clayton uniformity at index {idx}: p = {p}");
        }
    }

    #[test]
    fn simulate_is_deterministic_and_validates() {
        let spec = ModelSpec::new(ModelName::Arma11T2, 500, 42);
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a.series, b.series);
        assert!(ModelName::parse("nonsense").is_err());
        assert_eq!(ModelName::parse("ar1_garch11").unwrap(), ModelName::Ar1Garch11);
        assert!(simulate(&ModelSpec {
            burn_in: 10,
            ..ModelSpec::new(ModelName::Ar1T1, 100, 1)
        })
        .is_err());
    }

    #[test]
    fn clayton_closed_form_truths() {
        let t = true_values(ModelName::ClaytonExp, 2000, 100).unwrap();
        assert_eq!(t.gamma0, 0.0);
        assert_eq!(t.a0, 1.0);
        assert!((t.quantile - (2000f64).ln()).abs() < 1e-12);
        let t = true_values(ModelName::ClaytonPower, 2000, 100).unwrap();
        assert!((t.a0 - (9.0 / 20.0f64).cbrt() / 3.0).abs() < 1e-12);
        assert!((t.quantile - (1.0 - (9.0 / 2000.0f64).cbrt())).abs() < 1e-12);
        // Cauchy marginal quantile for model (a).
        let t = true_values(ModelName::Ar1T1, 2000, 100).unwrap();
        let want = 5.0 * (std::f64::consts::PI * (0.5 - 1.0 / 2000.0)).tan();
        assert!((t.quantile - want).abs() < 1e-9);
    }

    #[test]
    fn tabulated_truths_are_consistent_with_fresh_oracles() {
        // Spot-check the frozen constants against quick re-runs at reduced
        // precision.
        let a0 = oracle_a0(ModelName::Ar1T1, 0.05, 200_000, 8, 99).unwrap();
        let frozen = true_values(ModelName::Ar1T1, 2000, 100).unwrap().a0;
        assert!(
            (a0 / frozen - 1.0).abs() < 0.10,
            "fresh {a0} vs frozen {frozen}"
        );
        let q = oracle_quantile(ModelName::Arch1, 1.0 - 1.0 / 2000.0, 10_000_000, 98).unwrap();
        let frozen = true_values(ModelName::Arch1, 2000, 100).unwrap().quantile;
        assert!((q / frozen - 1.0).abs() < 0.10, "fresh {q} vs frozen {frozen}");
    }

    #[test]
    fn sigma_experiment_matches_truth_and_surfaces_errors() {
        // Small-N smoke at the reference configuration plus the m > n/4
        // error path.
        let rows = sigma_experiment(
            ModelName::Ar1T1,
            2000,
            100,
            &[50, 600],
            &[BlockMode::Sliding],
            60,
            7,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let good = &rows[0];
        assert_eq!(good.failures, 0);
        let truth = sigma_truth(ModelName::Ar1T1, 0.05, 50, 20, 11).unwrap();
        assert!(
            (good.mean[0] / truth.a - 1.0).abs() < 0.15,
            "mean {} vs truth {}",
            good.mean[0],
            truth.a
        );
        let bad = &rows[1];
        assert_eq!(bad.failures, bad.replications);
        assert!(bad.error.is_some());
        assert!(bad.mean[0].is_nan());
    }

    #[test]
    fn iid_sigma_experiment_hits_independence_closed_form() {
        // iid control: simulate Clayton-exp with eta ~ 0 dependence is not
        // available, so use an iid exponential series through the same
        // pipeline by hand.
        let reps = 80;
        let (n, k, m) = (20_000, 400, 60);
        let comps: Vec<[f64; 3]> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha12Rng::seed_from_u64(mix(3, 0x11d, r));
                let series: Vec<f64> =
                    (0..n).map(|_| rand_distr::Exp1.sample(&mut rng)).collect();
                let exc = ExceedanceSet::from_series(&series, k).unwrap();
                let fit = mle_fit(&exc, &FitOptions::default()).unwrap();
                let cov = assemble(&series, k, m, BlockMode::Sliding, None, &fit).unwrap();
                sigma_components(cov.sigma_hat)
            })
            .collect();
        let mean = |c: usize| comps.iter().map(|v| v[c]).sum::<f64>() / reps as f64;
        // Independence form at gamma = 0: [[1, -1], [-1, 2]].
        assert!((mean(0) - 1.0).abs() < 0.10, "S11 {}", mean(0));
        assert!((mean(1) + 1.0).abs() < 0.10, "S12 {}", mean(1));
        assert!((mean(2) - 2.0).abs() < 0.20, "S22 {}", mean(2));
    }

    fn tiny_config(cells: Vec<CoverageCell>, reps: usize, seed: u64) -> CoverageConfig {
        CoverageConfig {
            cells,
            replications: reps,
            alpha: 0.05,
            seed,
            mcmc_iterations: 1200,
            m: 50,
            prior: PriorSpec::flat(5.0),
        }
    }

    #[test]
    fn coverage_report_structure_and_determinism() {
        let cells = vec![CoverageCell {
            model: ModelName::ClaytonExp,
            n: 1000,
            k: 50,
        }];
        let cfg = tiny_config(cells, 6, 123);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = pool1.install(|| coverage_experiment(&cfg)).unwrap();
        let r4 = pool4.install(|| coverage_experiment(&cfg)).unwrap();
        assert_eq!(r1, r4);
        assert_eq!(r1.cells.len(), 12);
        for c in &r1.cells {
            assert_eq!(c.replications, 6);
            assert!(c.coverage.is_nan() || (0.0..=1.0).contains(&c.coverage));
        }
        // Empty run.
        let empty = coverage_experiment(&tiny_config(vec![], 0, 1)).unwrap();
        assert!(empty.cells.is_empty());
        // CSV emission has a header plus one line per cell.
        let csv = r1.to_csv();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("model,n,k,"));
    }

    #[test]
    fn credible_intervals_nest_across_levels() {
        // For one replication's draws, lower alpha gives wider intervals.
        let sim = simulate(&ModelSpec::new(ModelName::ClaytonExp, 2000, 31)).unwrap();
        let exc = ExceedanceSet::from_series(&sim.series, 100).unwrap();
        let fit = mle_fit(&exc, &FitOptions::default()).unwrap();
        let cov = assemble(&sim.series, 100, 50, BlockMode::Sliding, None, &fit).unwrap();
        let draws = sample_posterior(
            &exc,
            &fit,
            &cov,
            &PriorSpec::flat(5.0),
            &McmcSettings {
                iterations: 4000,
                seed: 77,
                ..McmcSettings::default()
            },
            true,
        )
        .unwrap();
        let (_, g95, s95) = credible_summaries(&draws, 0.05).unwrap();
        let (_, g50, s50) = credible_summaries(&draws, 0.5).unwrap();
        assert!(g95.lower <= g50.lower && g50.upper <= g95.upper);
        assert!(s95.lower <= s50.lower && s50.upper <= s95.upper);
    }

    #[test]
    fn dynamic_cell_replication_runs() {
        // One full dynamic replication end to end (model (f) desk cell).
        let cell = CoverageCell {
            model: ModelName::Ar1Garch11,
            n: 2000,
            k: 50,
        };
        let cfg = tiny_config(vec![cell], 1, 7);
        let hits = one_replication(&cell, &cfg, 0).unwrap();
        assert_eq!(hits.len(), 12);
    }
}
