//! Empirical GP pseudo log-likelihood over threshold exceedances, its
//! score/observed information, and the maximum-likelihood fit over the
//! restricted space (-1, inf) x (0, inf).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{gp_logpdf, GpParams, GAMMA_EPS};
use crate::mat2::{Mat2, Vec2};
use crate::optim::{nelder_mead_max, SimplexOptions};

/// Top-k exceedances of a sample above the empirical threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSet {
    pub threshold: f64,
    /// Positive excesses over the threshold, sorted ascending.
    pub excesses: Vec<f64>,
    pub n: usize,
    pub k: usize,
    /// Ties with the threshold dropped while building the set.
    pub dropped_ties: usize,
}

impl ExceedanceSet {
    /// Build from a raw series: threshold is the (n-k)-th order statistic,
    /// excesses are the top k values minus it. Exact ties with the threshold
    /// are dropped (continuous-data artifact) with a warning.
    pub fn from_series(data: &[f64], k: usize) -> Result<Self> {
        let n = data.len();
        if k < 1 || k >= n {
            return Err(Error::invalid(format!(
                "need 1 <= k < n, got k={k}, n={n}"
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("series contains non-finite values".into()));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let threshold = sorted[n - k - 1];
        let mut excesses: Vec<f64> = sorted[n - k..].iter().map(|x| x - threshold).collect();
        let before = excesses.len();
        excesses.retain(|&x| x > 0.0);
        let dropped_ties = before - excesses.len();
        if dropped_ties > 0 {
            log::warn!(
                "{dropped_ties} exceedance(s) tied with the threshold were dropped; k reduced to {}",
                excesses.len()
            );
        }
        if excesses.is_empty() {
            return Err(Error::Degenerate(
                "all exceedances tie with the threshold".into(),
            ));
        }
        let k = excesses.len();
        Ok(ExceedanceSet {
            threshold,
            excesses,
            n,
            k,
            dropped_ties,
        })
    }

    /// Assemble directly from known excesses (ascending order enforced).
    pub fn from_excesses(threshold: f64, mut excesses: Vec<f64>, n: usize) -> Result<Self> {
        if excesses.is_empty() || excesses.len() >= n {
            return Err(Error::invalid("need 1 <= k < n excesses"));
        }
        if excesses.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::invalid("excesses must be finite and positive"));
        }
        excesses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = excesses.len();
        Ok(ExceedanceSet {
            threshold,
            excesses,
            n,
            k,
            dropped_ties: 0,
        })
    }

    pub fn max_excess(&self) -> f64 {
        *self.excesses.last().unwrap()
    }
}

/// Result of the likelihood maximization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleFit {
    pub params: GpParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the fitted shape is at or below -1/2, where the
    /// honest-region theory no longer applies.
    pub shape_warning: bool,
}

/// Mean GP log-likelihood of the excesses; `-inf` when any excess is
/// outside the support of `params`.
pub fn empirical_loglik(exc: &ExceedanceSet, params: GpParams) -> Result<f64> {
    if exc.excesses.is_empty() {
        return Err(Error::invalid("empty exceedance set"));
    }
    let mut sum = 0.0;
    for &x in &exc.excesses {
        let l = gp_logpdf(x, params)?;
        if l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        sum += l;
    }
    Ok(sum / exc.k as f64)
}

// Per-observation score in (gamma, sigma). Series kernels keep the
// gamma -> 0 seam stable; the only genuinely singular pieces are the
// gamma-derivatives, everything else is closed form.
fn obs_score(x: f64, gamma: f64, sigma: f64) -> Vec2 {
    let t = x / sigma;
    let a = gamma * t;
    let u = 1.0 + a;
    let s_gamma = if a.abs() < 0.5 {
        // t^2 * sum_{m>=0} (-1)^m (m+1)/(m+2) a^m  -  t/(1+a)
        let mut sum = 0.0;
        let mut pow = 1.0;
        for m in 0..80 {
            let term = sign(m) * (m + 1) as f64 / (m + 2) as f64 * pow;
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
            pow *= a;
        }
        t * t * sum - t / u
    } else {
        u.ln() / (gamma * gamma) - (1.0 + 1.0 / gamma) * t / u
    };
    let s_sigma = (-1.0 + (1.0 + gamma) * t / u) / sigma;
    Vec2(s_gamma, s_sigma)
}

// Per-observation Hessian of the log-likelihood in (gamma, sigma).
fn obs_hessian(x: f64, gamma: f64, sigma: f64) -> Mat2 {
    let t = x / sigma;
    let a = gamma * t;
    let u = 1.0 + a;
    let h_gg = if a.abs() < 0.5 {
        // t^3 * sum_{m>=1} (-1)^m (2/(m+2)+m-1) a^(m-1)  +  t^2/(1+a)^2
        let mut sum = 0.0;
        let mut pow = 1.0;
        for m in 1..90 {
            let term = sign(m) * (2.0 / (m + 2) as f64 + (m - 1) as f64) * pow;
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
            pow *= a;
        }
        t * t * t * sum + t * t / (u * u)
    } else {
        -2.0 * u.ln() / gamma.powi(3) + 2.0 * t / (gamma * gamma * u)
            + (1.0 + 1.0 / gamma) * t * t / (u * u)
    };
    let h_gs = t * (1.0 - t) / (sigma * u * u);
    let h_ss = (1.0 + (1.0 + gamma) * (gamma * t * t / (u * u) - 2.0 * t / u)) / (sigma * sigma);
    Mat2::symmetric(h_gg, h_gs, h_ss)
}

fn sign(m: usize) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Gradient and negative Hessian of the mean log-likelihood, in
/// (gamma, sigma) coordinates. Errors when any excess sits on the support
/// boundary (the derivatives blow up there).
pub fn score_and_info(exc: &ExceedanceSet, params: GpParams) -> Result<(Vec2, Mat2)> {
    if exc.excesses.is_empty() {
        return Err(Error::invalid("empty exceedance set"));
    }
    let GpParams { gamma, sigma } = params;
    let upper = params.support().upper;
    let mut score = Vec2(0.0, 0.0);
    let mut hess = Mat2::new(0.0, 0.0, 0.0, 0.0);
    for &x in &exc.excesses {
        if x >= upper || 1.0 + gamma * x / sigma <= 0.0 {
            return Err(Error::Boundary(format!(
                "excess {x} is on or beyond the support boundary {upper}"
            )));
        }
        score = score.add(obs_score(x, gamma, sigma));
        hess = hess.add(obs_hessian(x, gamma, sigma));
    }
    let inv_k = 1.0 / exc.k as f64;
    Ok((score.scale(inv_k), hess.scale(-inv_k)))
}

/// Closed-form per-observation Fisher information of the GP family in the
/// normalized parametrization (gamma, 1). Positive definite for
/// gamma > -1/2; a conditioning error is returned at or below that point.
pub fn fisher_info(gamma: f64) -> Result<Mat2> {
    if !(gamma > -0.5) {
        return Err(Error::Conditioning {
            message: format!("Fisher information is singular for gamma = {gamma} <= -1/2"),
            eigenvalues: [0.0, 0.0],
        });
    }
    let d = (1.0 + gamma) * (1.0 + 2.0 * gamma);
    Ok(Mat2::symmetric(2.0 / d, 1.0 / d, 1.0 / (1.0 + 2.0 * gamma)))
}

/// Optimizer settings for [`mle_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Minimum exceedance count accepted.
    pub min_k: usize,
    pub simplex_max_iter: usize,
    pub newton_max_iter: usize,
    /// Convergence threshold on the score norm.
    pub score_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_k: 5,
            simplex_max_iter: 600,
            newton_max_iter: 40,
            // Resolution of the mean log-likelihood caps how small the
            // score can get; 1e-6 still pins the parameters to ~1e-6.
            score_tol: 1e-6,
        }
    }
}

/// Maximum-likelihood fit over (-1, inf) x (0, inf), multistarted.
///
/// Optimization runs in (gamma, log sigma): the log removes the positivity
/// constraint and makes the fit exactly scale-equivariant.
pub fn mle_fit(exc: &ExceedanceSet, opts: &FitOptions) -> Result<MleFit> {
    if exc.k < opts.min_k {
        return Err(Error::invalid(format!(
            "need at least {} exceedances, got {}",
            opts.min_k, exc.k
        )));
    }
    let first = exc.excesses[0];
    if exc.excesses.iter().all(|&x| x == first) {
        return Err(Error::Degenerate("all excesses are equal".into()));
    }

    let kf = exc.k as f64;
    let mean = exc.excesses.iter().sum::<f64>() / kf;
    let median = exc.excesses[exc.k / 2];
    let var = exc
        .excesses
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<f64>()
        / kf;
    let max_excess = exc.max_excess();

    // Moment estimator of the GP parameters (valid as a start point even
    // where its own assumptions fail; clamped into the search region).
    let ratio = mean * mean / var;
    let gamma_mom = (0.5 * (1.0 - ratio)).clamp(-0.9, 5.0);
    let sigma_mom = (0.5 * mean * (ratio + 1.0)).max(1e-12 * mean);

    let mut starts = vec![
        (gamma_mom, sigma_mom),
        (0.1, mean),
        (-0.3, mean),
        (1.0, median),
    ];
    // Negative-shape starts must satisfy sigma > |gamma| * max_excess.
    for (g, s) in starts.iter_mut() {
        if *g < 0.0 {
            *s = s.max(1.05 * -*g * max_excess);
        }
    }

    let objective = |gamma: f64, log_sigma: f64| -> f64 {
        if gamma <= -1.0 || !gamma.is_finite() || !log_sigma.is_finite() {
            return f64::NEG_INFINITY;
        }
        let sigma = log_sigma.exp();
        match GpParams::new(gamma, sigma) {
            Ok(p) => empirical_loglik(exc, p).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let moment_value = objective(gamma_mom, sigma_mom.ln());

    let mut best: Option<(GpParams, f64, usize, bool)> = None;
    for &(g0, s0) in &starts {
        let simplex = nelder_mead_max(
            |x| objective(x[0], x[1]),
            &[g0, s0.ln()],
            &SimplexOptions {
                max_iter: opts.simplex_max_iter,
                ..SimplexOptions::default()
            },
        );
        if !simplex.value.is_finite() {
            continue;
        }
        let mut gamma = simplex.x[0];
        let mut sigma = simplex.x[1].exp();
        let mut value = simplex.value;
        let mut iterations = simplex.iterations;
        let mut converged = false;

        // Newton refinement on the analytic score / observed information.
        for _ in 0..opts.newton_max_iter {
            iterations += 1;
            let params = match GpParams::new(gamma, sigma) {
                Ok(p) => p,
                Err(_) => break,
            };
            let (score, info) = match score_and_info(exc, params) {
                Ok(si) => si,
                Err(_) => break,
            };
            if score.0.abs().max(score.1.abs() * sigma) <= opts.score_tol {
                converged = true;
                break;
            }
            let step = match info.inverse() {
                Ok(inv) => inv.mul_vec(score),
                Err(_) => break,
            };
            if step.0.abs().max(step.1.abs() / sigma) < 1e-12 * (1.0 + gamma.abs()) {
                converged = true; // step below parameter resolution
                break;
            }
            // Backtrack until the step stays feasible and improves.
            let value_before = value;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let g_new = gamma + lambda * step.0;
                let s_new = sigma + lambda * step.1;
                let v_new = if s_new > 0.0 {
                    objective(g_new, s_new.ln())
                } else {
                    f64::NEG_INFINITY
                };
                if v_new.is_finite() && v_new >= value {
                    gamma = g_new;
                    sigma = s_new;
                    value = v_new;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted || value == value_before {
                converged = true; // no ascent left at fp resolution
                break;
            }
        }

        let better = match &best {
            None => true,
            Some((_, best_value, _, _)) => value > *best_value,
        };
        if better {
            best = Some((GpParams::new(gamma, sigma)?, value, iterations, converged));
        }
    }

    let (params, loglik, iterations, converged) = best.ok_or_else(|| Error::NonConvergence {
        message: "no feasible start point led to a finite likelihood".into(),
        best: None,
    })?;
    if !loglik.is_finite() {
        return Err(Error::NonConvergence {
            message: "likelihood did not reach a finite maximum".into(),
            best: Some((params.gamma, params.sigma)),
        });
    }
    if loglik + 1e-9 < moment_value {
        return Err(Error::NonConvergence {
            message: "optimizer fell below the moment-estimator start value".into(),
            best: Some((params.gamma, params.sigma)),
        });
    }
    let shape_warning = params.gamma <= -0.5;
    if shape_warning {
        log::warn!(
            "fitted shape {} <= -1/2: asymptotic-normality-based regions are unreliable",
            params.gamma
        );
    }
    Ok(MleFit {
        params,
        loglik,
        converged,
        iterations,
        shape_warning,
    })
}

/// Normalized information seam used by the gamma -> 0 density branch.
pub fn gamma_is_effectively_zero(gamma: f64) -> bool {
    gamma.abs() < GAMMA_EPS
}
