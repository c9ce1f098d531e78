//! MLE-based honest confidence regions: the ellipsoid for the parameter
//! pair, equi-tailed intervals for shape and scale, and the extreme-quantile
//! point estimate with its interval.

use serde::{Deserialize, Serialize};

use crate::covariance::SerialCovariance;
use crate::error::{Error, Result};
use crate::gpd::{q_integral, GAMMA_EPS};
use crate::likelihood::{ExceedanceSet, MleFit};
use crate::mat2::{Mat2, Vec2};
use crate::special::{chi_square2_quantile, normal_quantile};

/// Closed interval, reported with its level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Confidence ellipsoid for the (shape, scale) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipsoidRegion {
    pub center: Vec2,
    /// Shape matrix (the data-scale covariance).
    pub shape: Mat2,
    /// Squared radius in the metric of `shape`.
    pub radius2: f64,
    pub alpha: f64,
}

impl EllipsoidRegion {
    /// Membership test: (v - c)^T shape^{-1} (v - c) <= radius2.
    pub fn contains(&self, v: Vec2) -> Result<bool> {
        Ok(self.mahalanobis2(v)? <= self.radius2)
    }

    /// Squared Mahalanobis distance from the center.
    pub fn mahalanobis2(&self, v: Vec2) -> Result<f64> {
        let d = v.sub(self.center);
        Ok(d.dot(self.shape.inverse()?.mul_vec(d)))
    }
}

/// Extreme-quantile target: extrapolate from the in-sample level
/// tau_I = 1 - k/n out to tau_E, with ratio p = (1-tau_E)/(1-tau_I).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuantileTarget {
    pub tau_e: f64,
    pub tau_i: f64,
    pub p: f64,
}

impl QuantileTarget {
    pub fn new(n: usize, k: usize, tau_e: f64) -> Result<Self> {
        if k < 1 || k >= n {
            return Err(Error::invalid(format!("need 1 <= k < n, got k={k}, n={n}")));
        }
        let tau_i = 1.0 - k as f64 / n as f64;
        if !(tau_e > tau_i && tau_e < 1.0) {
            return Err(Error::invalid(format!(
                "need tau_I={tau_i} < tau_E < 1, got tau_E={tau_e}"
            )));
        }
        let p = (1.0 - tau_e) / (1.0 - tau_i);
        Ok(QuantileTarget { tau_e, tau_i, p })
    }
}

/// Scalar variance used in the quantile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum VarianceMethod {
    /// Delta method through the extrapolation map, serial covariance for
    /// the parameter block plus an independent threshold term.
    Delta,
    /// Same composition with the independence (R = min) closed form;
    /// useful as a sanity baseline.
    Independence,
    /// Parametric Monte-Carlo through the exact (finite-k) map.
    Mc { draws: usize, seed: u64 },
}

impl Default for VarianceMethod {
    fn default() -> Self {
        VarianceMethod::Delta
    }
}

/// Quantile interval with its reporting metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub variance_method: VarianceMethod,
    /// Scalar variance that produced the half-width.
    pub sigma_scalar: f64,
    /// Set when -log p is large relative to sqrt(k) (extrapolating beyond
    /// the theory's comfort zone) or p >= 1 (no extrapolation at all).
    pub extrapolation_warning: bool,
}

impl QuantileInterval {
    pub fn contains_value(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Confidence ellipsoid at level 1 - alpha.
pub fn confidence_ellipsoid(
    fit: &MleFit,
    cov: &SerialCovariance,
    k: usize,
    alpha: f64,
) -> Result<EllipsoidRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    Ok(EllipsoidRegion {
        center: Vec2(fit.params.gamma, fit.params.sigma),
        shape: cov.omega_hat,
        radius2: chi_square2_quantile(1.0 - alpha)? / k as f64,
        alpha,
    })
}

/// Equi-tailed marginal intervals for shape and scale.
pub fn param_intervals(
    fit: &MleFit,
    cov: &SerialCovariance,
    k: usize,
    alpha: f64,
) -> Result<(Interval, Interval)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let root_k = (k as f64).sqrt();
    let half_g = z * cov.omega_hat.a.max(0.0).sqrt() / root_k;
    let half_s = z * cov.omega_hat.d.max(0.0).sqrt() / root_k;
    Ok((
        Interval {
            lower: fit.params.gamma - half_g,
            upper: fit.params.gamma + half_g,
        },
        Interval {
            lower: fit.params.sigma - half_s,
            upper: fit.params.sigma + half_s,
        },
    ))
}

// (p^{-gamma} - 1)/gamma with a stable seam at gamma = 0.
pub(crate) fn extrapolation_factor(gamma: f64, p: f64) -> f64 {
    let s = -p.ln();
    if gamma.abs() < GAMMA_EPS {
        let a = gamma * s;
        s * (1.0 + a / 2.0 + a * a / 6.0)
    } else {
        (gamma * s).exp_m1() / gamma
    }
}

/// Point estimate of the tau_E-quantile: threshold plus the GP
/// extrapolation from the in-sample level.
pub fn quantile_point(fit: &MleFit, exc: &ExceedanceSet, target: &QuantileTarget) -> Result<f64> {
    if !(target.p > 0.0) || !target.p.is_finite() {
        return Err(Error::invalid(format!("invalid ratio p={}", target.p)));
    }
    if target.p >= 1.0 {
        log::warn!(
            "p = {} >= 1: the target quantile is inside the sample, no extrapolation",
            target.p
        );
    }
    Ok(exc.threshold + fit.params.sigma * extrapolation_factor(fit.params.gamma, target.p))
}

// Half-width of the quantile interval given the scalar variance.
fn half_width(k: usize, sigma_hat: f64, q_val: f64, alpha: f64, var_scalar: f64) -> Result<f64> {
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(sigma_hat * q_val * z * var_scalar.max(0.0).sqrt() / (k as f64).sqrt())
}

pub(crate) fn scalar_variance(
    fit: &MleFit,
    cov: &SerialCovariance,
    target: &QuantileTarget,
    k: usize,
    method: VarianceMethod,
) -> Result<f64> {
    let gamma = fit.params.gamma;
    let p = target.p;
    let q = q_integral(gamma, 1.0 / p)?;
    if q <= 0.0 {
        return Ok(0.0);
    }
    let g = extrapolation_factor(gamma, p);
    let w = g / q;
    match method {
        VarianceMethod::Delta => {
            let s = cov.sigma_hat;
            Ok(s.a + 2.0 * w * s.b + w * w * s.d + cov.table.r11 / (q * q))
        }
        VarianceMethod::Independence => {
            let s = crate::covariance::sigma_matrix(gamma, 1.0, 1.0)?;
            Ok(s.a + 2.0 * w * s.b + w * w * s.d + 1.0 / (q * q))
        }
        VarianceMethod::Mc { draws, seed } => {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            if draws < 100 {
                return Err(Error::invalid("mc variance needs at least 100 draws"));
            }
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let chol = cov.sigma_hat.cholesky()?;
            let r11_sd = cov.table.r11.max(0.0).sqrt();
            let root_k = (k as f64).sqrt();
            let mut vals = Vec::with_capacity(draws);
            for _ in 0..draws {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let z3: f64 = StandardNormal.sample(&mut rng);
                let dg = chol.a * z1;
                let ds = chol.c * z1 + chol.d * z2; // relative scale error
                let dt = r11_sd * z3; // threshold error in sigma units
                let gamma_star = gamma + dg / root_k;
                if gamma_star <= -1.0 {
                    continue;
                }
                // Exact finite-k map, normalized like the delta method.
                let v = ((1.0 + ds / root_k) * extrapolation_factor(gamma_star, p) - g
                    + dt / root_k)
                    * root_k
                    / q;
                if v.is_finite() {
                    vals.push(v);
                }
            }
            if vals.len() < draws / 2 {
                return Err(Error::NonConvergence {
                    message: "mc variance: too many degenerate draws".into(),
                    best: None,
                });
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            Ok(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64)
        }
    }
}

/// Confidence interval for the extreme quantile.
pub fn quantile_interval(
    fit: &MleFit,
    cov: &SerialCovariance,
    exc: &ExceedanceSet,
    target: &QuantileTarget,
    alpha: f64,
    method: VarianceMethod,
) -> Result<QuantileInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let point = quantile_point(fit, exc, target)?;
    let root_k = (exc.k as f64).sqrt();
    let mut extrapolation_warning = target.p >= 1.0;
    if -target.p.ln() > 0.5 * root_k {
        log::warn!(
            "-log p = {:.2} is large relative to sqrt(k) = {root_k:.2}; the interval may undercover",
            -target.p.ln()
        );
        extrapolation_warning = true;
    }
    let (var_scalar, half) = if target.p >= 1.0 {
        (0.0, 0.0)
    } else {
        let q = q_integral(fit.params.gamma, 1.0 / target.p)?;
        let var_scalar = scalar_variance(fit, cov, target, exc.k, method)?;
        let half = half_width(exc.k, fit.params.sigma, q, alpha, var_scalar)?;
        (var_scalar, half)
    };
    Ok(QuantileInterval {
        point,
        lower: point - half,
        upper: point + half,
        alpha,
        variance_method: method,
        sigma_scalar: var_scalar,
        extrapolation_warning,
    })
}
