//! Generalized Pareto distribution primitives.
//!
//! The shape/scale pair is `(gamma, sigma)` with `sigma > 0`. The support is
//! `[0, inf)` for `gamma >= 0` and `[0, sigma/|gamma|]` for `gamma < 0`.
//! Points outside the support get a log-density of `-inf`, which is an
//! ordinary value here: the optimizer and the MCMC sampler rely on probing
//! infeasible points cheaply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |gamma| the exponential-limit branches are used. Chosen so the
/// seam error of the closed forms stays well below test tolerances while
/// avoiding catastrophic cancellation in `(1 + gamma x / sigma)^(-1/gamma)`.
pub const GAMMA_EPS: f64 = 1e-6;

/// GP shape/scale pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl GpParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !gamma.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "GpParams requires finite gamma and sigma > 0, got gamma={gamma}, sigma={sigma}"
            )));
        }
        Ok(GpParams { gamma, sigma })
    }

    /// Restricted space used for likelihood work: gamma > -1, sigma > 0.
    pub fn in_likelihood_space(&self) -> bool {
        self.gamma > -1.0 && self.sigma > 0.0
    }

    pub fn support(&self) -> Support {
        Support {
            lower: 0.0,
            upper: if self.gamma >= 0.0 {
                f64::INFINITY
            } else {
                self.sigma / -self.gamma
            },
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let s = self.support();
        x >= s.lower && x <= s.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

fn check_x(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("non-finite argument x={x}")));
    }
    Ok(())
}

/// Log-density of the GP distribution; `-inf` outside the support.
pub fn gp_logpdf(x: f64, params: GpParams) -> Result<f64> {
    check_x(x)?;
    let GpParams { gamma, sigma } = params;
    if x < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let t = x / sigma;
    if gamma.abs() < GAMMA_EPS {
        // Exponential limit with the next two series terms so the seam
        // stays continuous to ~gamma^3 t^4.
        return Ok(-sigma.ln() - t
            - gamma * (t - 0.5 * t * t)
            - gamma * gamma * (t * t * t / 3.0 - 0.5 * t * t));
    }
    let u = gamma * t;
    if 1.0 + u <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-sigma.ln() - (1.0 + 1.0 / gamma) * u.ln_1p())
}

/// Cdf of the GP distribution, clamped to [0,1].
pub fn gp_cdf(x: f64, params: GpParams) -> Result<f64> {
    check_x(x)?;
    let GpParams { gamma, sigma } = params;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let t = x / sigma;
    if gamma.abs() < GAMMA_EPS {
        // log1p(gamma t)/gamma expanded to keep the seam continuous.
        let e = t * (1.0 - 0.5 * gamma * t + gamma * gamma * t * t / 3.0);
        return Ok(-(-e).exp_m1());
    }
    let u = gamma * t;
    if 1.0 + u <= 0.0 {
        return Ok(1.0);
    }
    // 1 - exp(-log1p(u)/gamma)
    Ok(-(-u.ln_1p() / gamma).exp_m1().max(-1.0).min(0.0))
}

/// Quantile of the GP distribution for p in (0,1).
pub fn gp_quantile(p: f64, params: GpParams) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "gp_quantile requires p in (0,1), got {p}"
        )));
    }
    let GpParams { gamma, sigma } = params;
    // sigma * ((1-p)^(-gamma) - 1)/gamma, stable via expm1.
    let s = -(-p).ln_1p(); // -log(1-p) > 0
    if gamma.abs() < GAMMA_EPS {
        let a = gamma * s;
        Ok(sigma * s * (1.0 + a / 2.0 + a * a / 6.0))
    } else {
        Ok(sigma * (gamma * s).exp_m1() / gamma)
    }
}

/// The tail-extrapolation weight integral `int_1^x v^(gamma-1) log v dv`.
///
/// Closed form `(x^gamma (gamma log x - 1) + 1) / gamma^2`, evaluated through
/// a series in `gamma log x` near the seam to avoid cancellation.
pub fn q_integral(gamma: f64, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 1.0 {
        return Err(Error::invalid(format!("q_integral requires x >= 1, got {x}")));
    }
    if !gamma.is_finite() {
        return Err(Error::invalid("q_integral requires finite gamma"));
    }
    let big_l = x.ln();
    let a = gamma * big_l;
    if a.abs() < 0.5 {
        // (e^a (a-1) + 1)/a^2 = sum_{m>=0} (m+1)/(m+2)! a^m; q = L^2 * series.
        let mut coeff = 0.5; // (0+1)/2!
        let mut sum = coeff;
        let mut factorial = 2.0;
        let mut pow = 1.0;
        for m in 1..40 {
            factorial *= (m + 2) as f64;
            pow *= a;
            coeff = (m + 1) as f64 / factorial * pow;
            sum += coeff;
            if coeff.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        Ok(big_l * big_l * sum)
    } else {
        Ok((x.powf(gamma) * (a - 1.0) + 1.0) / (gamma * gamma))
    }
}


#[cfg(test)]
mod tests {
    use super::quadrature::adaptive_simpson;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gp(gamma: f64, sigma: f64) -> GpParams {
        GpParams::new(gamma, sigma).unwrap()
    }

    #[test]
    fn logpdf_known_values() {
        assert_abs_diff_eq!(gp_logpdf(1.0, gp(0.0, 1.0)).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            gp_logpdf(0.0, gp(0.5, 2.0)).unwrap(),
            -(2.0f64.ln()),
            epsilon = 1e-12
        );
        // Independent numerical evaluation of the closed form at (1, 1, 1).
        assert_abs_diff_eq!(
            gp_logpdf(1.0, gp(1.0, 1.0)).unwrap(),
            -2.0 * 2.0f64.ln(),
            epsilon = 1e-12
        );
        // Above the finite endpoint sigma/|gamma| = 1.5.
        assert_eq!(gp_logpdf(2.0, gp(-1.0, 1.5)).unwrap(), f64::NEG_INFINITY);
        // Negative x is outside the support, in-band.
        assert_eq!(gp_logpdf(-0.1, gp(0.3, 1.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn logpdf_rejects_bad_arguments() {
        assert!(gp_logpdf(f64::NAN, gp(0.0, 1.0)).is_err());
        assert!(GpParams::new(0.0, -1.0).is_err());
        assert!(GpParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn cdf_quantile_known_values() {
        assert_abs_diff_eq!(
            gp_cdf(2.0f64.ln(), gp(0.0, 1.0)).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(gp_cdf(1.0, gp(1.0, 1.0)).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(gp_quantile(0.5, gp(1.0, 1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert!(gp_quantile(0.0, gp(1.0, 1.0)).is_err());
        assert!(gp_quantile(1.0, gp(1.0, 1.0)).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for &gamma in &[-0.4, 0.0, 0.5, 1.0, 2.0] {
            let params = gp(gamma, 1.0);
            let upper = params.support().upper;
            let mass = if upper.is_finite() {
                adaptive_simpson(
                    &|x| gp_logpdf(x, params).unwrap().exp(),
                    0.0,
                    upper,
                    1e-10,
                )
            } else {
                // Map [0, inf) onto (0, 1) via x = u/(1-u).
                adaptive_simpson(
                    &|u: f64| {
                        let x = u / (1.0 - u);
                        gp_logpdf(x, params).unwrap().exp() / ((1.0 - u) * (1.0 - u))
                    },
                    0.0,
                    1.0 - 1e-12,
                    1e-10,
                )
            };
            assert!((mass - 1.0).abs() < 1e-6, "gamma={gamma}: mass={mass}");
        }
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        for &gamma in &[-0.4, -1e-7, 0.0, 1e-7, 0.5, 1.0, 2.0] {
            let params = gp(gamma, 1.7);
            for i in 1..40 {
                let p = i as f64 / 40.0;
                let x = gp_quantile(p, params).unwrap();
                let back = gp_cdf(x, params).unwrap();
                assert!((back - p).abs() < 1e-10, "gamma={gamma} p={p} back={back}");
                let x2 = gp_quantile(back, params).unwrap();
                assert!((x2 - x).abs() < 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn cdf_monotone() {
        let params = gp(-0.4, 1.0);
        let mut prev = -1.0;
        for i in 0..=100 {
            let x = i as f64 * 0.03;
            let c = gp_cdf(x, params).unwrap();
            assert!(c >= prev && (0.0..=1.0).contains(&c));
            prev = c;
        }
    }

    #[test]
    fn q_integral_known_values() {
        assert_abs_diff_eq!(
            q_integral(0.0, std::f64::consts::E).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            q_integral(1.0, 2.0).unwrap(),
            2.0 * 2.0f64.ln() - 1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            q_integral(-1.0, 10.0).unwrap(),
            0.9 - 10.0f64.ln() / 10.0,
            epsilon = 1e-12
        );
        assert_eq!(q_integral(0.7, 1.0).unwrap(), 0.0);
        assert!(q_integral(0.7, 0.5).is_err());
    }

    #[test]
    fn q_integral_matches_quadrature() {
        for &gamma in &[-0.9, -0.5, -0.1, 0.0, 0.3, 1.0, 2.0, 3.0] {
            for &x in &[1.0, 1.5, 4.0, 100.0, 1e4, 1e6] {
                let got = q_integral(gamma, x).unwrap();
                let want = adaptive_simpson(
                    &|v: f64| v.powf(gamma - 1.0) * v.ln(),
                    1.0,
                    x,
                    1e-12 * (1.0 + got.abs()),
                );
                assert!(
                    (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "gamma={gamma} x={x}: got {got}, quadrature {want}"
                );
                assert!(got >= 0.0);
            }
        }
    }

    #[test]
    fn gamma_zero_seam_is_continuous() {
        for i in 0..=50 {
            let x = i as f64;
            for sign in [-1.0, 1.0] {
                // Just inside and just outside the series/closed-form seam.
                let g_in = sign * GAMMA_EPS * 0.9999999;
                let g_out = sign * GAMMA_EPS * 1.0000001;
                let a = gp_logpdf(x, gp(g_in, 1.3)).unwrap();
                let b = gp_logpdf(x, gp(g_out, 1.3)).unwrap();
                assert!(
                    (a - b).abs() <= 1e-8 * (1.0 + a.abs()),
                    "x={x} sign={sign}: {a} vs {b}"
                );
                let ca = gp_cdf(x, gp(g_in, 1.3)).unwrap();
                let cb = gp_cdf(x, gp(g_out, 1.3)).unwrap();
                assert!((ca - cb).abs() <= 1e-10);
            }
        }
        // q_integral switches from series to closed form at |gamma ln x| = 0.5.
        for &lx in &[0.1f64, 1.0, 3.0, 10.0] {
            let x = lx.exp();
            for sign in [-1.0f64, 1.0] {
                let qa = q_integral(sign * 0.4999999 / lx, x).unwrap();
                let qb = q_integral(sign * 0.5000001 / lx, x).unwrap();
                assert!(
                    (qa - qb).abs() <= 1e-6 * (1.0 + qa.abs()),
                    "lx={lx} sign={sign}: {qa} vs {qb}"
                );
            }
        }
    }
}
