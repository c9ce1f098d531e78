//! Peaks-over-threshold tail inference for serially dependent time series.
//!
//! The crate fits the generalized Pareto family to the top-k exceedances of
//! a stationary series, estimates the sampling covariance of the fit under
//! serial dependence via a rank-based tail copula, and turns both into
//! honest frequentist regions and adjusted posterior samples for the tail
//! shape, scale, and extreme quantiles. A small simulation lab reproduces
//! coverage experiments for several dependent models.

pub mod bayes;
pub mod covariance;
pub mod dynamic;
pub mod error;
pub mod freq;
pub mod gpd;
pub mod likelihood;
pub mod mat2;
pub mod optim;
pub mod sim;
pub mod special;

pub use bayes::{
    adjusted_loglik, credible_summaries, quantile_posterior, sample_posterior, GammaPrior,
    McmcSettings, PosteriorDraws, PriorSpec, QuantilePosterior, SigmaPrior,
};
pub use covariance::{
    assemble, cholesky_adjustment, chebyshev_grid, estimate_tail_copula, r_integral, sigma_matrix,
    BlockMode, SerialCovariance, TailCopulaTable,
};
pub use dynamic::{
    arma_cls_fit, dynamic_quantile_posterior, h_step_quantile, make_residuals,
    make_residuals_forced, residual_gap_statistic, ArmaCoefficients, ArmaFit, ArmaSpec,
    DynamicQuantile, DynamicSettings, ResidualSet,
};
pub use error::{Error, Result};
pub use freq::{
    confidence_ellipsoid, param_intervals, quantile_interval, quantile_point, EllipsoidRegion,
    Interval, QuantileInterval, QuantileTarget, VarianceMethod,
};
pub use gpd::{gp_cdf, gp_logpdf, gp_quantile, q_integral, GpParams, Support, GAMMA_EPS};
pub use likelihood::{
    empirical_loglik, fisher_info, mle_fit, score_and_info, ExceedanceSet, FitOptions, MleFit,
};
pub use mat2::{Mat2, Vec2};
pub use sim::{
    coverage_experiment, oracle_a0, oracle_quantile, sigma_experiment, sigma_truth, simulate,
    true_values, CoverageCell, CoverageConfig, CoverageReport, Estimator, ModelName, ModelSpec,
    SigmaRow, SimOutput, Target, TrueValues,
};
