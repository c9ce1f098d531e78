//! Frozen Monte-Carlo truth constants for the simulation models.
//!
//! Generated by the `gen_truths` binary; regenerate when adding grid points.
//! Entries: (model, k/n in tenths of a percent, a0) and (model, n, quantile
//! at level 1 - 1/n). Models with closed-form truths are not tabulated.

pub static A0: &[(&str, u32, f64)] = &[
    ("ar1_t1", 25, 63.977622),
    ("ar1_t1", 50, 32.108751),
    ("ar1_t1", 100, 16.291710),
    ("arma11_t2", 25, 6.323328),
    ("arma11_t2", 50, 4.808286),
    ("arma11_t2", 100, 3.985219),
    ("arch1", 25, 0.011656),
    ("arch1", 50, 0.008509),
    ("arch1", 100, 0.006310),
    ("arma21_t5", 25, 0.806745),
    ("arma21_t5", 50, 0.760418),
    ("arma21_t5", 100, 0.741555),
    ("ar1_garch11", 25, 0.004583),
    ("ar1_garch11", 50, 0.004340),
    ("ar1_garch11", 100, 0.004362),
];

pub static QUANTILE: &[(&str, usize, f64)] = &[
    ("arma11_t2", 1000, 64.941008),
    ("arma11_t2", 2000, 91.177308),
    ("arma11_t2", 4000, 128.510409),
    ("arch1", 1000, 0.113219),
    ("arch1", 2000, 0.159438),
    ("arch1", 4000, 0.224143),
    ("arma21_t5", 1000, 5.895026),
    ("arma21_t5", 2000, 6.866005),
    ("arma21_t5", 4000, 7.973536),
    ("ar1_garch11", 1000, 0.035365),
    ("ar1_garch11", 2000, 0.041220),
    ("ar1_garch11", 4000, 0.047999),
];
