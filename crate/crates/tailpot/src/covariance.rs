//! Serial dependence adjustment: block estimation of the tail-copula
//! covariance function R(x,y), assembly of the asymptotic covariance of the
//! GP fit under dependence, and the Cholesky factor used to curve the
//! posterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fisher_info, MleFit};
use crate::mat2::Mat2;

/// Block scheme for the tail-copula estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// Overlapping windows; the default (less biased in practice).
    Sliding,
    /// Non-overlapping windows separated by a gap of `l` observations.
    Disjoint,
}

/// Gridded estimate of the serial tail-copula covariance R(u,1) plus the
/// diagonal value R(1,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCopulaTable {
    /// Ascending grid in [0,1], always containing 1.
    pub grid: Vec<f64>,
    /// Estimated R(u,1) per grid point, clamped to [0, 10*min(u,1)].
    pub values_r_u1: Vec<f64>,
    /// Estimated R(1,1).
    pub r11: f64,
    pub mode: BlockMode,
    /// Block length.
    pub m: usize,
    /// Gap between disjoint blocks (0 in sliding mode).
    pub l: usize,
}

/// Upper sanity bound on R(u,1)/min(u,1); estimates above it are clamped.
const R_BOUND: f64 = 10.0;

/// Default number of grid points for R(u,1).
pub const DEFAULT_GRID_POINTS: usize = 64;

/// Chebyshev-spaced grid on (0,1]: points cluster near 0 where the
/// integrand R(u,1)/u varies the most.
pub fn chebyshev_grid(points: usize) -> Vec<f64> {
    (1..=points)
        .map(|j| 0.5 * (1.0 - (j as f64 * std::f64::consts::PI / points as f64).cos()))
        .collect()
}

/// Default gap for the disjoint scheme (theory wants l -> inf, l = o(m)).
pub fn default_gap(m: usize) -> usize {
    m.div_ceil(10)
}

// Tie-averaged ascending ranks (1-based, as f64).
fn average_ranks(data: &[f64]) -> Vec<f64> {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| data[i].partial_cmp(&data[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && data[order[end + 1]] == data[order[start]] {
            end += 1;
        }
        let avg = 0.5 * ((start + 1) + (end + 1)) as f64;
        for &idx in &order[start..=end] {
            ranks[idx] = avg;
        }
        start = end + 1;
    }
    ranks
}

/// Block estimator of the tail-copula covariance R(u,1) on `grid`.
///
/// Rank-based: only the ordering of the data enters, so the estimate is
/// invariant under strictly increasing marginal transforms.
pub fn estimate_tail_copula(
    data: &[f64],
    k: usize,
    m: usize,
    mode: BlockMode,
    gap: Option<usize>,
    grid: Vec<f64>,
) -> Result<TailCopulaTable> {
    let n = data.len();
    if k < 1 || k >= n {
        return Err(Error::invalid(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    if m < 1 || 4 * m > n {
        return Err(Error::invalid(format!(
            "block length must satisfy 1 <= m <= n/4, got m={m}, n={n}"
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("series contains non-finite values".into()));
    }
    if data.iter().all(|&x| x == data[0]) {
        return Err(Error::Degenerate("constant series".into()));
    }
    if grid.len() < 2
        || grid.windows(2).any(|w| w[0] >= w[1])
        || grid.iter().any(|&u| !(0.0..=1.0).contains(&u))
        || *grid.last().unwrap() != 1.0
    {
        return Err(Error::invalid(
            "grid must be ascending within [0,1] and end at 1",
        ));
    }
    let l = match mode {
        BlockMode::Sliding => 0,
        BlockMode::Disjoint => {
            let l = gap.unwrap_or_else(|| default_gap(m));
            if l >= m {
                return Err(Error::invalid(format!("need gap l < m, got l={l}, m={m}")));
            }
            if m + l >= n {
                return Err(Error::invalid("m + l must be below n"));
            }
            l
        }
    };

    // Survival values with tie-averaged ranks: F-bar(X_i) = (n - r_i + 1)/n.
    let ranks = average_ranks(data);
    let survival: Vec<f64> = ranks.iter().map(|r| (n as f64 - r + 1.0) / n as f64).collect();

    let big_n = match mode {
        BlockMode::Sliding => n - m - 1,
        BlockMode::Disjoint => n / (m + l),
    };
    if big_n < 2 {
        return Err(Error::invalid("not enough blocks; reduce m"));
    }

    // Block sums of exceedance indicators at level u: Z_j(u).
    let block_sums = |u: f64| -> Vec<f64> {
        let level = u * k as f64 / n as f64;
        let mut prefix = vec![0.0; n + 1];
        for (i, &s) in survival.iter().enumerate() {
            prefix[i + 1] = prefix[i] + f64::from(u8::from(s <= level));
        }
        (0..big_n)
            .map(|j| {
                let start = match mode {
                    BlockMode::Sliding => j,
                    BlockMode::Disjoint => j * (m + l),
                };
                prefix[start + m] - prefix[start]
            })
            .collect()
    };

    let centered = |z: &[f64]| -> Vec<f64> {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        z.iter().map(|v| v - mean).collect()
    };

    let scale = n as f64 / (m as f64 * k as f64) / big_n as f64;
    let z1 = centered(&block_sums(1.0));
    let r11 = scale * z1.iter().map(|v| v * v).sum::<f64>();
    if r11 <= 0.0 {
        return Err(Error::Degenerate(
            "no variation in block exceedance counts".into(),
        ));
    }

    let mut clamped = 0usize;
    let values_r_u1: Vec<f64> = grid
        .iter()
        .map(|&u| {
            let raw = if u == 1.0 {
                r11
            } else {
                let zu = centered(&block_sums(u));
                scale * zu.iter().zip(&z1).map(|(a, b)| a * b).sum::<f64>()
            };
            let cap = R_BOUND * u.min(1.0);
            if raw > cap || raw < 0.0 {
                clamped += 1;
            }
            raw.clamp(0.0, cap)
        })
        .collect();
    if clamped > 0 {
        log::debug!("{clamped} tail-copula grid value(s) clamped into [0, {R_BOUND} min(u,1)]");
    }

    Ok(TailCopulaTable {
        grid,
        values_r_u1,
        r11,
        mode,
        m,
        l,
    })
}

/// Trapezoidal estimate of `int_0^1 R(u,1)/u du`. Below the smallest grid
/// node the (bounded) integrand is extended as a constant.
pub fn r_integral(table: &TailCopulaTable) -> Result<f64> {
    if table.grid.len() < 8 {
        return Err(Error::invalid("r_integral needs at least 8 grid points"));
    }
    let g: Vec<f64> = table
        .grid
        .iter()
        .zip(&table.values_r_u1)
        .map(|(&u, &r)| if u > 0.0 { r / u } else { 0.0 })
        .collect();
    // Skip a leading exact-zero grid point, if present, when extending.
    let first = usize::from(table.grid[0] == 0.0);
    let mut total = table.grid[first] * g[first];
    for i in first..table.grid.len() - 1 {
        total += 0.5 * (g[i] + g[i + 1]) * (table.grid[i + 1] - table.grid[i]);
    }
    Ok(total)
}

/// Asymptotic covariance of the normalized GP fit as a function of the
/// shape and the two tail-copula functionals r11 = R(1,1) and
/// r_int = int R(u,1)/u du.
pub fn sigma_matrix(gamma: f64, r11: f64, r_int: f64) -> Result<Mat2> {
    let sigma = sigma_matrix_raw(gamma, r11, r_int)?;
    if !sigma.is_symmetric_positive_definite() {
        return Err(Error::Conditioning {
            message: format!(
                "serial covariance not positive definite (gamma={gamma}, r11={r11}, r_int={r_int})"
            ),
            eigenvalues: sigma.sym_eigenvalues(),
        });
    }
    Ok(sigma)
}

fn sigma_matrix_raw(gamma: f64, r11: f64, r_int: f64) -> Result<Mat2> {
    if !(gamma > -0.5) {
        return Err(Error::invalid(format!(
            "sigma_matrix requires gamma > -1/2, got {gamma}"
        )));
    }
    if !(r11 > 0.0) {
        return Err(Error::invalid(format!(
            "sigma_matrix requires r11 > 0, got {r11}"
        )));
    }
    let g1 = 1.0 + gamma;
    let g2 = 2.0 + gamma;
    let s11 = g1 * g1 * r11;
    let s12 = g1 * g1 * (r_int - g2 / g1 * r11);
    let s22 = g1 * g1 * (g2 * g2 / (g1 * g1) * r11 - 2.0 * r_int / g1);
    Ok(Mat2::symmetric(s11, s12, s22))
}

/// The matrix C with C^{-T} I^{-1} C^{-1} = Sigma, built from the
/// lower-triangular Cholesky factors of both inputs: C = (I_C Sigma_C^T)^{-1}.
pub fn cholesky_adjustment(sigma_hat: Mat2, info_hat: Mat2) -> Result<Mat2> {
    let sigma_c = sigma_hat.cholesky()?;
    let info_c = info_hat.cholesky()?;
    info_c.mul(sigma_c.transpose()).inverse()
}

/// Everything the honest regions and the adjusted posterior need: the
/// normalized covariance, its data-scale version, and the curvature matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerialCovariance {
    /// Covariance of the normalized fit (scale 1).
    pub sigma_hat: Mat2,
    /// Covariance on the data scale: A sigma_hat A^T with A = diag(1, sigma).
    pub omega_hat: Mat2,
    pub a_hat: Mat2,
    /// Cholesky adjustment in normalized coordinates.
    pub c_hat: Mat2,
    /// Data-scale adjustment A C A^{-1}, consumed by the posterior sampler.
    pub d_hat: Mat2,
    /// Value of int R(u,1)/u du used in the assembly.
    pub r_int: f64,
    pub table: TailCopulaTable,
    /// Set when the raw covariance needed eigenvalue flooring.
    pub repaired: bool,
}

/// Estimate the tail copula from the data and assemble all covariance
/// pieces around an existing fit.
pub fn assemble(
    data: &[f64],
    k: usize,
    m: usize,
    mode: BlockMode,
    gap: Option<usize>,
    fit: &MleFit,
) -> Result<SerialCovariance> {
    if !fit.converged {
        return Err(Error::invalid("assemble requires a converged fit"));
    }
    let table = estimate_tail_copula(data, k, m, mode, gap, chebyshev_grid(DEFAULT_GRID_POINTS))?;
    assemble_from_table(table, fit)
}

/// Assembly step alone, for callers that already hold a copula table.
pub fn assemble_from_table(table: TailCopulaTable, fit: &MleFit) -> Result<SerialCovariance> {
    let gamma = fit.params.gamma;
    let sigma = fit.params.sigma;
    let r_int = r_integral(&table)?;
    let raw = sigma_matrix_raw(gamma, table.r11, r_int)?;
    let floor = 1e-10 * raw.trace().abs().max(f64::MIN_POSITIVE);
    let (sigma_hat, repaired) = if raw.sym_eigenvalues()[0] < floor {
        log::warn!(
            "serial covariance nearly singular (eigenvalues {:?}); flooring",
            raw.sym_eigenvalues()
        );
        (raw.spd_floor(floor), true)
    } else {
        (raw, false)
    };
    let a_hat = Mat2::diagonal(1.0, sigma);
    let omega_hat = a_hat.mul(sigma_hat).mul(a_hat.transpose());
    let c_hat = cholesky_adjustment(sigma_hat, fisher_info(gamma)?)?;
    // The posterior map needs the transposed factor: with C' = C^T the
    // curvature identity C'^T I C' = Sigma^{-1} holds, so draws from the
    // adjusted posterior have covariance Sigma/k (the untransposed factor
    // would swap the two marginal variances).
    let d_hat = a_hat
        .mul(c_hat.transpose())
        .mul(Mat2::diagonal(1.0, 1.0 / sigma));
    Ok(SerialCovariance {
        sigma_hat,
        omega_hat,
        a_hat,
        c_hat,
        d_hat,
        r_int,
        table,
        repaired,
    })
}
