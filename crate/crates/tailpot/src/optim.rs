//! Small derivative-free simplex search (Nelder-Mead) for low-dimensional
//! maximization, shared by the GP likelihood fit and the ARMA least-squares
//! fallback. Objectives may return `-inf` for infeasible points.

pub struct SimplexOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 2000,
            ftol: 1e-12,
            xtol: 1e-10,
            initial_step: 0.25,
        }
    }
}

pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize `f` starting from `x0`.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult {
    let dim = x0.len();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    points.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        let step = if p[i].abs() > 1.0 {
            opts.initial_step * p[i].abs()
        } else {
            opts.initial_step
        };
        p[i] += step;
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| f(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        // Sort descending by value (index 0 = best, since we maximize).
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap_or(std::cmp::Ordering::Equal));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let revalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        points = reordered;
        values = revalues;

        let spread = values[0] - values[dim];
        let xspread: f64 = (0..dim)
            .map(|i| (points[0][i] - points[dim][i]).abs())
            .fold(0.0, f64::max);
        if spread.abs() <= opts.ftol * (1.0 + values[0].abs()) && xspread <= opts.xtol {
            converged = true;
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; dim];
        for p in points.iter().take(dim) {
            for (c, &x) in centroid.iter_mut().zip(p.iter()) {
                *c += x / dim as f64;
            }
        }

        let worst = points[dim].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let fr = f(&reflect);

        if fr > values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + gamma * (c - w))
                .collect();
            let fe = f(&expand);
            if fe > fr {
                points[dim] = expand;
                values[dim] = fe;
            } else {
                points[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr > values[dim - 1] {
            points[dim] = reflect;
            values[dim] = fr;
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + rho * (w - c))
                .collect();
            let fc = f(&contract);
            if fc > values[dim] {
                points[dim] = contract;
                values[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=dim {
                    let best = points[0].clone();
                    for (x, &b) in points[i].iter_mut().zip(&best) {
                        *x = b + sigma * (*x - b);
                    }
                    values[i] = f(&points[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] > values[best] {
            best = i;
        }
    }
    SimplexResult {
        x: points[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}
