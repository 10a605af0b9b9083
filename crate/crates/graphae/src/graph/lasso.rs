//! Cyclic coordinate descent for the lasso
//! `min_w 0.5 * ||y - A w||^2 + lambda * ||w||_1`.

use ndarray::{Array2, ArrayView1};

pub struct LassoSolution {
    pub coeffs: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// `a` holds the dictionary columns (m x p). Convergence: the largest
/// coefficient change in a full sweep drops below `tol`.
pub fn lasso_cd(
    a: &Array2<f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> LassoSolution {
    let (m, p) = a.dim();
    let col_sq: Vec<f64> = (0..p).map(|j| a.column(j).dot(&a.column(j))).collect();
    let mut w = vec![0.0; p];
    let mut residual: Vec<f64> = y.to_vec();

    for sweep in 1..=max_sweeps {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let mut corr = 0.0;
            for i in 0..m {
                corr += col[i] * residual[i];
            }
            let old = w[j];
            let rho = corr + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                let delta = new - old;
                for i in 0..m {
                    residual[i] -= delta * col[i];
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            return LassoSolution {
                coeffs: w,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    LassoSolution {
        coeffs: w,
        sweeps: max_sweeps,
        converged: false,
    }
}

/// Independent brute-force route used by tests only: dense grid over the
/// coefficient box, refined around the incumbent. The objective is convex,
/// so the shrinking window keeps the minimizer; callers additionally
/// cross-check objective values.
#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// The objective the solver minimizes, evaluated by plain loops.
    pub fn objective(a: &Array2<f64>, y: ArrayView1<'_, f64>, w: &[f64], lambda: f64) -> f64 {
        let m = a.nrows();
        let mut fit = 0.0;
        for i in 0..m {
            let mut pred = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                pred += a[[i, j]] * wj;
            }
            fit += (y[i] - pred).powi(2);
        }
        0.5 * fit + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn grid_search(a: &Array2<f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Vec<f64> {
        const POINTS: usize = 25;
        let p = a.ncols();
        let mut center = vec![0.0; p];
        let mut half_width = 1.5;
        let mut best = center.clone();
        for _level in 0..6 {
            let step = 2.0 * half_width / (POINTS as f64 - 1.0);
            let mut best_f = f64::INFINITY;
            let mut idx = vec![0usize; p];
            loop {
                let w: Vec<f64> = idx
                    .iter()
                    .zip(&center)
                    .map(|(&i, &c)| c - half_width + i as f64 * step)
                    .collect();
                let f = objective(a, y, &w, lambda);
                if f < best_f {
                    best_f = f;
                    best = w;
                }
                // odometer increment over the p-dimensional grid
                let mut d = 0;
                loop {
                    idx[d] += 1;
                    if idx[d] < POINTS {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == p {
                        break;
                    }
                }
                if d == p {
                    break;
                }
            }
            center = best.clone();
            half_width = 3.0 * step;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn shrinks_everything_at_lambda_max() {
        let a: Array2<f64> = array![[1.0, 0.4], [0.2, 0.9]];
        let y: ndarray::Array1<f64> = array![0.7, 0.3];
        let lambda_max = (0..2)
            .map(|j| a.column(j).dot(&y).abs())
            .fold(0.0f64, f64::max);
        let sol = lasso_cd(&a, y.view(), lambda_max, 1e-10, 1000);
        assert!(sol.converged);
        assert_eq!(sol.coeffs, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_lambda_solves_least_squares() {
        let a = array![[1.0, 0.0], [0.0, 2.0]];
        let y = array![3.0, 4.0];
        let sol = lasso_cd(&a, y.view(), 0.0, 1e-12, 1000);
        assert!((sol.coeffs[0] - 3.0).abs() < 1e-10);
        assert!((sol.coeffs[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn matches_refined_grid_search() {
        let a = array![[0.9, 0.1], [0.2, 0.8], [0.1, 0.3]];
        let y = array![0.5, 0.4, 0.2];
        let lambda = 0.05;
        let sol = lasso_cd(&a, y.view(), lambda, 1e-9, 10_000);
        assert!(sol.converged);
        let want = oracle::grid_search(&a, y.view(), lambda);
        assert!(
            oracle::objective(&a, y.view(), &want, lambda)
                <= oracle::objective(&a, y.view(), &sol.coeffs, lambda) + 1e-6
        );
        for (got, want) in sol.coeffs.iter().zip(&want) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }
}
