//! PCA baseline: project onto the top principal directions of the sample
//! covariance.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Center the columns by the mean sample and project onto the `l` leading
/// principal directions (descending eigenvalue order; each direction's
/// largest-magnitude entry is made positive).
pub fn pca_reduce(x: &Array2<f64>, l: usize) -> Result<Array2<f64>> {
    let (m, n) = x.dim();
    if l == 0 || l > m.min(n) {
        return Err(Error::InvalidArg(format!(
            "component count {l} must satisfy 1 <= l <= min(m={m}, n={n})"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArg("pca needs at least two samples".into()));
    }
    let mean = x.mean_axis(Axis(1)).expect("n >= 1");
    let xc = x - &mean.view().insert_axis(Axis(1));
    let denom = (n - 1) as f64;

    // eigen-decompose whichever of X_c X_c^T / (n-1) (features) or
    // X_c^T X_c / (n-1) (samples) is smaller, then recover feature-space
    // directions
    let directions = if m <= n {
        let cov = xc.dot(&xc.t()) / denom;
        let total: f64 = cov.diag().sum();
        if total <= 0.0 {
            return Err(Error::Numerical("data has zero variance".into()));
        }
        let (values, vectors) = jacobi_eigen(&cov);
        let order = descending(&values);
        let mut dirs = Array2::zeros((m, l));
        for (c, &idx) in order.iter().take(l).enumerate() {
            dirs.column_mut(c).assign(&vectors.column(idx));
        }
        dirs
    } else {
        let gram = xc.t().dot(&xc) / denom;
        let total: f64 = gram.diag().sum();
        if total <= 0.0 {
            return Err(Error::Numerical("data has zero variance".into()));
        }
        let (values, vectors) = jacobi_eigen(&gram);
        let order = descending(&values);
        let scale = values[order[0]].max(0.0);
        let mut dirs = Array2::zeros((m, l));
        for (c, &idx) in order.iter().take(l).enumerate() {
            let lam = values[idx];
            if lam <= 1e-12 * (1.0 + scale) {
                return Err(Error::Numerical(format!(
                    "data rank is below the requested {l} components"
                )));
            }
            // u = X_c v / sqrt(lambda (n-1))
            let u = xc.dot(&vectors.column(idx)) / (lam * denom).sqrt();
            dirs.column_mut(c).assign(&u);
        }
        dirs
    };

    let mut dirs = directions;
    fix_signs(&mut dirs);
    Ok(dirs.t().dot(&xc))
}

fn descending(values: &Array1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite").then(a.cmp(&b)));
    order
}

/// Flip each column so its largest-magnitude entry is positive (first
/// occurrence wins ties).
fn fix_signs(dirs: &mut Array2<f64>) {
    for mut col in dirs.columns_mut() {
        let mut lead = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(sym: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let m = sym.nrows();
    let mut a = sym.clone();
    let mut vecs: Array2<f64> = Array2::eye(m);
    let scale: f64 = sym.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..m {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..m {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
                for i in 0..m {
                    let vip = vecs[[i, p]];
                    let viq = vecs[[i, q]];
                    vecs[[i, p]] = c * vip - s * viq;
                    vecs[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    (a.diag().to_owned(), vecs)
}
