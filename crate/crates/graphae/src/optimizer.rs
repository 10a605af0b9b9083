//! Limited-memory BFGS with Armijo backtracking.
//!
//! The two-loop recursion approximates the inverse Hessian from a short
//! history of `(step, gradient-change)` pairs. Accepted iterates strictly
//! decrease the objective, so the recorded trace is monotone and the final
//! point is the best point seen.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub history_size: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            max_iter: 400,
            grad_tol: 1e-5,
            history_size: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient infinity norm fell below `grad_tol`.
    GradientTolerance,
    MaxIterations,
    /// Backtracking found no decrease; the best-so-far point is returned.
    LineSearchFailed,
}

/// One accepted iterate, for objective logs and descent audits.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub x: Vec<f64>,
    pub objective: f64,
    pub stop: StopReason,
    pub trace: Vec<IterationRecord>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Minimize `f`, which evaluates the objective at `x` and writes the
/// gradient into its second argument.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Result<Minimized>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; dim];
    let mut fx = f(&x, &mut grad);
    if !fx.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(
            "objective or gradient non-finite at the initial point".into(),
        ));
    }

    let mut trace = vec![IterationRecord {
        iter: 0,
        objective: fx,
        grad_norm: inf_norm(&grad),
    }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        VecDeque::with_capacity(settings.history_size);
    let mut stop = StopReason::MaxIterations;

    let mut trial = vec![0.0; dim];
    let mut trial_grad = vec![0.0; dim];

    for iter in 1..=settings.max_iter {
        if inf_norm(&grad) < settings.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }

        let mut dir = two_loop_direction(&grad, &history);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) || dir.iter().any(|d| !d.is_finite()) {
            // curvature information unusable; fall back to steepest descent
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
            if !(slope < 0.0) {
                stop = StopReason::LineSearchFailed;
                break;
            }
        }

        // unit trial step once curvature is known; conservative first step
        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&dir)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..dim {
                trial[i] = x[i] + step * dir[i];
            }
            if trial == x {
                // step underflow: no representable progress along this ray
                break;
            }
            let ft = f(&trial, &mut trial_grad);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= BACKTRACK_SHRINK;
        }
        let ft = match accepted {
            Some(ft) => ft,
            None => {
                stop = StopReason::LineSearchFailed;
                break;
            }
        };
        if trial_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite objective or gradient at accepted iterate {iter}"
            )));
        }

        let s: Vec<f64> = (0..dim).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..dim).map(|i| trial_grad[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == settings.history_size {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        x.copy_from_slice(&trial);
        grad.copy_from_slice(&trial_grad);
        fx = ft;
        trace.push(IterationRecord {
            iter,
            objective: fx,
            grad_norm: inf_norm(&grad),
        });
    }

    if stop == StopReason::MaxIterations && inf_norm(&grad) < settings.grad_tol {
        stop = StopReason::GradientTolerance;
    }

    Ok(Minimized {
        x,
        objective: fx,
        stop,
        trace,
    })
}

/// `-H g` via the two-loop recursion over the stored `(s, y, 1/s'y)` pairs.
fn two_loop_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    if history.is_empty() {
        for v in q.iter_mut() {
            *v = -*v;
        }
        return q;
    }
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, &q);
        for i in 0..q.len() {
            q[i] -= alpha * y[i];
        }
        alphas.push(alpha);
    }
    let (s_last, y_last, _) = history.back().expect("nonempty history");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for i in 0..q.len() {
            q[i] += (alpha - beta) * s[i];
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}
