//! Single-layer sigmoid auto-encoder with graph, sparsity, or plain
//! reconstruction objectives, analytic gradients, and quasi-Newton training.
//!
//! All objectives share the unnormalized squared Frobenius reconstruction
//! error `||X - Q||^2`; coefficients therefore scale with the sample count.
//! Encoder and decoder weights are independent (no tying).

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::optimizer::{self, LbfgsSettings, Minimized};
use crate::seed::rng_from;

/// Numerically stable logistic function; saturates to 0/1 without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Parameters of one encoder/decoder pair: `H = S(W_H X + b_H)`,
/// `Q = S(W_Q H + b_Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_h: Array2<f64>,
    pub b_h: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
}

impl LayerParams {
    /// Symmetric uniform init with scale `sqrt(6 / (fan_in + fan_out))`,
    /// biases zero, fully determined by `seed`.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = rng_from(seed);
        let r = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let mut uniform = |_| rng.random::<f64>() * 2.0 * r - r;
        let w_h = Array2::from_shape_fn((hidden_dim, input_dim), &mut uniform);
        let w_q = Array2::from_shape_fn((input_dim, hidden_dim), &mut uniform);
        LayerParams {
            w_h,
            b_h: Array1::zeros(hidden_dim),
            w_q,
            b_q: Array1::zeros(input_dim),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LayerParams {
            w_h: Array2::zeros((hidden_dim, input_dim)),
            b_h: Array1::zeros(hidden_dim),
            w_q: Array2::zeros((input_dim, hidden_dim)),
            b_q: Array1::zeros(input_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        2 * input_dim * hidden_dim + input_dim + hidden_dim
    }

    pub fn is_finite(&self) -> bool {
        self.w_h.iter().all(|v| v.is_finite())
            && self.b_h.iter().all(|v| v.is_finite())
            && self.w_q.iter().all(|v| v.is_finite())
            && self.b_q.iter().all(|v| v.is_finite())
    }

    /// Flatten as `[W_H row-major, b_H, W_Q row-major, b_Q]`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend(self.w_h.iter());
        out.extend(self.b_h.iter());
        out.extend(self.w_q.iter());
        out.extend(self.b_q.iter());
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::param_count(self.input_dim(), self.hidden_dim()));
        self.flatten_into(&mut out);
        out
    }

    /// Inverse of [`flatten`](Self::flatten); returns the remaining slice.
    pub fn from_flat(input_dim: usize, hidden_dim: usize, flat: &[f64]) -> (Self, &[f64]) {
        let (m, l) = (input_dim, hidden_dim);
        let (wh, rest) = flat.split_at(l * m);
        let (bh, rest) = rest.split_at(l);
        let (wq, rest) = rest.split_at(m * l);
        let (bq, rest) = rest.split_at(m);
        let params = LayerParams {
            w_h: Array2::from_shape_vec((l, m), wh.to_vec()).expect("shape"),
            b_h: Array1::from_vec(bh.to_vec()),
            w_q: Array2::from_shape_vec((m, l), wq.to_vec()).expect("shape"),
            b_q: Array1::from_vec(bq.to_vec()),
        };
        (params, rest)
    }
}

/// Which terms the training objective carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Reconstruction + graph penalty.
    Gae,
    /// Reconstruction + KL sparsity penalty.
    Sae,
    /// Reconstruction only.
    Plain,
    /// Graph penalty only (no reconstruction term).
    GraphOnly,
}

/// Training hyperparameters for one layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Graph regularizer intensity.
    pub lambda: f64,
    /// Sparsity penalty intensity.
    pub eta: f64,
    /// Target mean hidden activation for the sparsity penalty.
    pub rho: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Quasi-Newton memory.
    pub history_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            eta: 0.0,
            rho: 0.1,
            max_iter: 400,
            grad_tol: 1e-5,
            seed: 0,
            history_size: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.eta < 0.0 {
            return Err(Error::InvalidArg("lambda and eta must be nonnegative".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArg(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if self.max_iter == 0 || self.history_size == 0 || !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArg(
                "max_iter, history_size, grad_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsSettings {
        LbfgsSettings {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            history_size: self.history_size,
        }
    }
}

fn check_encode_dims(params: &LayerParams, x: &Array2<f64>) -> Result<()> {
    if x.nrows() != params.input_dim() {
        return Err(Error::Dim(format!(
            "input has {} rows but the layer expects {}",
            x.nrows(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// `H = S(W_H X + b_H)`, columns independent.
pub fn encode(params: &LayerParams, x: &Array2<f64>) -> Result<Array2<f64>> {
    check_encode_dims(params, x)?;
    let mut a = params.w_h.dot(x);
    a += &params.b_h.view().insert_axis(Axis(1));
    Ok(a.mapv(sigmoid))
}

/// `Q = S(W_Q H + b_Q)`.
pub fn decode(params: &LayerParams, h: &Array2<f64>) -> Result<Array2<f64>> {
    if h.nrows() != params.hidden_dim() {
        return Err(Error::Dim(format!(
            "hidden input has {} rows but the layer expects {}",
            h.nrows(),
            params.hidden_dim()
        )));
    }
    let mut a = params.w_q.dot(h);
    a += &params.b_q.view().insert_axis(Axis(1));
    Ok(a.mapv(sigmoid))
}

/// `tr(H G H^T)` without forming the full product.
pub(crate) fn trace_penalty(h: &Array2<f64>, g: &Array2<f64>) -> f64 {
    let hg = h.dot(g);
    hg.iter().zip(h.iter()).map(|(a, b)| a * b).sum()
}

const RHO_CLAMP: f64 = 1e-12;

fn kl_penalty(rho: f64, rho_hat: &Array1<f64>) -> f64 {
    rho_hat
        .iter()
        .map(|&r| {
            let r = r.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP);
            rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
        })
        .sum()
}

/// Internal evaluation context; the objective is
/// `[recon] ||X - Q||^2 + lambda tr(H G H^T) + eta sum_j KL(rho || rho_j)`
/// with terms switched on per [`ObjectiveKind`].
struct Terms<'a> {
    reconstruction: bool,
    graph: Option<(&'a Array2<f64>, f64)>,
    sparsity: Option<(f64, f64)>,
}

impl<'a> Terms<'a> {
    fn for_kind(
        kind: ObjectiveKind,
        graph: Option<&'a Array2<f64>>,
        config: &TrainConfig,
    ) -> Result<Self> {
        let needs_graph = match kind {
            ObjectiveKind::Gae => config.lambda > 0.0,
            ObjectiveKind::GraphOnly => {
                if config.lambda <= 0.0 {
                    return Err(Error::InvalidArg(
                        "graph_only training requires lambda > 0".into(),
                    ));
                }
                true
            }
            _ => false,
        };
        if needs_graph && graph.is_none() {
            return Err(Error::InvalidArg(format!(
                "{kind:?} with lambda {} requires a regularizer matrix",
                config.lambda
            )));
        }
        if !needs_graph && graph.is_some() {
            return Err(Error::InvalidArg(format!(
                "{kind:?} with lambda {} does not take a regularizer matrix",
                config.lambda
            )));
        }
        Ok(Terms {
            reconstruction: kind != ObjectiveKind::GraphOnly,
            graph: graph.map(|g| (g, config.lambda)),
            sparsity: (kind == ObjectiveKind::Sae && config.eta > 0.0)
                .then_some((config.eta, config.rho)),
        })
    }
}

fn eval_objective(params: &LayerParams, x: &Array2<f64>, terms: &Terms<'_>) -> f64 {
    let h = encode(params, x).expect("dims checked");
    let mut total = 0.0;
    if terms.reconstruction {
        let q = decode(params, &h).expect("dims checked");
        total += x.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    if let Some((g, lambda)) = terms.graph {
        total += lambda * trace_penalty(&h, g);
    }
    if let Some((eta, rho)) = terms.sparsity {
        let rho_hat = h.mean_axis(Axis(1)).expect("n >= 1");
        total += eta * kl_penalty(rho, &rho_hat);
    }
    total
}

/// Objective value and its exact gradient with respect to every parameter.
fn eval_gradient(params: &LayerParams, x: &Array2<f64>, terms: &Terms<'_>) -> (f64, LayerParams) {
    let n = x.ncols();
    let h = encode(params, x).expect("dims checked");
    let mut objective = 0.0;
    let mut grad = LayerParams::zeros(params.input_dim(), params.hidden_dim());
    // accumulated d objective / d H
    let mut dh: Array2<f64> = Array2::zeros(h.raw_dim());

    if terms.reconstruction {
        let q = decode(params, &h).expect("dims checked");
        objective += x.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        // delta at the decoder pre-activation: -2 (X - Q) .* Q (1 - Q)
        let mut dq = q.clone();
        ndarray::Zip::from(&mut dq).and(x).and(&q).for_each(|d, &xv, &qv| {
            *d = -2.0 * (xv - qv) * qv * (1.0 - qv);
        });
        grad.w_q = dq.dot(&h.t());
        grad.b_q = dq.sum_axis(Axis(1));
        dh = params.w_q.t().dot(&dq);
    }

    if let Some((g, lambda)) = terms.graph {
        objective += lambda * trace_penalty(&h, g);
        // d tr(H G H^T) / dH = H (G + G^T)
        let gsym = g + &g.t();
        dh += &(h.dot(&gsym) * lambda);
    }

    if let Some((eta, rho)) = terms.sparsity {
        let rho_hat = h.mean_axis(Axis(1)).expect("n >= 1");
        objective += eta * kl_penalty(rho, &rho_hat);
        for (j, &r) in rho_hat.iter().enumerate() {
            // clamped region has zero derivative
            if r > RHO_CLAMP && r < 1.0 - RHO_CLAMP {
                let coef = eta * (-rho / r + (1.0 - rho) / (1.0 - r)) / n as f64;
                dh.row_mut(j).mapv_inplace(|v| v + coef);
            }
        }
    }

    // chain through the encoder sigmoid
    ndarray::Zip::from(&mut dh).and(&h).for_each(|d, &hv| {
        *d *= hv * (1.0 - hv);
    });
    grad.w_h = dh.dot(&x.t());
    grad.b_h = dh.sum_axis(Axis(1));
    (objective, grad)
}

fn check_objective_input(params: &LayerParams, x: &Array2<f64>, g: Option<&Array2<f64>>) -> Result<()> {
    check_encode_dims(params, x)?;
    if !params.is_finite() {
        return Err(Error::Numerical("parameters contain non-finite values".into()));
    }
    if let Some(g) = g {
        if g.nrows() != x.ncols() || g.ncols() != x.ncols() {
            return Err(Error::Dim(format!(
                "regularizer matrix is {}x{} but there are {} samples",
                g.nrows(),
                g.ncols(),
                x.ncols()
            )));
        }
    }
    Ok(())
}

/// `||X - Q||^2 + lambda tr(H G H^T)`.
pub fn gae_objective(
    params: &LayerParams,
    x: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
) -> Result<f64> {
    check_objective_input(params, x, Some(g))?;
    let terms = Terms {
        reconstruction: true,
        graph: (lambda != 0.0).then_some((g, lambda)),
        sparsity: None,
    };
    Ok(eval_objective(params, x, &terms))
}

/// Exact gradient of [`gae_objective`] in the shape of the parameters.
pub fn gae_gradient(
    params: &LayerParams,
    x: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
) -> Result<LayerParams> {
    check_objective_input(params, x, Some(g))?;
    let terms = Terms {
        reconstruction: true,
        graph: (lambda != 0.0).then_some((g, lambda)),
        sparsity: None,
    };
    Ok(eval_gradient(params, x, &terms).1)
}

/// `||X - Q||^2 + eta sum_j KL(rho || rho_j)` with `rho_j` the mean
/// activation of hidden unit j over all samples.
pub fn sae_objective(params: &LayerParams, x: &Array2<f64>, eta: f64, rho: f64) -> Result<f64> {
    check_objective_input(params, x, None)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArg(format!("rho must lie in (0, 1), got {rho}")));
    }
    let terms = Terms {
        reconstruction: true,
        graph: None,
        sparsity: (eta != 0.0).then_some((eta, rho)),
    };
    Ok(eval_objective(params, x, &terms))
}

/// Exact gradient of [`sae_objective`].
pub fn sae_gradient(
    params: &LayerParams,
    x: &Array2<f64>,
    eta: f64,
    rho: f64,
) -> Result<LayerParams> {
    check_objective_input(params, x, None)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArg(format!("rho must lie in (0, 1), got {rho}")));
    }
    let terms = Terms {
        reconstruction: true,
        graph: None,
        sparsity: (eta != 0.0).then_some((eta, rho)),
    };
    Ok(eval_gradient(params, x, &terms).1)
}

/// `lambda tr(H G H^T)` alone, the pre-training variant without a
/// reconstruction term.
pub fn graph_only_objective(
    params: &LayerParams,
    x: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
) -> Result<f64> {
    check_objective_input(params, x, Some(g))?;
    let terms = Terms {
        reconstruction: false,
        graph: Some((g, lambda)),
        sparsity: None,
    };
    Ok(eval_objective(params, x, &terms))
}

/// Exact gradient of [`graph_only_objective`]; decoder components are zero.
pub fn graph_only_gradient(
    params: &LayerParams,
    x: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
) -> Result<LayerParams> {
    check_objective_input(params, x, Some(g))?;
    let terms = Terms {
        reconstruction: false,
        graph: Some((g, lambda)),
        sparsity: None,
    };
    Ok(eval_gradient(params, x, &terms).1)
}

/// Plain reconstruction error `||X - Q||^2`.
pub fn reconstruction_error(params: &LayerParams, x: &Array2<f64>) -> Result<f64> {
    check_objective_input(params, x, None)?;
    let terms = Terms {
        reconstruction: true,
        graph: None,
        sparsity: None,
    };
    Ok(eval_objective(params, x, &terms))
}

/// Exact gradient of [`reconstruction_error`].
pub fn reconstruction_gradient(params: &LayerParams, x: &Array2<f64>) -> Result<LayerParams> {
    check_objective_input(params, x, None)?;
    let terms = Terms {
        reconstruction: true,
        graph: None,
        sparsity: None,
    };
    Ok(eval_gradient(params, x, &terms).1)
}

/// A trained layer with its optimizer trace.
#[derive(Debug, Clone)]
pub struct TrainedLayer {
    pub params: LayerParams,
    pub result: Minimized,
}

/// Train one encoder/decoder pair by limited-memory BFGS from a seeded
/// random initialization. The graph regularizer matrix must be supplied
/// exactly when the objective uses it.
pub fn train_layer(
    x: &Array2<f64>,
    g: Option<&Array2<f64>>,
    config: &TrainConfig,
    hidden_dim: usize,
    kind: ObjectiveKind,
) -> Result<TrainedLayer> {
    config.validate()?;
    if hidden_dim == 0 {
        return Err(Error::InvalidArg("hidden dimension must be positive".into()));
    }
    let (m, n) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::Dim("training data must be nonempty".into()));
    }
    if let Some(g) = g {
        if g.dim() != (n, n) {
            return Err(Error::Dim(format!(
                "regularizer matrix is {:?} but there are {n} samples",
                g.dim()
            )));
        }
    }
    let terms = Terms::for_kind(kind, g, config)?;

    let init = LayerParams::init(m, hidden_dim, config.seed);
    let objective = |flat: &[f64], grad_out: &mut [f64]| -> f64 {
        let (params, _) = LayerParams::from_flat(m, hidden_dim, flat);
        let (obj, grad) = eval_gradient(&params, x, &terms);
        let mut cursor = 0;
        for part in [
            grad.w_h.as_slice().expect("contiguous"),
            grad.b_h.as_slice().expect("contiguous"),
            grad.w_q.as_slice().expect("contiguous"),
            grad.b_q.as_slice().expect("contiguous"),
        ] {
            grad_out[cursor..cursor + part.len()].copy_from_slice(part);
            cursor += part.len();
        }
        obj
    };
    let result = optimizer::minimize(objective, init.flatten(), &config.lbfgs())?;
    let (params, rest) = LayerParams::from_flat(m, hidden_dim, &result.x);
    debug_assert!(rest.is_empty());
    Ok(TrainedLayer { params, result })
}
