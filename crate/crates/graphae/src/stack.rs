//! Multi-layer models: greedy layer-wise training, stacked encoding, and
//! whole-stack fine-tuning.
//!
//! Layer i is trained on the previous layer's representation, and the
//! affinity graph is rebuilt from that representation with the same recipe,
//! so each layer preserves the neighborhood structure of its own input. The
//! deep decoder applies the per-layer decoders in reverse order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::autoencoder::{
    decode, encode, train_layer, trace_penalty, LayerParams, ObjectiveKind, TrainConfig,
};
use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::graph::{AffinityGraph, GraphSpec};
use crate::optimizer::{self, LbfgsSettings, Minimized};

/// An ordered chain of trained encoder/decoder pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeModel {
    layers: Vec<LayerParams>,
}

impl GaeModel {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArg("a model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].hidden_dim() != pair[1].input_dim() {
                return Err(Error::Dim(format!(
                    "layer {i} produces dim {} but layer {} expects {}",
                    pair[0].hidden_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(GaeModel { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// `[m, l_1, ..., l_j]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim()];
        dims.extend(self.layers.iter().map(|l| l.hidden_dim()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").hidden_dim()
    }

    /// Apply every encoder in order; returns the top representation.
    pub fn encode_stack(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = encode(&self.layers[0], x)?;
        for layer in &self.layers[1..] {
            cur = encode(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Apply the decoders in reverse layer order, mapping a top
    /// representation back to input space.
    pub fn decode_stack(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = h.clone();
        for layer in self.layers.iter().rev() {
            cur = decode(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Every intermediate representation `[h_1, ..., h_j]`.
    fn forward(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut hs = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            hs.push(encode(layer, cur)?);
            cur = hs.last().expect("just pushed");
        }
        Ok(hs)
    }
}

/// A trained stack together with its construction record.
#[derive(Debug, Clone)]
pub struct TrainedStack {
    pub model: GaeModel,
    pub configs: Vec<TrainConfig>,
    pub graph_spec: Option<GraphSpec>,
    /// One optimizer trace per layer, in training order.
    pub traces: Vec<Minimized>,
}

fn layer_needs_graph(kind: ObjectiveKind, config: &TrainConfig) -> bool {
    match kind {
        ObjectiveKind::Gae => config.lambda > 0.0,
        ObjectiveKind::GraphOnly => true,
        _ => false,
    }
}

/// Greedy layer-wise training: layer i is fit on `H_{i-1}` (with `H_0 = X`)
/// against a graph rebuilt from `H_{i-1}` by `graph_spec`.
pub fn train_stack(
    ds: &DataSet,
    graph_spec: Option<&GraphSpec>,
    dims: &[usize],
    configs: &[TrainConfig],
    kind: ObjectiveKind,
) -> Result<TrainedStack> {
    if dims.is_empty() {
        return Err(Error::InvalidArg("dims must be non-empty".into()));
    }
    if configs.len() != dims.len() {
        return Err(Error::Config(format!(
            "{} layer dims but {} training configs",
            dims.len(),
            configs.len()
        )));
    }
    if graph_spec.is_none() && configs.iter().any(|c| layer_needs_graph(kind, c)) {
        return Err(Error::Config(
            "objective uses a graph term but no graph recipe was given".into(),
        ));
    }

    let mut current = ds.x().clone();
    let mut layers = Vec::with_capacity(dims.len());
    let mut traces = Vec::with_capacity(dims.len());
    for (i, (&dim, config)) in dims.iter().zip(configs).enumerate() {
        let graph = if layer_needs_graph(kind, config) {
            let spec = graph_spec.expect("checked above");
            let layer_input = DataSet::from_scaled(
                current.clone(),
                ds.labels().map(|ls| ls.to_vec()),
                format!("{}-layer{}", ds.name(), i),
            )?;
            Some(spec.build(&layer_input)?)
        } else {
            None
        };
        let trained = train_layer(
            &current,
            graph.as_ref().map(|g| g.regularizer()),
            config,
            dim,
            kind,
        )?;
        current = encode(&trained.params, &current)?;
        layers.push(trained.params);
        traces.push(trained.result);
    }
    Ok(TrainedStack {
        model: GaeModel::new(layers)?,
        configs: configs.to_vec(),
        graph_spec: graph_spec.cloned(),
        traces,
    })
}

/// Combined whole-stack objective
/// `||X - decode_stack(encode_stack(X))||^2 + lambda tr(H_j G H_j^T)`.
pub fn stack_objective(
    model: &GaeModel,
    x: &Array2<f64>,
    g: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<f64> {
    check_stack_graph(model, x, g, lambda)?;
    let hs = model.forward(x)?;
    let top = hs.last().expect("nonempty");
    let xhat = model.decode_stack(top)?;
    let mut obj = x
        .iter()
        .zip(xhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    if let Some(g) = g {
        obj += lambda * trace_penalty(top, g);
    }
    Ok(obj)
}

/// Exact gradient of [`stack_objective`] with respect to every parameter of
/// every layer, in layer order.
pub fn stack_gradient(
    model: &GaeModel,
    x: &Array2<f64>,
    g: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<Vec<LayerParams>> {
    check_stack_graph(model, x, g, lambda)?;
    Ok(eval_full(model, x, g.map(|g| (g, lambda))).1)
}

fn check_stack_graph(
    model: &GaeModel,
    x: &Array2<f64>,
    g: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<()> {
    if x.nrows() != model.input_dim() {
        return Err(Error::Dim(format!(
            "input has {} rows but the model expects {}",
            x.nrows(),
            model.input_dim()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArg("lambda must be nonnegative".into()));
    }
    if lambda > 0.0 && g.is_none() {
        return Err(Error::InvalidArg(
            "lambda > 0 requires a regularizer matrix".into(),
        ));
    }
    if let Some(g) = g {
        if g.dim() != (x.ncols(), x.ncols()) {
            return Err(Error::Dim(format!(
                "regularizer matrix is {:?} but there are {} samples",
                g.dim(),
                x.ncols()
            )));
        }
    }
    Ok(())
}

/// Forward/backward pass of the combined objective. Returns the objective
/// and per-layer parameter gradients.
fn eval_full(
    model: &GaeModel,
    x: &Array2<f64>,
    graph: Option<(&Array2<f64>, f64)>,
) -> (f64, Vec<LayerParams>) {
    let j = model.layers.len();
    let hs = model.forward(x).expect("dims validated");
    // us[i] is the decode-chain value at depth i; us[j] = H_j, us[0] = X-hat
    let mut us = vec![Array2::zeros((0, 0)); j + 1];
    us[j] = hs[j - 1].clone();
    for i in (1..=j).rev() {
        us[i - 1] = decode(&model.layers[i - 1], &us[i]).expect("dims validated");
    }
    let mut objective = x
        .iter()
        .zip(us[0].iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();

    let mut grads: Vec<LayerParams> = model
        .layers
        .iter()
        .map(|l| LayerParams::zeros(l.input_dim(), l.hidden_dim()))
        .collect();

    // decoder chain: delta at the pre-activation of layer i's decoder
    let mut delta = {
        let mut d = us[0].clone();
        ndarray::Zip::from(&mut d).and(x).and(&us[0]).for_each(|dv, &xv, &uv| {
            *dv = -2.0 * (xv - uv) * uv * (1.0 - uv);
        });
        d
    };
    let mut d_top = Array2::zeros(hs[j - 1].raw_dim());
    for i in 1..=j {
        grads[i - 1].w_q = delta.dot(&us[i].t());
        grads[i - 1].b_q = delta.sum_axis(Axis(1));
        let upstream = model.layers[i - 1].w_q.t().dot(&delta);
        if i < j {
            delta = upstream;
            ndarray::Zip::from(&mut delta).and(&us[i]).for_each(|dv, &uv| {
                *dv *= uv * (1.0 - uv);
            });
        } else {
            d_top = upstream;
        }
    }

    if let Some((g, lambda)) = graph {
        let top = &hs[j - 1];
        objective += lambda * trace_penalty(top, g);
        let gsym = g + &g.t();
        d_top += &(top.dot(&gsym) * lambda);
    }

    backprop_encoders(model, x, &hs, d_top, &mut grads);
    (objective, grads)
}

/// Encoder-only objective `lambda tr(H_j G H_j^T)` and its gradient with
/// respect to the encoder halves; decoder gradients are zero.
fn eval_graph_only(
    model: &GaeModel,
    x: &Array2<f64>,
    g: &Array2<f64>,
    lambda: f64,
) -> (f64, Vec<LayerParams>) {
    let hs = model.forward(x).expect("dims validated");
    let top = hs.last().expect("nonempty");
    let objective = lambda * trace_penalty(top, g);
    let gsym = g + &g.t();
    let d_top = top.dot(&gsym) * lambda;
    let mut grads: Vec<LayerParams> = model
        .layers
        .iter()
        .map(|l| LayerParams::zeros(l.input_dim(), l.hidden_dim()))
        .collect();
    backprop_encoders(model, x, &hs, d_top, &mut grads);
    (objective, grads)
}

/// Chain `d objective / d H_j` down through every encoder, accumulating
/// `w_h`/`b_h` gradients.
fn backprop_encoders(
    model: &GaeModel,
    x: &Array2<f64>,
    hs: &[Array2<f64>],
    d_top: Array2<f64>,
    grads: &mut [LayerParams],
) {
    let j = model.layers.len();
    let mut d = d_top;
    for i in (0..j).rev() {
        ndarray::Zip::from(&mut d).and(&hs[i]).for_each(|dv, &hv| {
            *dv *= hv * (1.0 - hv);
        });
        let input = if i == 0 { x } else { &hs[i - 1] };
        grads[i].w_h = d.dot(&input.t());
        grads[i].b_h = d.sum_axis(Axis(1));
        if i > 0 {
            d = model.layers[i].w_h.t().dot(&d);
        }
    }
}

/// A fine-tuned stack with the optimizer trace of the joint pass.
#[derive(Debug, Clone)]
pub struct FinetunedStack {
    pub model: GaeModel,
    pub result: Minimized,
}

/// Jointly refit all encoder parameters to minimize the graph penalty
/// `lambda tr(H_j G H_j^T)` through the whole stack; decoders are untouched.
pub fn finetune_graph_only(
    model: &GaeModel,
    ds: &DataSet,
    graph: &AffinityGraph,
    config: &TrainConfig,
) -> Result<FinetunedStack> {
    config.validate()?;
    if config.lambda <= 0.0 {
        return Err(Error::InvalidArg(
            "graph-only fine-tuning requires lambda > 0".into(),
        ));
    }
    let x = ds.x();
    check_stack_graph(model, x, Some(graph.regularizer()), config.lambda)?;
    let g = graph.regularizer();
    let lambda = config.lambda;

    let mut x0 = Vec::new();
    for layer in &model.layers {
        x0.extend(layer.w_h.iter());
        x0.extend(layer.b_h.iter());
    }
    let template = model.clone();
    let objective = |flat: &[f64], grad_out: &mut [f64]| -> f64 {
        let candidate = unpack_encoders(&template, flat);
        let (obj, grads) = eval_graph_only(&candidate, x, g, lambda);
        let mut cursor = 0;
        for grad in &grads {
            for v in grad.w_h.iter().chain(grad.b_h.iter()) {
                grad_out[cursor] = *v;
                cursor += 1;
            }
        }
        obj
    };
    let result = optimizer::minimize(objective, x0, &lbfgs_of(config))?;
    let model = unpack_encoders(&template, &result.x);
    Ok(FinetunedStack { model, result })
}

/// Jointly refit every parameter of every layer against the combined
/// objective `||X - decode_stack(encode_stack(X))||^2 + lambda tr(H_j G
/// H_j^T)`. `graph` is required exactly when `lambda > 0`.
pub fn finetune_full(
    model: &GaeModel,
    ds: &DataSet,
    graph: Option<&AffinityGraph>,
    config: &TrainConfig,
) -> Result<FinetunedStack> {
    config.validate()?;
    let x = ds.x();
    let g = graph.map(|gr| gr.regularizer());
    check_stack_graph(model, x, g, config.lambda)?;
    if config.lambda == 0.0 && g.is_some() {
        return Err(Error::InvalidArg(
            "lambda = 0 does not take a regularizer matrix".into(),
        ));
    }
    let graph_term = g.map(|g| (g, config.lambda));

    let mut x0 = Vec::new();
    for layer in &model.layers {
        layer.flatten_into(&mut x0);
    }
    let template = model.clone();
    let objective = |flat: &[f64], grad_out: &mut [f64]| -> f64 {
        let candidate = unpack_all(&template, flat);
        let (obj, grads) = eval_full(&candidate, x, graph_term);
        let mut cursor = 0;
        for grad in &grads {
            let flatg = grad.flatten();
            grad_out[cursor..cursor + flatg.len()].copy_from_slice(&flatg);
            cursor += flatg.len();
        }
        obj
    };
    let result = optimizer::minimize(objective, x0, &lbfgs_of(config))?;
    let model = unpack_all(&template, &result.x);
    Ok(FinetunedStack { model, result })
}

fn lbfgs_of(config: &TrainConfig) -> LbfgsSettings {
    LbfgsSettings {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        history_size: config.history_size,
    }
}

/// Rebuild a model from `template` with encoder halves replaced by `flat`.
fn unpack_encoders(template: &GaeModel, flat: &[f64]) -> GaeModel {
    let mut layers = Vec::with_capacity(template.layers.len());
    let mut rest = flat;
    for layer in &template.layers {
        let (m, l) = (layer.input_dim(), layer.hidden_dim());
        let (wh, r) = rest.split_at(l * m);
        let (bh, r) = r.split_at(l);
        rest = r;
        layers.push(LayerParams {
            w_h: Array2::from_shape_vec((l, m), wh.to_vec()).expect("shape"),
            b_h: ndarray::Array1::from_vec(bh.to_vec()),
            w_q: layer.w_q.clone(),
            b_q: layer.b_q.clone(),
        });
    }
    debug_assert!(rest.is_empty());
    GaeModel { layers }
}

fn unpack_all(template: &GaeModel, flat: &[f64]) -> GaeModel {
    let mut layers = Vec::with_capacity(template.layers.len());
    let mut rest = flat;
    for layer in &template.layers {
        let (params, r) = LayerParams::from_flat(layer.input_dim(), layer.hidden_dim(), rest);
        rest = r;
        layers.push(params);
    }
    debug_assert!(rest.is_empty());
    GaeModel { layers }
}

// ---------------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"GAEM";
const FORMAT_VERSION: u16 = 1;

impl GaeModel {
    /// Self-describing binary container: magic, version, layer count, then
    /// per layer the two dimensions and the four row-major parameter arrays
    /// as little-endian f64. Round-trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.hidden_dim() as u32).to_le_bytes());
            for v in layer
                .w_h
                .iter()
                .chain(layer.b_h.iter())
                .chain(layer.w_q.iter())
                .chain(layer.b_q.iter())
            {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("model container: {msg}"));
        let mut rest = bytes;
        let mut take = |k: usize| -> Result<&[u8]> {
            if rest.len() < k {
                return Err(bad("truncated"));
            }
            let (head, tail) = rest.split_at(k);
            rest = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let m = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let l = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let total = LayerParams::param_count(m, l);
            let floats = take(total * 8)?;
            let flat: Vec<f64> = floats
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let (params, extra) = LayerParams::from_flat(m, l, &flat);
            debug_assert!(extra.is_empty());
            layers.push(params);
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        GaeModel::new(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
