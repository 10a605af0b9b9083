//! Config-driven experiment runs behind the command-line interface.
//!
//! Every file-producing run resolves its configuration, derives all
//! randomness from the master seed through named substreams, and writes a
//! manifest capturing the resolved config and tool version; re-running from
//! the manifest reproduces the outputs byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::autoencoder::{ObjectiveKind, TrainConfig};
use crate::dataset::{load_dataset, make_blobs, DataFormat, DataSet};
use crate::error::{Error, Result};
use crate::eval::{reports_to_csv, run_experiment, ExperimentReport, HyperGrid, Method, Protocol};
use crate::graph::{graph_error_rate, GraphSpec};
use crate::seed::substream_seed;
use crate::stack::{train_stack, GaeModel};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where the input samples come from: a file in one of the supported
/// formats, or synthesized Gaussian blobs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<BlobSpec>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
}

impl DatasetSpec {
    pub fn load(&self, master_seed: u64) -> Result<DataSet> {
        match (&self.path, &self.format, &self.synthetic) {
            (Some(path), Some(format), None) => load_dataset(path, format),
            (None, None, Some(blob)) => make_blobs(
                blob.classes,
                blob.per_class,
                blob.dim,
                blob.spread,
                substream_seed(master_seed, "dataset"),
            ),
            _ => Err(Error::Config(
                "dataset must give either path+format or synthetic".into(),
            )),
        }
    }
}

/// Optimizer and penalty settings shared by the layers of a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lambda: f64,
    /// Overrides `lambda` layer by layer when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_per_layer: Option<Vec<f64>>,
    pub eta: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub history_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainSettings {
            lambda: base.lambda,
            lambda_per_layer: None,
            eta: base.eta,
            rho: base.rho,
            max_iter: base.max_iter,
            grad_tol: base.grad_tol,
            history_size: base.history_size,
        }
    }
}

impl TrainSettings {
    /// Per-layer training configs, with layer init seeds drawn from the
    /// master seed.
    fn layer_configs(&self, layer_count: usize, master_seed: u64) -> Result<Vec<TrainConfig>> {
        let lambdas: Vec<f64> = match &self.lambda_per_layer {
            Some(ls) => {
                if ls.len() != layer_count {
                    return Err(Error::Config(format!(
                        "lambda_per_layer has {} entries for {layer_count} layers",
                        ls.len()
                    )));
                }
                ls.clone()
            }
            None => vec![self.lambda; layer_count],
        };
        let configs: Vec<TrainConfig> = lambdas
            .into_iter()
            .enumerate()
            .map(|(i, lambda)| TrainConfig {
                lambda,
                eta: self.eta,
                rho: self.rho,
                max_iter: self.max_iter,
                grad_tol: self.grad_tol,
                history_size: self.history_size,
                seed: substream_seed(master_seed, &format!("init/layer{i}")),
            })
            .collect();
        for c in &configs {
            c.validate()?;
        }
        Ok(configs)
    }
}

/// The complete resolved configuration of a run. `train`-specific and
/// `benchmark`-specific sections are validated by the command that uses
/// them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Objective of a training run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveKind>,
    /// Graph recipe for training or the `graph` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    /// Layer widths, ending in the representation dimension.
    #[serde(default)]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub train: TrainSettings,
    /// Methods compared by `benchmark`.
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default)]
    pub grid: HyperGrid,
    pub output_dir: PathBuf,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: RunConfig,
}

/// Read a run configuration from either a bare `RunConfig` JSON file or a
/// manifest written by a previous run.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        return Ok(manifest.config);
    }
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_manifest(command: &str, config: &RunConfig) -> Result<PathBuf> {
    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        master_seed: config.seed,
        config: config.clone(),
    };
    let path = config.output_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn ensure_output_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))
}

pub struct TrainOutputs {
    pub model_path: PathBuf,
    pub log_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub final_objectives: Vec<f64>,
}

/// Train a (possibly multi-layer) model per the config; writes the model
/// container, one `iter,objective,grad_norm` log per layer, and the
/// manifest.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutputs> {
    let kind = config
        .objective
        .ok_or_else(|| Error::Config("training needs an objective".into()))?;
    if config.dims.is_empty() {
        return Err(Error::Config("training needs non-empty dims".into()));
    }
    let ds = config.dataset.load(config.seed)?;
    let configs = config.train.layer_configs(config.dims.len(), config.seed)?;
    let trained = train_stack(&ds, config.graph.as_ref(), &config.dims, &configs, kind)?;

    ensure_output_dir(config)?;
    let model_path = config.output_dir.join("model.gae");
    trained.model.save(&model_path)?;

    let mut log_paths = Vec::new();
    for (i, trace) in trained.traces.iter().enumerate() {
        let mut body = String::from("iter,objective,grad_norm\n");
        for rec in &trace.trace {
            writeln!(body, "{},{},{}", rec.iter, rec.objective, rec.grad_norm).unwrap();
        }
        let path = config.output_dir.join(format!("train_log_layer{}.csv", i + 1));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        log_paths.push(path);
    }
    let manifest_path = write_manifest("train", config)?;
    Ok(TrainOutputs {
        model_path,
        log_paths,
        manifest_path,
        final_objectives: trained.traces.iter().map(|t| t.objective).collect(),
    })
}

pub struct BenchmarkOutputs {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub manifest_path: PathBuf,
    pub reports: Vec<ExperimentReport>,
}

/// Run the evaluation protocol for every configured method; writes the
/// comparison CSV, the JSON provenance report, and the manifest.
pub fn cmd_benchmark(config: &RunConfig) -> Result<BenchmarkOutputs> {
    if config.methods.is_empty() {
        return Err(Error::Config("benchmark needs at least one method".into()));
    }
    let protocol = config
        .protocol
        .as_ref()
        .ok_or_else(|| Error::Config("benchmark needs a protocol".into()))?;
    let ds = config.dataset.load(config.seed)?;
    let reports: Vec<ExperimentReport> = config
        .methods
        .iter()
        .map(|&m| run_experiment(&ds, m, protocol, &config.grid, config.seed))
        .collect::<Result<_>>()?;

    ensure_output_dir(config)?;
    let csv_path = config.output_dir.join("benchmark.csv");
    fs::write(&csv_path, reports_to_csv(&reports)).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = config.output_dir.join("benchmark.json");
    let body = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(&json_path, body + "\n").map_err(|e| Error::io(&json_path, e))?;
    let manifest_path = write_manifest("benchmark", config)?;
    Ok(BenchmarkOutputs {
        csv_path,
        json_path,
        manifest_path,
        reports,
    })
}

pub struct GraphOutputs {
    pub edges_path: PathBuf,
    pub manifest_path: PathBuf,
    pub edge_count: usize,
    /// Present when every sample is labeled.
    pub error_rate: Option<f64>,
}

/// Build the configured affinity graph, export it as an edge list, and
/// report its label error rate when ground truth is available.
pub fn cmd_graph(config: &RunConfig) -> Result<GraphOutputs> {
    let spec = config
        .graph
        .as_ref()
        .ok_or_else(|| Error::Config("the graph command needs a graph spec".into()))?;
    let ds = config.dataset.load(config.seed)?;
    let graph = spec.build(&ds)?;
    ensure_output_dir(config)?;
    let edges_path = config.output_dir.join("graph.edges");
    graph.write_edge_list(&edges_path)?;
    let error_rate = match ds.complete_labels() {
        Some(labels) => Some(graph_error_rate(&graph, &labels)?),
        None => None,
    };
    let manifest_path = write_manifest("graph", config)?;
    Ok(GraphOutputs {
        edges_path,
        manifest_path,
        edge_count: graph.edge_count(),
        error_rate,
    })
}

/// Manifest of an encode run (path-driven, no RunConfig).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EncodeManifest {
    pub tool_version: String,
    pub command: String,
    pub model: PathBuf,
    pub data: PathBuf,
    pub format: DataFormat,
    pub out: PathBuf,
}

/// Encode a dataset through a saved model and write the representation as
/// CSV, one sample per row. A manifest lands next to the output.
pub fn cmd_encode(
    model_path: &Path,
    data_path: &Path,
    format: &DataFormat,
    out_path: &Path,
) -> Result<PathBuf> {
    let model = GaeModel::load(model_path)?;
    let ds = load_dataset(data_path, format)?;
    if ds.dim() != model.input_dim() {
        return Err(Error::Dim(format!(
            "data has {} features but the model expects {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    let h = model.encode_stack(ds.x())?;
    let mut body = String::new();
    for j in 0..h.ncols() {
        for (i, v) in h.column(j).iter().enumerate() {
            if i > 0 {
                body.push(',');
            }
            write!(body, "{v}").unwrap();
        }
        body.push('\n');
    }
    fs::write(out_path, body).map_err(|e| Error::io(out_path, e))?;

    let manifest = EncodeManifest {
        tool_version: TOOL_VERSION.to_string(),
        command: "encode".to_string(),
        model: model_path.to_path_buf(),
        data: data_path.to_path_buf(),
        format: format.clone(),
        out: out_path.to_path_buf(),
    };
    let manifest_path = out_path.with_extension("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Rerun an encode from its manifest.
pub fn cmd_encode_from_manifest(path: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: EncodeManifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cmd_encode(&m.model, &m.data, &m.format, &m.out)
}

/// Read a one-label-per-line (or single-column CSV) label file.
pub fn read_label_csv(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let value: i64 = cell.parse().map_err(|_| {
            Error::Parse(format!(
                "{}: line {}: labels must be integers, got {cell:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        if value < 0 {
            return Err(Error::Parse(format!(
                "{}: line {}: labels must be nonnegative",
                path.display(),
                lineno + 1
            )));
        }
        labels.push(value as usize);
    }
    if labels.is_empty() {
        return Err(Error::Parse(format!("{}: no labels", path.display())));
    }
    Ok(labels)
}

/// Accuracy and normalized mutual information between two label files.
pub fn cmd_metrics(truth_path: &Path, predicted_path: &Path) -> Result<(f64, f64)> {
    let truth = read_label_csv(truth_path)?;
    let predicted = read_label_csv(predicted_path)?;
    let ac = crate::eval::accuracy(&predicted, &truth)?;
    let mi = crate::eval::normalized_mutual_information(&predicted, &truth)?;
    Ok((ac, mi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_config(dir: &Path) -> RunConfig {
        RunConfig {
            seed: 42,
            dataset: DatasetSpec {
                path: None,
                format: None,
                synthetic: Some(BlobSpec {
                    classes: 3,
                    per_class: 8,
                    dim: 5,
                    spread: 0.25,
                }),
            },
            objective: Some(ObjectiveKind::Gae),
            graph: Some(GraphSpec::Knn { k: 4 }),
            dims: vec![3],
            train: TrainSettings {
                lambda: 0.1,
                max_iter: 40,
                ..TrainSettings::default()
            },
            methods: vec![],
            protocol: None,
            grid: HyperGrid::default(),
            output_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn train_writes_model_log_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let config = blob_config(dir.path());
        let out = cmd_train(&config).unwrap();
        assert!(out.model_path.exists());
        assert_eq!(out.log_paths.len(), 1);
        assert!(out.manifest_path.exists());
        let log = fs::read_to_string(&out.log_paths[0]).unwrap();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some("iter,objective,grad_norm"));
        // objective column is non-increasing
        let objectives: Vec<f64> = lines
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(objectives.len() > 1);
        for w in objectives.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn train_rerun_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let out_a = cmd_train(&blob_config(dir_a.path())).unwrap();
        // rerun from the manifest into a fresh directory
        let mut config = load_config(&out_a.manifest_path).unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        config.output_dir = dir_b.path().to_path_buf();
        let out_b = cmd_train(&config).unwrap();
        assert_eq!(
            fs::read(&out_a.model_path).unwrap(),
            fs::read(&out_b.model_path).unwrap()
        );
        assert_eq!(
            fs::read(&out_a.log_paths[0]).unwrap(),
            fs::read(&out_b.log_paths[0]).unwrap()
        );
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_dataset() {
        let bad = r#"{"seed": 1, "dataset": {}, "output_dir": "x", "bogus": true}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let empty_ds = RunConfig {
            dataset: DatasetSpec {
                path: None,
                format: None,
                synthetic: None,
            },
            ..blob_config(Path::new("unused"))
        };
        assert!(empty_ds.dataset.load(0).is_err());
    }

    #[test]
    fn graph_command_reports_error_rate() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = blob_config(dir.path());
        config.dataset.synthetic = Some(BlobSpec {
            classes: 3,
            per_class: 10,
            dim: 4,
            spread: 0.02,
        });
        let out = cmd_graph(&config).unwrap();
        assert!(out.edges_path.exists());
        assert!(out.edge_count > 0);
        // tight blobs give a clean graph
        assert_eq!(out.error_rate, Some(0.0));
        let parsed = crate::graph::AffinityGraph::read_edge_list(&out.edges_path).unwrap();
        assert_eq!(parsed.edge_count(), out.edge_count);
    }

    #[test]
    fn encode_roundtrips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let config = blob_config(dir.path());
        let trained = cmd_train(&config).unwrap();

        // write the same blobs to CSV and encode via the command
        let ds = config.dataset.load(config.seed).unwrap();
        let data_path = dir.path().join("data.csv");
        let mut body = String::new();
        for j in 0..ds.n() {
            let row: Vec<String> = ds.x().column(j).iter().map(|v| v.to_string()).collect();
            body.push_str(&row.join(","));
            body.push('\n');
        }
        fs::write(&data_path, body).unwrap();

        let out_path = dir.path().join("h.csv");
        let manifest = cmd_encode(
            &trained.model_path,
            &data_path,
            &DataFormat::Csv { labeled: false },
            &out_path,
        )
        .unwrap();

        let model = GaeModel::load(&trained.model_path).unwrap();
        let expected = model.encode_stack(ds.x()).unwrap();
        let text = fs::read_to_string(&out_path).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), ds.n());
        for (j, row) in rows.iter().enumerate() {
            for (i, cell) in row.split(',').enumerate() {
                let v: f64 = cell.parse().unwrap();
                assert_eq!(v, expected[[i, j]], "exact shortest-roundtrip floats");
            }
        }
        // rerun from the encode manifest reproduces the file
        let before = fs::read(&out_path).unwrap();
        cmd_encode_from_manifest(&manifest).unwrap();
        assert_eq!(before, fs::read(&out_path).unwrap());
    }

    #[test]
    fn metrics_reads_label_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.csv");
        let p = dir.path().join("p.csv");
        fs::write(&t, "0\n0\n1\n1\n").unwrap();
        fs::write(&p, "1\n1\n0\n0\n").unwrap();
        let (ac, mi) = cmd_metrics(&t, &p).unwrap();
        assert_eq!(ac, 1.0);
        assert_eq!(mi, 1.0);
        fs::write(&p, "0\n1\n0\n1\n").unwrap();
        let (ac, mi) = cmd_metrics(&t, &p).unwrap();
        assert_eq!(ac, 0.5);
        assert_eq!(mi, 0.0);
    }
}
