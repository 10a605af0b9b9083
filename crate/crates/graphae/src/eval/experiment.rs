//! The randomized evaluation protocol: draw class subsets, learn a
//! representation whose dimension equals the class count, cluster with
//! k-means, and score accuracy and normalized mutual information; repeat and
//! average. Hyperparameters are grid-searched on mean accuracy.

use ndarray::Array2;
use rayon::prelude::*;

use crate::autoencoder::{ObjectiveKind, TrainConfig};
use crate::dataset::{chosen_class_subset, mask_labels, subsample_classes, DataSet};
use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::seed::substream_seed;
use crate::stack::train_stack;

use super::kmeans::kmeans;
use super::metrics::{accuracy, normalized_mutual_information};
use super::pca::pca_reduce;

/// Representation-learning methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Graph-regularized auto-encoder over a KNN graph.
    Gae,
    /// Semi-supervised variant over the label-aware graph.
    Sgae,
    /// Sparse auto-encoder.
    Sae,
    /// Auto-encoder without penalties.
    PlainAe,
    Pca,
    /// k-means directly on the input features.
    KmeansRaw,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Gae => "GAE",
            Method::Sgae => "SGAE",
            Method::Sae => "SAE",
            Method::PlainAe => "PlainAE",
            Method::Pca => "PCA",
            Method::KmeansRaw => "Kmeans",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Hyperparameter grid; which axes apply depends on the method.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub etas: Vec<f64>,
    pub rhos: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lambdas: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            ks: vec![3, 5, 7, 10],
            etas: vec![1e-3, 1e-2, 1e-1],
            rhos: vec![0.05, 0.1, 0.2],
        }
    }
}

/// Protocol settings: which subset sizes, how many random repeats, and the
/// training/clustering budgets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Protocol {
    pub class_subset_sizes: Vec<usize>,
    pub repeats: usize,
    /// Required for the semi-supervised method.
    #[serde(default)]
    pub labeled_fraction: Option<f64>,
    /// Extra encoder layers ahead of the final representation layer.
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_restarts() -> usize {
    10
}

fn default_max_iter() -> usize {
    200
}

/// One hyperparameter combination; unused axes stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HyperChoice {
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub eta: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub subset_seed: u64,
    /// Original class ids drawn for this repeat.
    pub class_subset: Vec<usize>,
    pub ac: f64,
    pub mi: f64,
}

/// Results for one class-subset size: the winning grid cell and its
/// per-repeat scores.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubsetReport {
    pub subset_size: usize,
    pub hyperparams: HyperChoice,
    pub repeats: Vec<RepeatRecord>,
    pub mean_ac: f64,
    pub mean_mi: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub dataset: String,
    pub master_seed: u64,
    pub cells: Vec<SubsetReport>,
    pub average_ac: f64,
    pub average_mi: f64,
}

fn grid_cells(method: Method, grid: &HyperGrid) -> Vec<HyperChoice> {
    match method {
        Method::KmeansRaw | Method::Pca | Method::PlainAe => vec![HyperChoice::default()],
        Method::Sae => {
            let mut cells = Vec::new();
            for &eta in &grid.etas {
                for &rho in &grid.rhos {
                    cells.push(HyperChoice {
                        eta: Some(eta),
                        rho: Some(rho),
                        ..HyperChoice::default()
                    });
                }
            }
            cells
        }
        Method::Gae | Method::Sgae => {
            let mut cells = Vec::new();
            for &lambda in &grid.lambdas {
                for &k in &grid.ks {
                    cells.push(HyperChoice {
                        lambda: Some(lambda),
                        k: Some(k),
                        ..HyperChoice::default()
                    });
                }
            }
            cells
        }
    }
}

/// Learn the representation a method feeds to k-means. The dimension is the
/// class count of `trainset`; `evalset` differs from `trainset` only for the
/// semi-supervised method (masked vs full labels).
fn representation(
    method: Method,
    trainset: &DataSet,
    cell: &HyperChoice,
    protocol: &Protocol,
    init_seeds: &[u64],
) -> Result<Array2<f64>> {
    let rep_dim = trainset
        .class_count()
        .ok_or_else(|| Error::InvalidArg("protocol requires labeled data".into()))?;
    match method {
        Method::KmeansRaw => Ok(trainset.x().clone()),
        Method::Pca => pca_reduce(trainset.x(), rep_dim),
        Method::PlainAe | Method::Sae | Method::Gae | Method::Sgae => {
            let mut dims = protocol.hidden_dims.clone();
            dims.push(rep_dim);
            let configs: Vec<TrainConfig> = (0..dims.len())
                .map(|i| TrainConfig {
                    lambda: cell.lambda.unwrap_or(0.0),
                    eta: cell.eta.unwrap_or(0.0),
                    rho: cell.rho.unwrap_or(0.1),
                    max_iter: protocol.max_iter,
                    seed: init_seeds[i],
                    ..TrainConfig::default()
                })
                .collect();
            let (kind, spec) = match method {
                Method::PlainAe => (ObjectiveKind::Plain, None),
                Method::Sae => (ObjectiveKind::Sae, None),
                Method::Gae => (
                    ObjectiveKind::Gae,
                    Some(GraphSpec::Knn { k: cell.k.expect("gae cell has k") }),
                ),
                Method::Sgae => (
                    ObjectiveKind::Gae,
                    Some(GraphSpec::Semi { k: cell.k.expect("sgae cell has k") }),
                ),
                _ => unreachable!(),
            };
            let stack = train_stack(trainset, spec.as_ref(), &dims, &configs, kind)?;
            stack.model.encode_stack(trainset.x())
        }
    }
}

/// Run the full protocol for one method. All randomness derives from
/// `master_seed` through named substreams shared across methods, so method
/// comparisons are paired repeat by repeat.
pub fn run_experiment(
    ds: &DataSet,
    method: Method,
    protocol: &Protocol,
    grid: &HyperGrid,
    master_seed: u64,
) -> Result<ExperimentReport> {
    let class_count = ds
        .class_count()
        .ok_or_else(|| Error::InvalidArg("protocol requires labeled data".into()))?;
    if protocol.repeats == 0 || protocol.class_subset_sizes.is_empty() {
        return Err(Error::Config(
            "protocol needs at least one repeat and one subset size".into(),
        ));
    }
    if protocol.class_subset_sizes.iter().any(|&s| s == 0 || s > class_count) {
        return Err(Error::Config(format!(
            "subset sizes must lie in 1..={class_count}"
        )));
    }
    if method == Method::Sgae && protocol.labeled_fraction.is_none() {
        return Err(Error::Config(
            "the semi-supervised method needs labeled_fraction".into(),
        ));
    }

    let cells = grid_cells(method, grid);
    let mut reports = Vec::with_capacity(protocol.class_subset_sizes.len());
    for &size in &protocol.class_subset_sizes {
        // one drawn subset per repeat, shared by every method and grid cell
        let repeats: Vec<(u64, DataSet, DataSet, Vec<usize>)> = (0..protocol.repeats)
            .map(|r| -> Result<_> {
                let subset_seed = substream_seed(master_seed, &format!("protocol/{size}/{r}"));
                let sub = subsample_classes(ds, size, subset_seed)?;
                let chosen = chosen_class_subset(class_count, size, subset_seed);
                let trainset = if method == Method::Sgae {
                    let frac = protocol.labeled_fraction.expect("checked above");
                    mask_labels(&sub, frac, substream_seed(master_seed, &format!("mask/{size}/{r}")))?
                } else {
                    sub.clone()
                };
                Ok((subset_seed, sub, trainset, chosen))
            })
            .collect::<Result<_>>()?;

        let depth = protocol.hidden_dims.len() + 1;
        let jobs: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|c| (0..protocol.repeats).map(move |r| (c, r)))
            .collect();
        let scores: Vec<Result<(f64, f64)>> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let (_, sub, trainset, _) = &repeats[r];
                let init_seeds: Vec<u64> = (0..depth)
                    .map(|i| substream_seed(master_seed, &format!("init/{size}/{r}/{i}")))
                    .collect();
                let h = representation(method, trainset, &cells[c], protocol, &init_seeds)?;
                let clusters = kmeans(
                    &h,
                    size,
                    protocol.kmeans_restarts,
                    substream_seed(master_seed, &format!("kmeans/{size}/{r}")),
                )?;
                let truth = sub.complete_labels().expect("subsample keeps labels");
                let ac = accuracy(&clusters.assignments, &truth)?;
                let mi = normalized_mutual_information(&clusters.assignments, &truth)?;
                Ok((ac, mi))
            })
            .collect();

        // grid selection: best mean accuracy, first cell on ties
        let mut best: Option<(usize, f64)> = None;
        for c in 0..cells.len() {
            let mut mean_ac = 0.0;
            for r in 0..protocol.repeats {
                let (ac, _) = scores[c * protocol.repeats + r].as_ref().map_err(clone_err)?;
                mean_ac += ac;
            }
            mean_ac /= protocol.repeats as f64;
            if best.is_none_or(|(_, b)| mean_ac > b) {
                best = Some((c, mean_ac));
            }
        }
        let (best_cell, mean_ac) = best.expect("at least one cell");

        let mut records = Vec::with_capacity(protocol.repeats);
        let mut mean_mi = 0.0;
        for r in 0..protocol.repeats {
            let (ac, mi) = scores[best_cell * protocol.repeats + r]
                .as_ref()
                .map_err(clone_err)?;
            mean_mi += mi;
            let (subset_seed, _, _, chosen) = &repeats[r];
            records.push(RepeatRecord {
                repeat: r,
                subset_seed: *subset_seed,
                class_subset: chosen.clone(),
                ac: *ac,
                mi: *mi,
            });
        }
        mean_mi /= protocol.repeats as f64;
        reports.push(SubsetReport {
            subset_size: size,
            hyperparams: cells[best_cell],
            repeats: records,
            mean_ac,
            mean_mi,
        });
    }

    let count = reports.len() as f64;
    let average_ac = reports.iter().map(|c| c.mean_ac).sum::<f64>() / count;
    let average_mi = reports.iter().map(|c| c.mean_mi).sum::<f64>() / count;
    Ok(ExperimentReport {
        method,
        dataset: ds.name().to_string(),
        master_seed,
        cells: reports,
        average_ac,
        average_mi,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::Numerical(format!("experiment cell failed: {e}"))
}

/// Comparison table mirroring the usual layout: one `<METHOD> MI` and one
/// `<METHOD> AC` row per report, class-subset sizes as columns, then the
/// overall average.
pub fn reports_to_csv(reports: &[ExperimentReport]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    let sizes: Vec<usize> = reports[0].cells.iter().map(|c| c.subset_size).collect();
    out.push_str("Class");
    for s in &sizes {
        write!(out, ",{s}").unwrap();
    }
    out.push_str(",Average\n");
    for metric in ["MI", "AC"] {
        for report in reports {
            write!(out, "{} {metric}", report.method.label()).unwrap();
            for cell in &report.cells {
                let v = if metric == "MI" { cell.mean_mi } else { cell.mean_ac };
                write!(out, ",{v:.4}").unwrap();
            }
            let avg = if metric == "MI" {
                report.average_mi
            } else {
                report.average_ac
            };
            writeln!(out, ",{avg:.4}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_blobs;

    fn tiny_protocol() -> Protocol {
        Protocol {
            class_subset_sizes: vec![2, 3],
            repeats: 2,
            labeled_fraction: None,
            hidden_dims: vec![],
            kmeans_restarts: 4,
            max_iter: 40,
        }
    }

    #[test]
    fn report_bookkeeping() {
        let ds = make_blobs(4, 8, 6, 0.15, 3).unwrap();
        let grid = HyperGrid::default();
        let report =
            run_experiment(&ds, Method::KmeansRaw, &tiny_protocol(), &grid, 7).unwrap();
        assert_eq!(report.cells.len(), 2);
        let total: usize = report.cells.iter().map(|c| c.repeats.len()).sum();
        assert_eq!(total, 4);
        for cell in &report.cells {
            assert!((0.0..=1.0).contains(&cell.mean_ac));
            assert!((0.0..=1.0).contains(&cell.mean_mi));
            for rec in &cell.repeats {
                assert_eq!(rec.class_subset.len(), cell.subset_size);
            }
        }
    }

    #[test]
    fn kmeans_raw_uses_identity_representation() {
        let ds = make_blobs(3, 5, 4, 0.2, 9).unwrap();
        let protocol = tiny_protocol();
        let h = representation(
            Method::KmeansRaw,
            &ds,
            &HyperChoice::default(),
            &protocol,
            &[0],
        )
        .unwrap();
        assert_eq!(&h, ds.x());
    }

    #[test]
    fn reports_are_reproducible_byte_for_byte() {
        let ds = make_blobs(3, 6, 5, 0.25, 4).unwrap();
        let protocol = Protocol {
            class_subset_sizes: vec![2],
            repeats: 2,
            labeled_fraction: None,
            hidden_dims: vec![],
            kmeans_restarts: 3,
            max_iter: 25,
        };
        let grid = HyperGrid {
            lambdas: vec![0.1],
            ks: vec![3],
            etas: vec![0.01],
            rhos: vec![0.1],
        };
        let a = run_experiment(&ds, Method::Gae, &protocol, &grid, 11).unwrap();
        let b = run_experiment(&ds, Method::Gae, &protocol, &grid, 11).unwrap();
        let ja = serde_json::to_string_pretty(&a).unwrap();
        let jb = serde_json::to_string_pretty(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn sgae_requires_labeled_fraction() {
        let ds = make_blobs(3, 6, 4, 0.2, 5).unwrap();
        let err = run_experiment(&ds, Method::Sgae, &tiny_protocol(), &HyperGrid::default(), 1);
        assert!(err.is_err());
    }

    #[test]
    fn csv_layout_matches_table_shape() {
        let ds = make_blobs(3, 6, 5, 0.2, 6).unwrap();
        let protocol = Protocol {
            class_subset_sizes: vec![2, 3],
            repeats: 2,
            labeled_fraction: None,
            hidden_dims: vec![],
            kmeans_restarts: 3,
            max_iter: 20,
        };
        let grid = HyperGrid {
            lambdas: vec![0.1],
            ks: vec![3],
            etas: vec![0.01],
            rhos: vec![0.1],
        };
        let reports = vec![
            run_experiment(&ds, Method::KmeansRaw, &protocol, &grid, 2).unwrap(),
            run_experiment(&ds, Method::Pca, &protocol, &grid, 2).unwrap(),
        ];
        let csv = reports_to_csv(&reports);
        let lines: Vec<&str> = csv.lines().collect();
        // header + 2 methods x 2 metrics
        assert_eq!(lines.len(), 1 + 4);
        assert_eq!(lines[0], "Class,2,3,Average");
        assert!(lines[1].starts_with("Kmeans MI,"));
        assert!(lines[3].starts_with("Kmeans AC,"));
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 4);
        }
    }
}
