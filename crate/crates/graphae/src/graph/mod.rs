//! Affinity graphs over dataset samples and the trace-form regularizer
//! matrix they induce.
//!
//! A graph is a nonnegative weight matrix `V` (zero diagonal, possibly
//! asymmetric) over the n samples. The regularizer matrix is
//! `G = D1 + D2 - 2V` with `D1 = diag(row sums)` and `D2 = diag(column
//! sums)`; it satisfies `tr(H G H^T) = sum_ij v_ij ||h_i - h_j||^2` for every
//! real `H`, which is the penalty the training objective charges for mapping
//! neighboring samples far apart. For symmetric `V` this is twice the
//! classical graph Laplacian.

mod lasso;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::dataset::DataSet;
use crate::error::{Error, Result};

/// Construction recipe for an affinity graph. Also serves as the per-layer
/// rebuild instruction during stacked training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    /// Directed k-nearest-neighbor graph, weights `exp(-||x_i - x_j||)`.
    Knn { k: usize },
    /// Distance threshold graph (symmetric), same weights.
    Epsilon { epsilon: f64 },
    /// Sparse self-representation coefficients via per-sample lasso.
    L1 {
        lambda1: f64,
        #[serde(default = "default_l1_tol")]
        tol: f64,
        #[serde(default = "default_l1_max_iter")]
        max_iter: usize,
    },
    /// KNN neighbor sets with label-aware weight overrides.
    Semi { k: usize },
}

fn default_l1_tol() -> f64 {
    1e-6
}

fn default_l1_max_iter() -> usize {
    10_000
}

impl GraphSpec {
    pub fn build(&self, ds: &DataSet) -> Result<AffinityGraph> {
        match *self {
            GraphSpec::Knn { k } => build_knn_graph(ds, k),
            GraphSpec::Epsilon { epsilon } => build_epsilon_graph(ds, epsilon),
            GraphSpec::L1 {
                lambda1,
                tol,
                max_iter,
            } => build_l1_graph(ds, lambda1, tol, max_iter),
            GraphSpec::Semi { k } => build_semi_graph(ds, k),
        }
    }
}

/// Nonnegative affinity weights plus the derived regularizer matrix.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    v: Array2<f64>,
    g: Array2<f64>,
    spec: GraphSpec,
}

impl AffinityGraph {
    /// Wrap an explicit weight matrix, deriving `G`.
    pub fn from_weights(v: Array2<f64>, spec: GraphSpec) -> Result<Self> {
        let g = regularizer_matrix(&v)?;
        Ok(AffinityGraph { v, g, spec })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn regularizer(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.v.iter().filter(|&&w| w != 0.0).count()
    }

    /// Serialize as a sorted `i j weight` edge list with a header comment
    /// carrying the sample count and construction recipe.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        writeln!(out, "# graphae-edges n={} spec={}", self.n(), spec).unwrap();
        for i in 0..self.n() {
            for j in 0..self.n() {
                let w = self.v[[i, j]];
                if w != 0.0 {
                    writeln!(out, "{i} {j} {w}").unwrap();
                }
            }
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_edge_list())
            .map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Inverse of [`to_edge_list`](Self::to_edge_list).
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let rest = header
            .strip_prefix("# graphae-edges n=")
            .ok_or_else(|| Error::Parse("missing edge-list header".into()))?;
        let (n_str, spec_str) = rest
            .split_once(" spec=")
            .ok_or_else(|| Error::Parse("malformed edge-list header".into()))?;
        let n: usize = n_str
            .parse()
            .map_err(|_| Error::Parse(format!("bad sample count {n_str:?}")))?;
        let spec: GraphSpec = serde_json::from_str(spec_str)
            .map_err(|e| Error::Parse(format!("bad graph spec in header: {e}")))?;
        let mut v = Array2::zeros((n, n));
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let bad = || Error::Parse(format!("bad edge line {line:?}"));
            let i: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let j: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let w: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if i >= n || j >= n {
                return Err(Error::Parse(format!("edge index out of range: {line:?}")));
            }
            v[[i, j]] = w;
        }
        AffinityGraph::from_weights(v, spec)
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_edge_list(&text)
    }
}

/// `G = D1 + D2 - 2V` from a square nonnegative weight matrix.
pub fn regularizer_matrix(v: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = v.dim();
    if rows != cols {
        return Err(Error::Dim(format!("weight matrix must be square, got {rows}x{cols}")));
    }
    if v.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidArg("weights must be nonnegative".into()));
    }
    let mut g = v.mapv(|w| -2.0 * w);
    for i in 0..rows {
        let row_sum = v.row(i).sum();
        let col_sum = v.column(i).sum();
        g[[i, i]] += row_sum + col_sum;
    }
    Ok(g)
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All pairwise column distances of the sample matrix.
fn distance_matrix(x: &Array2<f64>) -> Array2<f64> {
    let n = x.ncols();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean(x.column(i), x.column(j));
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

/// For each sample j, the indices of its k nearest other samples, ties
/// broken by lowest index.
fn knn_sets(dist: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = dist.nrows();
    (0..n)
        .map(|j| {
            let mut order: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            order.sort_by(|&a, &b| {
                dist[[a, j]]
                    .partial_cmp(&dist[[b, j]])
                    .expect("finite distances")
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        })
        .collect()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidArg(format!(
            "neighbor count k={k} must satisfy 1 <= k < n={n}"
        )));
    }
    Ok(())
}

/// Directed KNN graph: `v_ij = exp(-||x_i - x_j||)` when `x_i` is among the
/// k nearest neighbors of `x_j`. No symmetrization; `G` absorbs the
/// asymmetry through its two degree terms.
pub fn build_knn_graph(ds: &DataSet, k: usize) -> Result<AffinityGraph> {
    check_k(k, ds.n())?;
    let dist = distance_matrix(ds.x());
    let sets = knn_sets(&dist, k);
    let mut v = Array2::zeros((ds.n(), ds.n()));
    for (j, neighbors) in sets.iter().enumerate() {
        for &i in neighbors {
            v[[i, j]] = (-dist[[i, j]]).exp();
        }
    }
    AffinityGraph::from_weights(v, GraphSpec::Knn { k })
}

/// Threshold graph: `v_ij = exp(-||x_i - x_j||)` iff the distance is below
/// `epsilon`. Symmetric by construction.
pub fn build_epsilon_graph(ds: &DataSet, epsilon: f64) -> Result<AffinityGraph> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArg(format!("epsilon must be positive, got {epsilon}")));
    }
    let dist = distance_matrix(ds.x());
    let n = ds.n();
    let mut v = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j && dist[[i, j]] < epsilon {
                v[[i, j]] = (-dist[[i, j]]).exp();
            }
        }
    }
    AffinityGraph::from_weights(v, GraphSpec::Epsilon { epsilon })
}

/// Sparse-coding graph: row i holds the absolute values of the lasso
/// coefficients reconstructing `x_i` from all other samples:
/// `min 0.5 ||x_i - sum_j v_ij x_j||^2 + lambda1 sum_j |v_ij|`.
/// Each per-sample solve must converge within `max_iter` sweeps.
pub fn build_l1_graph(
    ds: &DataSet,
    lambda1: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AffinityGraph> {
    if lambda1 < 0.0 {
        return Err(Error::InvalidArg("lambda1 must be nonnegative".into()));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArg("tol and max_iter must be positive".into()));
    }
    let n = ds.n();
    let x = ds.x();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dict = Array2::zeros((ds.dim(), n - 1));
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for (c, &j) in others.iter().enumerate() {
                dict.column_mut(c).assign(&x.column(j));
            }
            let sol = lasso::lasso_cd(&dict, x.column(i), lambda1, tol, max_iter);
            if !sol.converged {
                return Err(Error::Numerical(format!(
                    "l1-graph lasso for sample {i} did not converge within {} sweeps",
                    sol.sweeps
                )));
            }
            let mut row = vec![0.0; n];
            for (c, &j) in others.iter().enumerate() {
                row[j] = sol.coeffs[c].abs();
            }
            Ok(row)
        })
        .collect();
    let mut v = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, w) in row?.into_iter().enumerate() {
            v[[i, j]] = w;
        }
    }
    AffinityGraph::from_weights(
        v,
        GraphSpec::L1 {
            lambda1,
            tol,
            max_iter,
        },
    )
}

/// KNN neighbor sets with labels overriding the distance weights: both
/// labeled and agreeing -> 1, both labeled and disagreeing -> 0, either
/// unlabeled -> `exp(-distance)`. Without any labels this degenerates to the
/// plain KNN weighting (logged as a warning).
pub fn build_semi_graph(ds: &DataSet, k: usize) -> Result<AffinityGraph> {
    check_k(k, ds.n())?;
    if ds.labeled_count() == 0 {
        log::warn!("semi-graph built over a dataset without labels; weights degenerate to KNN");
    }
    let dist = distance_matrix(ds.x());
    let sets = knn_sets(&dist, k);
    let empty;
    let labels = match ds.labels() {
        Some(ls) => ls,
        None => {
            empty = vec![None; ds.n()];
            &empty
        }
    };
    let mut v = Array2::zeros((ds.n(), ds.n()));
    for (j, neighbors) in sets.iter().enumerate() {
        for &i in neighbors {
            v[[i, j]] = match (labels[i], labels[j]) {
                (Some(a), Some(b)) if a == b => 1.0,
                (Some(_), Some(_)) => 0.0,
                _ => (-dist[[i, j]]).exp(),
            };
        }
    }
    AffinityGraph::from_weights(v, GraphSpec::Semi { k })
}

/// Fraction of nonzero weights connecting samples of different classes.
pub fn graph_error_rate(graph: &AffinityGraph, true_labels: &[usize]) -> Result<f64> {
    if true_labels.len() != graph.n() {
        return Err(Error::Dim(format!(
            "label vector length {} != graph size {}",
            true_labels.len(),
            graph.n()
        )));
    }
    let mut total = 0usize;
    let mut wrong = 0usize;
    for ((i, j), &w) in graph.weights().indexed_iter() {
        if w != 0.0 {
            total += 1;
            if true_labels[i] != true_labels[j] {
                wrong += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidArg("graph has no connections".into()));
    }
    Ok(wrong as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_blobs;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn dataset_from_columns(cols: &[Vec<f64>]) -> DataSet {
        let m = cols[0].len();
        let mut x = Array2::zeros((m, cols.len()));
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        DataSet::from_scaled(x, None, "fixture").unwrap()
    }

    /// Independent route for the trace penalty: the literal double sum.
    fn pairwise_penalty(v: &Array2<f64>, h: &Array2<f64>) -> f64 {
        let n = v.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d2 = h
                    .column(i)
                    .iter()
                    .zip(h.column(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                total += v[[i, j]] * d2;
            }
        }
        total
    }

    fn trace_form(g: &Array2<f64>, h: &Array2<f64>) -> f64 {
        let hg = h.dot(g).dot(&h.t());
        hg.diag().sum()
    }

    #[test]
    fn regularizer_of_zero_graph_is_zero() {
        let g = regularizer_matrix(&Array2::zeros((4, 4))).unwrap();
        assert_eq!(g, Array2::<f64>::zeros((4, 4)));
    }

    #[test]
    fn symmetric_weights_give_twice_the_laplacian() {
        let v = array![[0.0, 0.3, 0.1], [0.3, 0.0, 0.5], [0.1, 0.5, 0.0]];
        let g = regularizer_matrix(&v).unwrap();
        // G = 2(D - V) with D the degree matrix
        let mut expected = v.mapv(|w| -2.0 * w);
        for i in 0..3 {
            expected[[i, i]] = 2.0 * v.row(i).sum();
        }
        assert_abs_diff_eq!(g, expected, epsilon = 1e-15);
        // constant vector in the null space
        for i in 0..3 {
            assert_abs_diff_eq!(g.row(i).sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn regularizer_rejects_bad_inputs() {
        assert!(regularizer_matrix(&Array2::zeros((2, 3))).is_err());
        let neg = array![[0.0, -0.1], [0.0, 0.0]];
        assert!(regularizer_matrix(&neg).is_err());
    }

    #[test]
    fn trace_identity_fixed_instance() {
        let v = array![
            [0.0, 0.7, 0.0, 0.2],
            [0.1, 0.0, 0.9, 0.0],
            [0.0, 0.4, 0.0, 0.6],
            [0.3, 0.0, 0.5, 0.0]
        ];
        let h = array![[0.1, -0.4, 0.9, 1.4], [2.0, 0.3, -0.7, 0.5]];
        let g = regularizer_matrix(&v).unwrap();
        let lhs = trace_form(&g, &h);
        let rhs = pairwise_penalty(&v, &h);
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        assert!(lhs >= 0.0);
    }

    #[test]
    fn knn_duplicate_points_get_unit_weight() {
        let ds = dataset_from_columns(&[
            vec![0.2, 0.2],
            vec![0.2, 0.2],
            vec![0.9, 0.9],
        ]);
        let graph = build_knn_graph(&ds, 1).unwrap();
        // columns 0 and 1 coincide, so each is the other's nearest neighbor
        assert_eq!(graph.weights()[[1, 0]], 1.0);
        assert_eq!(graph.weights()[[0, 1]], 1.0);
    }

    #[test]
    fn knn_collinear_matches_brute_force_sort() {
        // points at 0, 1/4, 2/4, 3/4, 1 on a line
        let cols: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let ds = dataset_from_columns(&cols);
        let graph = build_knn_graph(&ds, 1).unwrap();
        // oracle: full pairwise-distance sort per sample
        for j in 0..5 {
            let mut order: Vec<usize> = (0..5).filter(|&i| i != j).collect();
            order.sort_by(|&a, &b| {
                let da = (a as f64 - j as f64).abs();
                let db = (b as f64 - j as f64).abs();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            let nearest = order[0];
            for i in 0..5 {
                if i == j {
                    continue;
                }
                let expected = if i == nearest {
                    (-((i as f64 - j as f64).abs() / 4.0)).exp()
                } else {
                    0.0
                };
                assert_abs_diff_eq!(graph.weights()[[i, j]], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn knn_full_k_gives_complete_graph() {
        let ds = make_blobs(2, 3, 4, 0.2, 7).unwrap();
        let graph = build_knn_graph(&ds, ds.n() - 1).unwrap();
        for ((i, j), &w) in graph.weights().indexed_iter() {
            if i == j {
                assert_eq!(w, 0.0);
            } else {
                assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn knn_rejects_bad_k() {
        let ds = make_blobs(2, 3, 2, 0.2, 7).unwrap();
        assert!(build_knn_graph(&ds, 0).is_err());
        assert!(build_knn_graph(&ds, ds.n()).is_err());
    }

    #[test]
    fn epsilon_graph_empty_and_complete() {
        let ds = dataset_from_columns(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let tiny = build_epsilon_graph(&ds, 1e-6).unwrap();
        assert_eq!(tiny.weights(), &Array2::<f64>::zeros((3, 3)));
        assert_eq!(tiny.regularizer(), &Array2::<f64>::zeros((3, 3)));
        let huge = build_epsilon_graph(&ds, 10.0).unwrap();
        assert_eq!(huge.edge_count(), 6);
    }

    #[test]
    fn epsilon_graph_matches_threshold_oracle() {
        let ds = dataset_from_columns(&[
            vec![0.0, 0.0],
            vec![0.3, 0.0],
            vec![0.0, 0.8],
            vec![1.0, 1.0],
        ]);
        // distinct pairwise distances; pick epsilon between the 2nd and 3rd
        // smallest
        let x = ds.x();
        let mut dists = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                dists.push(euclidean(x.column(i), x.column(j)));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eps = 0.5 * (dists[1] + dists[2]);
        let graph = build_epsilon_graph(&ds, eps).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d = euclidean(x.column(i), x.column(j));
                let expected = if i != j && d < eps { (-d).exp() } else { 0.0 };
                assert_eq!(graph.weights()[[i, j]], expected);
            }
        }
        // symmetric by construction
        assert_eq!(graph.weights(), &graph.weights().t().to_owned());
    }

    #[test]
    fn l1_graph_duplicate_concentrates_weight() {
        let ds = dataset_from_columns(&[
            vec![0.8, 0.1, 0.3],
            vec![0.1, 0.9, 0.2],
            vec![0.8, 0.1, 0.3], // duplicate of sample 0
        ]);
        let graph = build_l1_graph(&ds, 1e-3, 1e-9, 10_000).unwrap();
        let w_dup = graph.weights()[[0, 2]];
        assert!((w_dup - 1.0).abs() < 0.05, "duplicate weight {w_dup}");
        assert!(graph.weights()[[0, 1]] < 0.05);
        // oracle: refined dense grid over the two free coefficients
        let x = ds.x();
        let mut dict = Array2::zeros((3, 2));
        dict.column_mut(0).assign(&x.column(1));
        dict.column_mut(1).assign(&x.column(2));
        let want = lasso::oracle::grid_search(&dict, x.column(0), 1e-3);
        assert!((graph.weights()[[0, 1]] - want[0].abs()).abs() < 1e-3);
        assert!((graph.weights()[[0, 2]] - want[1].abs()).abs() < 1e-3);
    }

    #[test]
    fn l1_graph_lambda_max_zeroes_row() {
        let ds = dataset_from_columns(&[vec![1.0, 0.1], vec![0.3, 0.8], vec![0.2, 0.4]]);
        let x = ds.x();
        // largest absolute correlation of sample 0 with any other sample
        let lambda_max = (1..3)
            .map(|j| x.column(0).dot(&x.column(j)).abs())
            .fold(0.0f64, f64::max);
        let graph = build_l1_graph(&ds, lambda_max * 1.0001, 1e-9, 10_000).unwrap();
        assert!(graph.weights().row(0).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn l1_graph_matches_grid_oracle() {
        let ds = dataset_from_columns(&[vec![0.9, 0.2], vec![0.1, 0.8], vec![0.7, 0.6]]);
        let graph = build_l1_graph(&ds, 0.1, 1e-9, 10_000).unwrap();
        let x = ds.x();
        for i in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
            let mut dict = Array2::zeros((2, 2));
            for (c, &j) in others.iter().enumerate() {
                dict.column_mut(c).assign(&x.column(j));
            }
            let want = lasso::oracle::grid_search(&dict, x.column(i), 0.1);
            for (c, &j) in others.iter().enumerate() {
                assert!(
                    (graph.weights()[[i, j]] - want[c].abs()).abs() < 1e-3,
                    "sample {i}, coeff {j}: {} vs {}",
                    graph.weights()[[i, j]],
                    want[c]
                );
            }
        }
    }

    #[test]
    fn semi_graph_weight_rules() {
        let x = array![
            [0.0, 0.0, 0.5, 1.0],
            [0.0, 0.3, 0.0, 1.0]
        ];
        let labels = vec![Some(1), Some(1), None, Some(0)];
        let ds = DataSet::from_scaled(x, Some(labels), "semi").unwrap();
        let graph = build_semi_graph(&ds, 3).unwrap();
        // neighbors with equal labels: weight exactly 1
        assert_eq!(graph.weights()[[0, 1]], 1.0);
        assert_eq!(graph.weights()[[1, 0]], 1.0);
        // neighbors with different labels: weight exactly 0
        assert_eq!(graph.weights()[[3, 0]], 0.0);
        // one endpoint unlabeled at distance 0.5: exp(-0.5)
        assert_abs_diff_eq!(graph.weights()[[2, 0]], (-0.5f64).exp(), epsilon = 1e-15);
        // all weights within [0, 1]
        assert!(graph.weights().iter().all(|&w| (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn semi_graph_without_labels_degenerates_to_knn() {
        let x = array![[0.0, 0.4, 1.0], [0.0, 0.4, 1.0]];
        let ds = DataSet::from_scaled(x, None, "nolabels").unwrap();
        let semi = build_semi_graph(&ds, 1).unwrap();
        let knn = build_knn_graph(&ds, 1).unwrap();
        assert_eq!(semi.weights(), knn.weights());
    }

    #[test]
    fn error_rate_of_fully_labeled_semi_graph_is_zero() {
        let ds = make_blobs(3, 8, 4, 0.2, 3).unwrap();
        let graph = build_semi_graph(&ds, 5).unwrap();
        let labels = ds.complete_labels().unwrap();
        assert_eq!(graph_error_rate(&graph, &labels).unwrap(), 0.0);
    }

    #[test]
    fn error_rate_direct_ratio() {
        // 100 directed edges, 3 crossing the class boundary
        let n = 101;
        let mut v = Array2::zeros((n, n));
        for e in 0..100 {
            v[[e, e + 1]] = 0.5;
        }
        let mut labels = vec![0usize; n];
        // boundary crossings at edges 10, 40, 70
        for (flip, l) in labels.iter_mut().enumerate() {
            *l = match flip {
                0..=10 => 0,
                11..=40 => 1,
                41..=70 => 2,
                _ => 3,
            };
        }
        let graph = AffinityGraph::from_weights(v, GraphSpec::Knn { k: 1 }).unwrap();
        assert_abs_diff_eq!(
            graph_error_rate(&graph, &labels).unwrap(),
            0.03,
            epsilon = 1e-15
        );
    }

    #[test]
    fn knn_on_separated_blobs_has_zero_error() {
        let ds = make_blobs(3, 12, 4, 0.01, 11).unwrap();
        let labels = ds.complete_labels().unwrap();
        let graph = build_knn_graph(&ds, 3).unwrap();
        // oracle: enumerate every nonzero weight and compare endpoint labels
        let mut wrong = 0;
        let mut total = 0;
        for ((i, j), &w) in graph.weights().indexed_iter() {
            if w != 0.0 {
                total += 1;
                if labels[i] != labels[j] {
                    wrong += 1;
                }
            }
        }
        assert!(total > 0);
        assert_eq!(wrong, 0);
        assert_eq!(graph_error_rate(&graph, &labels).unwrap(), 0.0);
    }

    #[test]
    fn error_rate_rejects_empty_graph() {
        let v = Array2::zeros((3, 3));
        let graph = AffinityGraph::from_weights(v, GraphSpec::Knn { k: 1 }).unwrap();
        assert!(graph_error_rate(&graph, &[0, 1, 2]).is_err());
    }

    #[test]
    fn edge_list_roundtrip() {
        let ds = make_blobs(2, 4, 3, 0.3, 19).unwrap();
        let graph = build_knn_graph(&ds, 2).unwrap();
        let text = graph.to_edge_list();
        let back = AffinityGraph::from_edge_list(&text).unwrap();
        assert_eq!(graph.weights(), back.weights());
        assert_eq!(graph.regularizer(), back.regularizer());
        assert_eq!(graph.spec(), back.spec());
    }

    proptest! {
        /// Trace identity: tr(H G H^T) equals the weighted double sum for
        /// arbitrary nonnegative V and real H.
        #[test]
        fn trace_identity_random(
            n in 2usize..10,
            l in 1usize..4,
            seed in 0u64..1000,
        ) {
            use rand::Rng;
            let mut rng = crate::seed::rng_from(seed);
            let v = Array2::from_shape_fn((n, n), |(i, j)| {
                if i == j { 0.0 } else { rng.random::<f64>() }
            });
            let h = Array2::from_shape_fn((l, n), |_| rng.random::<f64>() * 4.0 - 2.0);
            let g = regularizer_matrix(&v).unwrap();
            let lhs = trace_form(&g, &h);
            let rhs = pairwise_penalty(&v, &h);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            prop_assert!(lhs >= -1e-12);
        }

        /// Columns identical => zero penalty.
        #[test]
        fn identical_columns_zero_penalty(n in 2usize..8, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::seed::rng_from(seed);
            let v = Array2::from_shape_fn((n, n), |(i, j)| {
                if i == j { 0.0 } else { rng.random::<f64>() }
            });
            let col: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let h = Array2::from_shape_fn((3, n), |(r, _)| col[r]);
            let g = regularizer_matrix(&v).unwrap();
            prop_assert!(trace_form(&g, &h).abs() < 1e-10);
        }
    }
}
