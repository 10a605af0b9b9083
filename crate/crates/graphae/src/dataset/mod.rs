//! Datasets: ingestion, unit scaling, synthesis, and the randomized
//! class-subset / label-masking protocol.
//!
//! Samples are stored column-major: `x` is an `m x n` matrix whose columns
//! are samples. All values are min-max scaled into `[0, 1]` per feature,
//! which the sigmoid decoder range requires.

mod io;

pub use io::DataFormat;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// A sample matrix with optional (possibly partial) class labels.
#[derive(Debug, Clone)]
pub struct DataSet {
    x: Array2<f64>,
    labels: Option<Vec<Option<usize>>>,
    class_count: Option<usize>,
    name: String,
}

impl DataSet {
    /// Build a dataset from raw feature values, applying per-feature min-max
    /// scaling. Constant features scale to zero.
    pub fn from_raw(
        mut x: Array2<f64>,
        labels: Option<Vec<usize>>,
        name: impl Into<String>,
    ) -> Result<Self> {
        scale_unit(&mut x);
        Self::from_scaled(x, labels.map(|ls| ls.into_iter().map(Some).collect()), name)
    }

    /// Build a dataset from values already in `[0, 1]`, without rescaling.
    /// Used by operations that carve out subsets of an existing dataset.
    pub fn from_scaled(
        x: Array2<f64>,
        labels: Option<Vec<Option<usize>>>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let (m, n) = x.dim();
        if n < 2 || m < 1 {
            return Err(Error::InvalidArg(format!(
                "dataset needs at least 2 samples and 1 feature, got {m}x{n}"
            )));
        }
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArg(
                "dataset values must lie in [0, 1]".into(),
            ));
        }
        let class_count = match &labels {
            None => None,
            Some(ls) => {
                if ls.len() != n {
                    return Err(Error::Dim(format!(
                        "label vector length {} != sample count {n}",
                        ls.len()
                    )));
                }
                let max = ls.iter().flatten().max();
                match max {
                    None => {
                        return Err(Error::InvalidArg(
                            "label vector present but no sample is labeled".into(),
                        ))
                    }
                    Some(&max) => {
                        // ids must be contiguous 0..class_count-1
                        let mut seen = vec![false; max + 1];
                        for &l in ls.iter().flatten() {
                            seen[l] = true;
                        }
                        if seen.iter().any(|&s| !s) {
                            return Err(Error::InvalidArg(
                                "class identifiers must be contiguous 0..class_count-1".into(),
                            ));
                        }
                        Some(max + 1)
                    }
                }
            }
        };
        Ok(DataSet {
            x,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    /// Feature dimension m.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Sample count n.
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class_count(&self) -> Option<usize> {
        self.class_count
    }

    /// Per-sample labels; `None` entries are unlabeled samples.
    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    /// All labels, provided every sample carries one.
    pub fn complete_labels(&self) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .and_then(|ls| ls.iter().copied().collect::<Option<Vec<_>>>())
    }

    pub fn labeled_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |ls| ls.iter().filter(|l| l.is_some()).count())
    }
}

/// In-place per-feature min-max scaling to `[0, 1]`. Constant features map
/// to zero. Idempotent: applying it to already-scaled data changes nothing.
pub fn scale_unit(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in row.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        if span > 0.0 {
            row.mapv_inplace(|v| (v - lo) / span);
        } else {
            row.fill(0.0);
        }
    }
}

/// Load a dataset from disk. See [`DataFormat`] for the supported layouts.
/// Min-max scaling is applied after reading.
pub fn load_dataset(path: impl AsRef<std::path::Path>, format: &DataFormat) -> Result<DataSet> {
    io::load(path.as_ref(), format)
}

/// Synthesize isotropic Gaussian clusters, labeled by generating cluster.
/// Centers are drawn uniformly from the unit cube; `spread` is the per-axis
/// standard deviation. Deterministic given `seed`.
pub fn make_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<DataSet> {
    if class_count == 0 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidArg(
            "make_blobs arguments must be positive".into(),
        ));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidArg("spread must be nonnegative".into()));
    }
    let n = class_count * per_class;
    let mut rng = rng_from(seed);
    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|_| (0..dim).map(|_| rand::Rng::random::<f64>(&mut rng)).collect())
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Array2::zeros((dim, n));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for s in 0..per_class {
            let col = c * per_class + s;
            for d in 0..dim {
                let noise = if spread > 0.0 {
                    spread * normal.sample(&mut rng)
                } else {
                    0.0
                };
                x[[d, col]] = center[d] + noise;
            }
            labels.push(c);
        }
    }
    DataSet::from_raw(x, Some(labels), format!("blobs-{class_count}x{per_class}"))
}

/// The class ids `subsample_classes` keeps for the given seed, in ascending
/// order. Exposed so experiment reports can record the drawn subsets.
pub fn chosen_class_subset(class_count: usize, class_subset_size: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    let mut ids: Vec<usize> = (0..class_count).collect();
    ids.shuffle(&mut rng);
    let mut chosen: Vec<usize> = ids[..class_subset_size].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Keep only the samples of a uniformly random subset of classes, remapping
/// the surviving class ids to `0..class_subset_size-1` (ascending original
/// id order). Sample values and relative order are preserved exactly.
pub fn subsample_classes(ds: &DataSet, class_subset_size: usize, seed: u64) -> Result<DataSet> {
    let labels = ds.complete_labels().ok_or_else(|| {
        Error::InvalidArg("subsample_classes requires a fully labeled dataset".into())
    })?;
    let class_count = ds.class_count().expect("labeled dataset has class_count");
    if class_subset_size == 0 || class_subset_size > class_count {
        return Err(Error::InvalidArg(format!(
            "class subset size {class_subset_size} must be in 1..={class_count}"
        )));
    }
    let chosen = chosen_class_subset(class_count, class_subset_size, seed);

    let mut remap = vec![None; class_count];
    for (new, &old) in chosen.iter().enumerate() {
        remap[old] = Some(new);
    }
    let keep: Vec<usize> = (0..ds.n()).filter(|&i| remap[labels[i]].is_some()).collect();
    let mut x = Array2::zeros((ds.dim(), keep.len()));
    let mut new_labels = Vec::with_capacity(keep.len());
    for (col, &i) in keep.iter().enumerate() {
        x.column_mut(col).assign(&ds.x().column(i));
        new_labels.push(remap[labels[i]]);
    }
    DataSet::from_scaled(x, Some(new_labels), ds.name().to_string())
}

/// Hide labels so that per class exactly `round(labeled_fraction * size)`
/// samples (but never fewer than two) stay labeled; the rest become
/// unlabeled. Sample values and the surviving labels are untouched.
pub fn mask_labels(ds: &DataSet, labeled_fraction: f64, seed: u64) -> Result<DataSet> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "labeled fraction must lie in (0, 1], got {labeled_fraction}"
        )));
    }
    let labels = ds
        .complete_labels()
        .ok_or_else(|| Error::InvalidArg("mask_labels requires a fully labeled dataset".into()))?;
    let class_count = ds.class_count().expect("labeled dataset has class_count");

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }

    let mut rng = rng_from(seed);
    let mut masked: Vec<Option<usize>> = vec![None; ds.n()];
    for class in members.iter_mut() {
        let size = class.len();
        let keep = ((labeled_fraction * size as f64).round() as usize).max(2);
        if keep > size {
            return Err(Error::InvalidArg(format!(
                "class of size {size} cannot keep {keep} labeled samples (minimum 2)"
            )));
        }
        class.shuffle(&mut rng);
        for &i in class.iter().take(keep) {
            masked[i] = Some(labels[i]);
        }
    }
    let mut out = ds.clone();
    out.labels = Some(masked);
    Ok(out)
}
