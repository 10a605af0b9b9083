//! Lloyd's k-means with k-means++ seeding and restarts.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{substream_seed, rng_from};

const MAX_LLOYD_ITERS: usize = 300;

/// A clustering of the columns of the input matrix.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    /// One column per cluster center.
    pub centers: Array2<f64>,
    /// Sum of squared distances of points to their assigned centers.
    pub inertia: f64,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster the columns of `h` into k groups; the best of `restarts`
/// independent runs by inertia wins. Deterministic given `seed`.
pub fn kmeans(h: &Array2<f64>, k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let n = h.ncols();
    if n == 0 {
        return Err(Error::InvalidArg("cannot cluster an empty matrix".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArg(format!(
            "cluster count k={k} must satisfy 1 <= k <= n={n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArg("restarts must be positive".into()));
    }
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts {
        let mut rng = rng_from(substream_seed(seed, &format!("restart/{r}")));
        let result = lloyd(h, k, &mut rng);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn lloyd(h: &Array2<f64>, k: usize, rng: &mut impl Rng) -> ClusterResult {
    let n = h.ncols();
    let mut centers = plus_plus_init(h, k, rng);
    let mut assignments = vec![usize::MAX; n];

    for _ in 0..MAX_LLOYD_ITERS {
        let next = assign(h, &centers);
        if next == assignments {
            break;
        }
        assignments = next;
        recenter(h, k, &mut centers, &mut assignments);
    }

    // Lloyd fixpoints are not always inertia-local-minima over partitions;
    // single-point move refinement escapes the common traps, then Lloyd
    // resumes until a joint fixpoint
    let mut assignments = assign(h, &centers);
    for _ in 0..MAX_LLOYD_ITERS {
        recenter(h, k, &mut centers, &mut assignments);
        if !hartigan_pass(h, k, &mut centers, &mut assignments) {
            break;
        }
        for _ in 0..MAX_LLOYD_ITERS {
            let next = assign(h, &centers);
            if next == assignments {
                break;
            }
            assignments = next;
            recenter(h, k, &mut centers, &mut assignments);
        }
    }

    let inertia = assignments
        .iter()
        .enumerate()
        .map(|(j, &c)| sq_dist(h.column(j), centers.column(c)))
        .sum();
    ClusterResult {
        assignments,
        centers,
        inertia,
    }
}

/// Recompute centers as cluster means; an empty cluster is re-seeded with
/// the point farthest from its assigned center (which point is then
/// reassigned to it).
fn recenter(h: &Array2<f64>, k: usize, centers: &mut Array2<f64>, assignments: &mut [usize]) {
    let (dim, n) = h.dim();
    let mut counts = vec![0usize; k];
    centers.fill(0.0);
    for (j, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for d in 0..dim {
            centers[[d, c]] += h[[d, j]];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..dim {
                centers[[d, c]] /= counts[c] as f64;
            }
        }
    }
    let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    for c in empties {
        let far = (0..n)
            .filter(|&j| counts[assignments[j]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(h.column(a), centers.column(assignments[a]));
                let db = sq_dist(h.column(b), centers.column(assignments[b]));
                da.partial_cmp(&db).expect("finite").then(b.cmp(&a))
            })
            .expect("n >= k > 0");
        counts[assignments[far]] -= 1;
        assignments[far] = c;
        counts[c] = 1;
        for d in 0..dim {
            centers[[d, c]] = h[[d, far]];
        }
    }
}

/// One sweep of strictly-improving single-point moves (exact inertia deltas
/// with cluster-size correction). Returns whether any move was made.
fn hartigan_pass(
    h: &Array2<f64>,
    k: usize,
    centers: &mut Array2<f64>,
    assignments: &mut [usize],
) -> bool {
    let (dim, n) = h.dim();
    let mut counts = vec![0usize; k];
    for &c in assignments.iter() {
        counts[c] += 1;
    }
    let mut moved = false;
    for j in 0..n {
        let from = assignments[j];
        if counts[from] <= 1 {
            continue;
        }
        let a = counts[from] as f64;
        let leave_gain = a / (a - 1.0) * sq_dist(h.column(j), centers.column(from));
        let mut best: Option<(usize, f64)> = None;
        for c in 0..k {
            if c == from {
                continue;
            }
            let b = counts[c] as f64;
            let join_cost = b / (b + 1.0) * sq_dist(h.column(j), centers.column(c));
            let delta = join_cost - leave_gain;
            if delta < -1e-12 && best.is_none_or(|(_, d)| delta < d) {
                best = Some((c, delta));
            }
        }
        if let Some((to, _)) = best {
            // exact incremental mean updates
            let (a, b) = (counts[from] as f64, counts[to] as f64);
            for d in 0..dim {
                centers[[d, from]] = (centers[[d, from]] * a - h[[d, j]]) / (a - 1.0);
                centers[[d, to]] = (centers[[d, to]] * b + h[[d, j]]) / (b + 1.0);
            }
            counts[from] -= 1;
            counts[to] += 1;
            assignments[j] = to;
            moved = true;
        }
    }
    moved
}

fn assign(h: &Array2<f64>, centers: &Array2<f64>) -> Vec<usize> {
    let n = h.ncols();
    let k = centers.ncols();
    (0..n)
        .map(|j| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(h.column(j), centers.column(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// k-means++: after a uniform first pick, each next center is sampled with
/// probability proportional to the squared distance to the nearest center
/// chosen so far.
fn plus_plus_init(h: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let (dim, n) = h.dim();
    let mut centers = Array2::zeros((dim, k));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.column_mut(0).assign(&h.column(first));
    chosen[first] = true;

    let mut nearest: Vec<f64> = (0..n).map(|j| sq_dist(h.column(j), h.column(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, &w) in nearest.iter().enumerate() {
                if target < w {
                    pick = j;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // all remaining points coincide with existing centers
            (0..n).find(|&j| !chosen[j]).unwrap_or(0)
        };
        chosen[pick] = true;
        centers.column_mut(c).assign(&h.column(pick));
        for j in 0..n {
            nearest[j] = nearest[j].min(sq_dist(h.column(j), h.column(pick)));
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let h = array![[0.0, 1.0, 2.0, 5.0], [0.0, 0.5, 1.0, 2.0]];
        let got = kmeans(&h, 4, 5, 3).unwrap();
        assert_eq!(got.inertia, 0.0);
        let mut sorted = got.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_duplicate_pairs_split_perfectly() {
        let h = array![[0.0, 0.0, 9.0, 9.0]];
        let got = kmeans(&h, 2, 5, 1).unwrap();
        assert_eq!(got.inertia, 0.0);
        assert_eq!(got.assignments[0], got.assignments[1]);
        assert_eq!(got.assignments[2], got.assignments[3]);
        assert_ne!(got.assignments[0], got.assignments[2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let h = array![[0.0, 1.0]];
        assert!(kmeans(&h, 3, 5, 0).is_err());
        assert!(kmeans(&h, 0, 5, 0).is_err());
        assert!(kmeans(&h, 1, 0, 0).is_err());
        assert!(kmeans(&Array2::zeros((2, 0)), 1, 1, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = rng_from(7);
        let h = Array2::from_shape_fn((3, 20), |_| rng.random::<f64>());
        let a = kmeans(&h, 4, 8, 42).unwrap();
        let b = kmeans(&h, 4, 8, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn restarts_never_hurt() {
        let mut rng = rng_from(8);
        let h = Array2::from_shape_fn((2, 15), |_| rng.random::<f64>());
        let one = kmeans(&h, 3, 1, 5).unwrap();
        let many = kmeans(&h, 3, 20, 5).unwrap();
        assert!(many.inertia <= one.inertia + 1e-12);
    }

    /// Exhaustive assignment enumeration: the global optimum over all ways
    /// of labeling n points with k cluster ids (centers at cluster means).
    pub(crate) fn brute_force_inertia(h: &Array2<f64>, k: usize) -> f64 {
        let (dim, n) = h.dim();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        loop {
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (j, &c) in labels.iter().enumerate() {
                counts[c] += 1;
                for d in 0..dim {
                    sums[c][d] += h[[d, j]];
                }
            }
            let mut inertia = 0.0;
            for (j, &c) in labels.iter().enumerate() {
                for d in 0..dim {
                    let mean = sums[c][d] / counts[c] as f64;
                    inertia += (h[[d, j]] - mean) * (h[[d, j]] - mean);
                }
            }
            best = best.min(inertia);
            // odometer
            let mut pos = 0;
            loop {
                labels[pos] += 1;
                if labels[pos] < k {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
                if pos == n {
                    return best;
                }
            }
        }
    }

    #[test]
    fn best_of_restarts_matches_exhaustive_optimum() {
        for seed in 0..4u64 {
            let mut rng = rng_from(100 + seed);
            let h = Array2::from_shape_fn((2, 8), |_| rng.random::<f64>());
            let got = kmeans(&h, 3, 20, 200 + seed).unwrap();
            let want = brute_force_inertia(&h, 3);
            assert!(
                (got.inertia - want).abs() < 1e-9 * (1.0 + want),
                "seed {seed}: {} vs {want}",
                got.inertia
            );
        }
    }
}
