//! Clustering agreement metrics: accuracy under the optimal label mapping
//! and normalized mutual information.

use super::assignment::hungarian_min;
use crate::error::{Error, Result};

/// Contingency counts between two label vectors over their distinct values.
fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    let mut avals: Vec<usize> = a.to_vec();
    avals.sort_unstable();
    avals.dedup();
    let mut bvals: Vec<usize> = b.to_vec();
    bvals.sort_unstable();
    bvals.dedup();
    let mut counts = vec![vec![0usize; bvals.len()]; avals.len()];
    for (&x, &y) in a.iter().zip(b) {
        let i = avals.binary_search(&x).expect("present");
        let j = bvals.binary_search(&y).expect("present");
        counts[i][j] += 1;
    }
    (counts, avals, bvals)
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dim(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArg("label vectors are empty".into()));
    }
    Ok(())
}

/// Fraction of samples whose cluster id, under the matching of clusters to
/// classes that maximizes agreement (optimal assignment on the contingency
/// matrix), equals the ground-truth class.
pub fn accuracy(clustered: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(clustered, truth)?;
    let (counts, cvals, tvals) = contingency(clustered, truth);
    let side = cvals.len().max(tvals.len());
    // maximize matches == minimize negated counts on a square padding
    let cost: Vec<Vec<i64>> = (0..side)
        .map(|i| {
            (0..side)
                .map(|j| {
                    if i < cvals.len() && j < tvals.len() {
                        -(counts[i][j] as i64)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let assign = hungarian_min(&cost);
    let matched: usize = assign
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < cvals.len() && j < tvals.len())
        .map(|(i, &j)| counts[i][j])
        .sum();
    Ok(matched as f64 / clustered.len() as f64)
}

fn entropy_from_marginal(marginal: &[usize], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in normalized mutual information: empirical mutual information over
/// the joint label distribution, divided by the larger of the two label
/// entropies. Identical clusterings give 1; a factorizing joint gives 0; two
/// single-cluster inputs are treated as identical (1). Note the plug-in
/// estimate on finite samples of genuinely independent clusterings is
/// near-zero rather than exactly zero unless the empirical joint factorizes
/// exactly.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let (counts, avals, bvals) = contingency(a, b);
    let n = a.len() as f64;
    let row_sums: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..bvals.len())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();

    let mut mi = 0.0;
    for i in 0..avals.len() {
        for j in 0..bvals.len() {
            let c = counts[i][j];
            if c > 0 {
                let p = c as f64 / n;
                let pi = row_sums[i] as f64 / n;
                let pj = col_sums[j] as f64 / n;
                mi += p * (p / (pi * pj)).ln();
            }
        }
    }
    let ha = entropy_from_marginal(&row_sums, n);
    let hb = entropy_from_marginal(&col_sums, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let denom = ha.max(hb);
    Ok((mi / denom).clamp(0.0, 1.0))
}
