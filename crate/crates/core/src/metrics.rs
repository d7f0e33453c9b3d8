//! Clustering accuracy under optimal label matching, and normalized
//! mutual information.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the NMI normalization, recorded alongside every score.
pub const NMI_NORMALIZATION: &str = "arithmetic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub nmi: f64,
    /// Predicted label → matched true label, for every predicted label.
    pub matched_permutation: BTreeMap<usize, usize>,
    /// `confusion[p][t]` counts nodes predicted `p` with truth `t`.
    pub confusion: Vec<Vec<usize>>,
    pub nmi_normalization: String,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<EvalReport> {
    let (acc, matched_permutation) = accuracy(pred, truth)?;
    let nmi = nmi(pred, truth)?;
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    Ok(EvalReport {
        acc,
        nmi,
        matched_permutation,
        confusion,
        nmi_normalization: NMI_NORMALIZATION.to_string(),
    })
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Dense contingency table over the labels that actually occur.
struct Contingency {
    pred_labels: Vec<usize>,
    true_labels: Vec<usize>,
    counts: Vec<Vec<u64>>,
}

fn contingency(pred: &[usize], truth: &[usize]) -> Contingency {
    let index = |xs: &[usize]| -> BTreeMap<usize, usize> {
        let labels: BTreeSet<usize> = xs.iter().copied().collect();
        labels.into_iter().enumerate().map(|(i, k)| (k, i)).collect()
    };
    let pi = index(pred);
    let ti = index(truth);
    let mut counts = vec![vec![0u64; ti.len()]; pi.len()];
    for (p, t) in pred.iter().zip(truth) {
        counts[pi[p]][ti[t]] += 1;
    }
    Contingency {
        pred_labels: pi.keys().copied().collect(),
        true_labels: ti.keys().copied().collect(),
        counts,
    }
}

/// Fraction of nodes correctly labelled under the best one-to-one matching
/// of predicted to true labels. Predicted labels left without a partner
/// (more predicted than true communities) are absent from the mapping.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<(f64, BTreeMap<usize, usize>)> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Ok((0.0, BTreeMap::new()));
    }
    let c = contingency(pred, truth);
    let size = c.pred_labels.len().max(c.true_labels.len());
    let max = c.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimize (max − count) on a square padded with zero counts
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    let count = c.counts.get(i).and_then(|row| row.get(j)).copied().unwrap_or(0);
                    max - count as i64
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let mut matched = 0u64;
    let mut mapping = BTreeMap::new();
    for (i, &j) in assignment.iter().enumerate() {
        if i < c.pred_labels.len() && j < c.true_labels.len() {
            matched += c.counts[i][j];
            mapping.insert(c.pred_labels[i], c.true_labels[j]);
        }
    }
    Ok((matched as f64 / pred.len() as f64, mapping))
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural log). Returns 0 when both partitions are trivial.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let c = contingency(pred, truth);
    let row: Vec<f64> = c.counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col: Vec<f64> = (0..c.true_labels.len())
        .map(|j| c.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let entropy = |xs: &[f64]| -> f64 {
        xs.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let p = x / n;
                -p * p.ln()
            })
            .sum()
    };
    let mut mi = 0.0;
    for (i, r) in c.counts.iter().enumerate() {
        for (j, &count) in r.iter().enumerate() {
            if count > 0 {
                let nij = count as f64;
                mi += nij / n * (n * nij / (row[i] * col[j])).ln();
            }
        }
    }
    let denom = 0.5 * (entropy(&row) + entropy(&col));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based arrays; column 0 is a sentinel
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
