use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hungarian::solve_min_cost_assignment;
use crate::error::{Result, SotError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score(pred: &[usize], truth: &[usize]) -> Result<MetricReport> {
    Ok(MetricReport {
        accuracy: hungarian_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

/// Counts `table[p][t]` of items with predicted cluster `p` and true class
/// `t`, after mapping both label sets to `0..k` in order of first
/// appearance.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(SotError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(SotError::DegenerateInput("empty labelings"));
    }
    let (p, kp) = compact(pred);
    let (t, kt) = compact(truth);
    let mut table = vec![vec![0u64; kt]; kp];
    for (a, b) in p.into_iter().zip(t) {
        table[a][b] += 1;
    }
    Ok(table)
}

/// Fraction of items whose cluster maps to their class under the best
/// one-to-one relabeling.
pub fn hungarian_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let k = table.len().max(table[0].len());
    let max = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = (0..k)
        .map(|r| {
            (0..k)
                .map(|c| max - table.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0) as i64)
                .collect()
        })
        .collect();
    let assign = solve_min_cost_assignment(&cost);
    let matched: u64 = assign
        .iter()
        .enumerate()
        .map(|(r, &c)| table.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0))
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy_of(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural log). Two single-cluster partitions score 1.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..table[0].len()).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let hp = entropy_of(rows.iter().copied(), n);
    let ht = entropy_of(cols.iter().copied(), n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[r] as f64 * cols[c] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from contingency pair counts. Returns 1 when the
/// chance-corrected denominator vanishes (both partitions trivial in the
/// same way, e.g. all singletons or a single cluster).
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SotError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(SotError::DegenerateInput("ARI needs at least two items"));
    }
    let table = contingency(pred, truth)?;
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let b: f64 = (0..table[0].len())
        .map(|c| comb2(table.iter().map(|r| r[c]).sum()))
        .sum();
    let expected = a * b / comb2(pred.len() as u64);
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
