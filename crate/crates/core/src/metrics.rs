//! External clustering agreement: adjusted Rand index and normalized mutual
//! information (arithmetic-mean normalization).

use std::collections::HashMap;

use crate::{Error, Result};

/// Contingency table between two labelings.
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub n: usize,
    /// `counts[a][b]`, rows indexed by the first labeling.
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
}

fn dense_codes(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let codes = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

impl Contingency {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(truth.len(), pred.len()));
        }
        let (a, ra) = dense_codes(truth);
        let (b, rb) = dense_codes(pred);
        let mut counts = vec![vec![0; rb]; ra];
        for (&x, &y) in a.iter().zip(&b) {
            counts[x][y] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..rb).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
        Ok(Contingency {
            n: truth.len(),
            counts,
            row_sums,
            col_sums,
        })
    }
}

fn pairs(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Adjusted Rand index. Identical partitions (including two single-cluster
/// labelings) score 1.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = Contingency::new(truth, pred)?;
    let (ra, rb) = (t.row_sums.len(), t.col_sums.len());
    if t.n == 0 || (ra == rb && (ra == 1 || ra == t.n)) {
        return Ok(1.0);
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_b: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(t.n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(0.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(sums: &[usize], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I / ((H_a + H_b) / 2)`. Two single-cluster
/// labelings score 1; exactly one single-cluster labeling scores 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = Contingency::new(truth, pred)?;
    let (ra, rb) = (t.row_sums.len(), t.col_sums.len());
    if t.n == 0 || (ra == 1 && rb == 1) {
        return Ok(1.0);
    }
    if ra == 1 || rb == 1 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let mut mi = 0.0;
    for (a, row) in t.counts.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (c * n / (t.row_sums[a] as f64 * t.col_sums[b] as f64)).ln();
        }
    }
    let denom = 0.5 * (entropy(&t.row_sums, n) + entropy(&t.col_sums, n));
    Ok((mi / denom).clamp(0.0, 1.0))
}
