//! Adjusted Rand Index and Normalized Mutual Information between labelings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Co-occurrence counts of two labelings over the same items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

/// Maps arbitrary label ids onto `0..k` in ascending id order.
fn compress(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeSet<usize> = labels.iter().copied().collect();
    let code: BTreeMap<usize, usize> = ids.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    (labels.iter().map(|l| code[l]).collect(), code.len())
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "labelings have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let (ca, ka) = compress(a);
        let (cb, kb) = compress(b);
        let mut counts = vec![vec![0u64; kb]; ka];
        for (&i, &j) in ca.iter().zip(&cb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

fn pairs(n: u64) -> u128 {
    let n = u128::from(n);
    n * n.saturating_sub(1) / 2
}

fn entropy(marginals: &[u64], total: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Adjusted Rand Index. Two single-cluster labelings, or two all-singleton
/// labelings, score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.total < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two items".into()));
    }
    let index: u128 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_a: u128 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let sum_b: u128 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let all = pairs(t.total) as f64;
    let (index, sum_a, sum_b) = (index as f64, sum_a as f64, sum_b as f64);
    let expected = sum_a * sum_b / all;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies (natural log). Both constant → 1; exactly one constant → 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.total == 0 {
        return Err(Error::InvalidArgument("NMI needs at least one item".into()));
    }
    let n = t.total as f64;
    let ha = entropy(&t.row_sums, n);
    let hb = entropy(&t.col_sums, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                let ratio = n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64);
                mi += c / n * ratio.ln();
            }
        }
    }
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

/// `metric,value` report in CSV form.
pub fn format_report(entries: &[(&str, f64)]) -> String {
    let mut out = String::from("metric,value\n");
    for (name, value) in entries {
        writeln!(out, "{name},{value}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_relabeled() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        let relabeled = [5, 5, 0, 0, 9, 9, 9];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(ari(&a, &relabeled).unwrap(), 1.0);
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        assert!((nmi(&a, &relabeled).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_pair_counting_case() {
        // Pairs of [0,0,1,1] vs [0,0,1,2]: together in both = 1 ({0,1}),
        // together only in the first = 1 ({2,3}), apart in both = 4.
        // ARI = (1 − 2·1/6) / (0.5·(2 + 1) − 2·1/6) = (2/3) / (7/6) = 4/7.
        let v = ari(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
        assert!((v - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(ari(&[1, 1, 1], &[4, 4, 4]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[2, 0, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[3, 3], &[1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(ari(&[0, 1], &[0]).is_err());
        assert!(ari(&[0], &[0]).is_err());
        assert!(nmi(&[], &[]).is_err());
        assert!(nmi(&[0, 1], &[0, 1, 1]).is_err());
    }

    #[test]
    fn contingency_marginals() {
        let t = ContingencyTable::new(&[0, 0, 1, 7], &[2, 3, 3, 3]).unwrap();
        assert_eq!(t.counts(), &[vec![1, 1], vec![0, 1], vec![0, 1]]);
        assert_eq!(t.row_sums(), &[2, 1, 1]);
        assert_eq!(t.col_sums(), &[1, 3]);
        assert_eq!(t.total(), 4);
    }

    #[test]
    fn report_format() {
        assert_eq!(format_report(&[("ari", 0.5), ("nmi", 1.0)]), "metric,value\nari,0.5\nnmi,1\n");
    }
}
