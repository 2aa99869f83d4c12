//! Shared test oracles, deliberately written against the public API only and
//! along different code paths than the library (plain recursion and double
//! loops, no closed-over column sums).

#![allow(dead_code)]

use subscan_core::DataMatrix;

/// All k-subsets of 0..len in lexicographic order, by recursion.
pub fn subsets(len: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, len: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            out.push(prefix.clone());
            return;
        }
        for next in start..=len - k {
            prefix.push(next);
            go(next + 1, len, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(0, len, k, &mut Vec::new(), &mut out);
    out
}

/// Brute-force scan: enumerate every (row set, column set) pair and sum the
/// selected entries one by one. First maximizer in lexicographic enumeration
/// order, i.e. the lexicographically smallest one.
pub fn brute_force_scan(x: &DataMatrix, m: usize, n: usize) -> (f64, Vec<usize>, Vec<usize>) {
    let row_sets = subsets(x.rows(), m);
    let col_sets = subsets(x.cols(), n);
    let mut best: Option<(f64, &[usize], &[usize])> = None;
    for rows in &row_sets {
        for cols in &col_sets {
            let mut sum = 0.0;
            for &i in rows {
                for &j in cols {
                    sum += x.get(i, j);
                }
            }
            if best.is_none() || sum > best.unwrap().0 {
                best = Some((sum, rows, cols));
            }
        }
    }
    let (value, rows, cols) = best.expect("non-empty search space");
    (value, rows.to_vec(), cols.to_vec())
}

/// Plain double-loop total.
pub fn naive_sum(x: &DataMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            total += x.get(i, j);
        }
    }
    total
}

/// Standard error of a binomial proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
