//! Sum and scan statistics: exact search and alternating maximization.
//!
//! The scan statistic is the maximum, over all index-set pairs of `m` rows
//! and `n` columns, of the sum of the selected entries. Exact evaluation
//! enumerates the smaller of the two combination spaces, closing over the
//! other side (for a fixed row set, the optimal columns are the `n` largest
//! column sums, and vice versa). The hill climb alternates those closures
//! from random starting points until the index sets stop moving.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::rng::{substream, SubRng};

/// Largest number of (row set, column set) pairs `scan_exact` will enumerate.
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

const MAX_SWEEPS: usize = 1000;

/// An element of the search space: `m` distinct row indices and `n` distinct
/// column indices, both strictly increasing.
///
/// The derived ordering is lexicographic on (rows, cols), matching the
/// tie-break rule used by the scan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubmatrixIndex {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SubmatrixIndex {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>) -> Result<Self> {
        let increasing =
            rows.windows(2).all(|w| w[0] < w[1]) && cols.windows(2).all(|w| w[0] < w[1]);
        if rows.is_empty() || cols.is_empty() || !increasing {
            return Err(Error::InvalidParameter(
                "index sets must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(SubmatrixIndex { rows, cols })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Whether all indices fit inside `x`.
    pub fn fits(&self, x: &DataMatrix) -> bool {
        self.rows.last().is_some_and(|&i| i < x.rows())
            && self.cols.last().is_some_and(|&j| j < x.cols())
    }
}

/// How a scan value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMethod {
    Exact,
    HillClimb,
}

/// Outcome of a scan: the achieved block sum and one maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub value: f64,
    pub argmax: SubmatrixIndex,
    pub method: ScanMethod,
    pub restarts_used: usize,
    /// Alternation sweeps until the fixed point, one entry per restart.
    pub converged_iters: Vec<usize>,
}

/// Sum of all matrix entries.
pub fn sum_statistic(x: &DataMatrix) -> f64 {
    x.values().iter().sum()
}

fn validate_block_dims(x: &DataMatrix, m: usize, n: usize) -> Result<()> {
    if m == 0 || m > x.rows() || n == 0 || n > x.cols() {
        return Err(Error::InvalidParameter(format!(
            "block size {m} x {n} does not fit a {} x {} matrix",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num.checked_mul((n - i) as u128)?;
        num /= (i + 1) as u128;
        if num > u64::MAX as u128 {
            return None;
        }
    }
    Some(num as u64)
}

/// Indices of the `k` largest scores, ties to the smaller index, returned in
/// increasing order. The (score desc, index asc) comparator is a strict total
/// order, so the selected set is unique and scheduling-independent.
fn top_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let by_rank = |&a: &usize, &b: &usize| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

fn row_sums_over(x: &DataMatrix, cols: &[usize]) -> Vec<f64> {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            cols.iter().map(|&j| row[j]).sum()
        })
        .collect()
}

fn col_sums_over(x: &DataMatrix, rows: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; x.cols()];
    for &i in rows {
        for (j, v) in x.row(i).iter().enumerate() {
            sums[j] += v;
        }
    }
    sums
}

struct Best {
    value: f64,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Best {
    fn offer(this: &mut Option<Best>, value: f64, rows: &[usize], cols: &[usize]) {
        let better = match this {
            None => true,
            Some(b) => {
                value > b.value
                    || (value == b.value
                        && (rows, cols) < (b.rows.as_slice(), b.cols.as_slice()))
            }
        };
        if better {
            *this = Some(Best {
                value,
                rows: rows.to_vec(),
                cols: cols.to_vec(),
            });
        }
    }
}

/// Exact scan by enumeration. Ties are broken toward the lexicographically
/// smallest (row set, column set).
///
/// Errors with [`Error::EnumerationTooLarge`] when the search space exceeds
/// `DEFAULT_ENUMERATION_CAP` pairs; use [`scan_hillclimb`] in that case.
pub fn scan_exact(x: &DataMatrix, m: usize, n: usize) -> Result<ScanResult> {
    scan_exact_capped(x, m, n, DEFAULT_ENUMERATION_CAP)
}

/// [`scan_exact`] with an explicit cap on the number of enumerated pairs.
pub fn scan_exact_capped(x: &DataMatrix, m: usize, n: usize, cap: u64) -> Result<ScanResult> {
    validate_block_dims(x, m, n)?;
    let row_combos = binomial(x.rows() as u64, m as u64);
    let col_combos = binomial(x.cols() as u64, n as u64);
    let pairs = row_combos.zip(col_combos).and_then(|(a, b)| a.checked_mul(b));
    match pairs {
        Some(p) if p <= cap => {}
        _ => {
            return Err(Error::EnumerationTooLarge(format!(
                "search space C({},{}) * C({},{}) exceeds the cap of {cap}; \
                 use scan_hillclimb instead",
                x.rows(),
                m,
                x.cols(),
                n
            )));
        }
    }

    let mut best: Option<Best> = None;
    if row_combos <= col_combos {
        for rows in (0..x.rows()).combinations(m) {
            let sums = col_sums_over(x, &rows);
            let cols = top_indices(&sums, n);
            let value = cols.iter().map(|&j| sums[j]).sum();
            Best::offer(&mut best, value, &rows, &cols);
        }
    } else {
        for cols in (0..x.cols()).combinations(n) {
            let sums = row_sums_over(x, &cols);
            let rows = top_indices(&sums, m);
            let value = rows.iter().map(|&i| sums[i]).sum();
            Best::offer(&mut best, value, &rows, &cols);
        }
    }

    let best = best.expect("search space is non-empty");
    // report the block sum in canonical (row-major) summation order so the
    // value recomputes bit-for-bit from the argmax
    let value = x.block_sum(&best.rows, &best.cols);
    Ok(ScanResult {
        value,
        argmax: SubmatrixIndex {
            rows: best.rows,
            cols: best.cols,
        },
        method: ScanMethod::Exact,
        restarts_used: 0,
        converged_iters: Vec::new(),
    })
}

/// Which side the hill climb randomizes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitSide {
    /// Start from a random column set, then pick the best rows.
    #[default]
    Columns,
    /// Start from a random row set, then pick the best columns.
    Rows,
}

/// Tuning knobs for [`scan_hillclimb_opts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HillClimbOptions {
    pub restarts: usize,
    pub seed: u64,
    pub init_side: InitSide,
    /// Safety cap on alternation sweeps per restart.
    pub max_sweeps: usize,
}

impl HillClimbOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        HillClimbOptions {
            restarts,
            seed,
            init_side: InitSide::default(),
            max_sweeps: MAX_SWEEPS,
        }
    }
}

/// Multi-restart alternating maximization of the block sum.
///
/// Each restart draws a uniformly random starting set, then alternates
/// "best `m` rows given the columns" / "best `n` columns given the rows"
/// (ties to the smaller index) until the pair of index sets repeats. The
/// best restart wins; on equal values the earlier restart is kept, so the
/// result does not depend on scheduling.
pub fn scan_hillclimb(
    x: &DataMatrix,
    m: usize,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<ScanResult> {
    scan_hillclimb_opts(x, m, n, &HillClimbOptions::new(restarts, seed))
}

/// [`scan_hillclimb`] with explicit options.
pub fn scan_hillclimb_opts(
    x: &DataMatrix,
    m: usize,
    n: usize,
    opts: &HillClimbOptions,
) -> Result<ScanResult> {
    validate_block_dims(x, m, n)?;
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut iters = Vec::with_capacity(opts.restarts);
    for restart in 0..opts.restarts {
        let mut rng = substream(opts.seed, &[restart as u64]);
        let (value, rows, cols, sweeps) = climb_once(x, m, n, opts, &mut rng)?;
        iters.push(sweeps);
        if best.as_ref().is_none_or(|(bv, _, _)| value > *bv) {
            best = Some((value, rows, cols));
        }
    }

    let (value, rows, cols) = best.expect("at least one restart");
    Ok(ScanResult {
        value,
        argmax: SubmatrixIndex { rows, cols },
        method: ScanMethod::HillClimb,
        restarts_used: opts.restarts,
        converged_iters: iters,
    })
}

fn random_subset(rng: &mut SubRng, len: usize, k: usize) -> Vec<usize> {
    let mut picked = rand::seq::index::sample(rng, len, k).into_vec();
    picked.sort_unstable();
    picked
}

fn climb_once(
    x: &DataMatrix,
    m: usize,
    n: usize,
    opts: &HillClimbOptions,
    rng: &mut SubRng,
) -> Result<(f64, Vec<usize>, Vec<usize>, usize)> {
    let mut rows: Vec<usize> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    match opts.init_side {
        InitSide::Columns => cols = random_subset(rng, x.cols(), n),
        InitSide::Rows => rows = random_subset(rng, x.rows(), m),
    }

    let mut prev_value = f64::NEG_INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let (new_rows, new_cols) = match opts.init_side {
            InitSide::Columns => {
                let r = top_indices(&row_sums_over(x, &cols), m);
                let c = top_indices(&col_sums_over(x, &r), n);
                (r, c)
            }
            InitSide::Rows => {
                let c = top_indices(&col_sums_over(x, &rows), n);
                let r = top_indices(&row_sums_over(x, &c), m);
                (r, c)
            }
        };
        let fixed_point = new_rows == rows && new_cols == cols;
        rows = new_rows;
        cols = new_cols;

        let value = x.block_sum(&rows, &cols);
        debug_assert!(
            value >= prev_value - 1e-9 * (1.0 + prev_value.abs()),
            "objective decreased: {prev_value} -> {value}"
        );
        prev_value = value;

        if fixed_point {
            return Ok((value, rows, cols, sweep));
        }
    }
    Err(Error::NoFixedPoint(opts.max_sweeps))
}

/// Bonferroni combination over a grid of block sizes:
/// `min(1, k * min p)` for `k` sizes.
pub fn scan_grid_bonferroni<F>(sizes: &[(usize, usize)], mut per_size_pvalue: F) -> Result<f64>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("empty size grid".into()));
    }
    let mut min_p = f64::INFINITY;
    for &(m, n) in sizes {
        let p = per_size_pvalue(m, n)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "p-value {p} for size {m} x {n} is outside [0, 1]"
            )));
        }
        min_p = min_p.min(p);
    }
    Ok((sizes.len() as f64 * min_p).min(1.0))
}

/// Statistic evaluation strategy, also used as part of null-table keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatMethod {
    Exact,
    HillClimb { restarts: usize },
}

impl StatMethod {
    /// Canonical label, e.g. `exact` or `hillclimb:10`.
    pub fn label(&self) -> String {
        match self {
            StatMethod::Exact => "exact".into(),
            StatMethod::HillClimb { restarts } => format!("hillclimb:{restarts}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(StatMethod::Exact);
        }
        if let Some(rest) = s.strip_prefix("hillclimb:") {
            let restarts: usize = rest.parse().map_err(|_| {
                Error::InvalidParameter(format!("bad restart count in '{s}'"))
            })?;
            return Ok(StatMethod::HillClimb { restarts });
        }
        Err(Error::InvalidParameter(format!(
            "unknown statistic method '{s}' (expected 'exact' or 'hillclimb:<restarts>')"
        )))
    }
}

/// The scan statistic at a fixed block size, evaluated exactly or by hill
/// climbing. `seed` feeds the hill-climb restarts and is ignored for exact
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanStatistic {
    pub m: usize,
    pub n: usize,
    pub method: StatMethod,
}

impl ScanStatistic {
    pub fn new(m: usize, n: usize, method: StatMethod) -> Self {
        ScanStatistic { m, n, method }
    }

    pub fn scan(&self, x: &DataMatrix, seed: u64) -> Result<ScanResult> {
        match self.method {
            StatMethod::Exact => scan_exact(x, self.m, self.n),
            StatMethod::HillClimb { restarts } => {
                scan_hillclimb(x, self.m, self.n, restarts, seed)
            }
        }
    }
}
