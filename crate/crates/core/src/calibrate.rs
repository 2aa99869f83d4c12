//! Calibration of a test statistic by permutation or by parametric Monte
//! Carlo.
//!
//! Two permutation groups are supported: unidimensional (entries are shuffled
//! within their own row) and bidimensional (the flattened matrix is shuffled
//! as a whole). Both are groups, which is what makes the resulting p-value
//! valid under the corresponding exchangeability assumption. The parametric
//! oracle instead draws fresh null matrices from a known base measure and is
//! the benchmark the nonparametric tests are compared against.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{generate_matrix, DataMatrix, Family};
use crate::rng::{substream, substream_seed, SubRng};
use crate::scan::ScanStatistic;

/// Largest permutation group `permutation_pvalue_exact` will enumerate.
pub const DEFAULT_GROUP_CAP: u64 = 1_000_000;

const TAG_OBSERVED: u64 = 0;
const TAG_DRAW: u64 = 1;
const TAG_EVAL: u64 = 2;

/// Seed used for the observed-statistic evaluation inside the calibration
/// routines. Exposed so callers can recompute the observed scan (e.g. for its
/// argmax) and land on exactly the same value.
pub fn observed_seed(seed: u64) -> u64 {
    substream_seed(seed, &[TAG_OBSERVED])
}

/// How entries are exchanged under the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PermutationScheme {
    /// Entries are permuted within their row.
    Unidimensional,
    /// All entries are permuted jointly.
    Bidimensional,
}

impl PermutationScheme {
    pub const ALL: [PermutationScheme; 2] = [
        PermutationScheme::Unidimensional,
        PermutationScheme::Bidimensional,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PermutationScheme::Unidimensional => "uni",
            PermutationScheme::Bidimensional => "bi",
        }
    }
}

impl fmt::Display for PermutationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PermutationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uni" | "unidimensional" => Ok(PermutationScheme::Unidimensional),
            "bi" | "bidimensional" => Ok(PermutationScheme::Bidimensional),
            other => Err(Error::InvalidParameter(format!(
                "unknown permutation scheme '{other}' (expected uni or bi)"
            ))),
        }
    }
}

/// What a p-value was calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationScheme {
    Permutation(PermutationScheme),
    ParametricOracle,
}

impl fmt::Display for CalibrationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationScheme::Permutation(s) => write!(f, "perm-{s}"),
            CalibrationScheme::ParametricOracle => f.write_str("oracle"),
        }
    }
}

/// How the p-value is computed from the exceedance count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Full-group enumeration: `count / |group|`.
    ExactEnumeration,
    /// Monte Carlo `count / (B + 1)`. Can return zero.
    McPlain,
    /// Monte Carlo `(count + 1) / (B + 1)`. Never below `1 / (B + 1)`, which
    /// keeps the finite-sample validity guarantee. The default.
    McAddOne,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::ExactEnumeration => "exact-enum",
            Estimator::McPlain => "plain",
            Estimator::McAddOne => "add-one",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "mc-plain" => Ok(Estimator::McPlain),
            "add-one" | "addone" | "mc-add-one" => Ok(Estimator::McAddOne),
            "exact-enum" => Ok(Estimator::ExactEnumeration),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator '{other}' (expected plain or add-one)"
            ))),
        }
    }
}

/// Result of one calibrated test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub scheme: CalibrationScheme,
    /// Monte Carlo draws B, or the group size for exact enumeration.
    pub draws: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

/// A statistic that may use its own randomness (e.g. hill-climb restarts).
/// `seed` isolates that randomness per evaluation so calibration can hand a
/// fresh sub-stream to every permuted or simulated matrix.
pub trait Statistic: Sync {
    fn evaluate(&self, x: &DataMatrix, seed: u64) -> Result<f64>;
}

impl<F> Statistic for F
where
    F: Fn(&DataMatrix, u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, x: &DataMatrix, seed: u64) -> Result<f64> {
        self(x, seed)
    }
}

impl Statistic for ScanStatistic {
    fn evaluate(&self, x: &DataMatrix, seed: u64) -> Result<f64> {
        self.scan(x, seed).map(|r| r.value)
    }
}

/// A relabeling of matrix cells: entry `k` (row-major) of the permuted matrix
/// is entry `map[k]` of the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    rows: usize,
    cols: usize,
    map: Vec<u32>,
}

impl Permutation {
    pub fn identity(rows: usize, cols: usize) -> Self {
        Permutation {
            rows,
            cols,
            map: (0..(rows * cols) as u32).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(k, &v)| k as u32 == v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Source cell (row-major) feeding destination cell `k`.
    pub fn source(&self, k: usize) -> usize {
        self.map[k] as usize
    }

    /// The permuted matrix.
    pub fn apply(&self, x: &DataMatrix) -> DataMatrix {
        assert_eq!((self.rows, self.cols), (x.rows(), x.cols()));
        let src = x.values();
        let values = self.map.iter().map(|&k| src[k as usize]).collect();
        DataMatrix::from_parts(self.rows, self.cols, values)
    }

    /// Group composition: `f.compose(&g).apply(x) == f.apply(&g.apply(x))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let map = self.map.iter().map(|&k| other.map[k as usize]).collect();
        Permutation {
            rows: self.rows,
            cols: self.cols,
            map,
        }
    }

    fn from_map(rows: usize, cols: usize, map: Vec<u32>) -> Self {
        Permutation { rows, cols, map }
    }
}

/// Uniform draw from the scheme's permutation group.
pub fn sample_permutation(
    scheme: PermutationScheme,
    rows: usize,
    cols: usize,
    rng: &mut SubRng,
) -> Permutation {
    let mut map: Vec<u32> = (0..(rows * cols) as u32).collect();
    match scheme {
        PermutationScheme::Unidimensional => {
            for r in 0..rows {
                map[r * cols..(r + 1) * cols].shuffle(rng);
            }
        }
        PermutationScheme::Bidimensional => map.shuffle(rng),
    }
    Permutation::from_map(rows, cols, map)
}

fn group_size(scheme: PermutationScheme, rows: usize, cols: usize) -> Option<u64> {
    let factorial = |n: usize| -> Option<u64> {
        (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
    };
    match scheme {
        PermutationScheme::Bidimensional => factorial(rows * cols),
        PermutationScheme::Unidimensional => {
            let per_row = factorial(cols)?;
            (0..rows).try_fold(1u64, |acc, _| acc.checked_mul(per_row))
        }
    }
}

fn enumerate_group(
    scheme: PermutationScheme,
    rows: usize,
    cols: usize,
) -> Box<dyn Iterator<Item = Vec<u32>>> {
    match scheme {
        PermutationScheme::Bidimensional => {
            Box::new((0..(rows * cols) as u32).permutations(rows * cols))
        }
        PermutationScheme::Unidimensional => {
            let per_row: Vec<Vec<Vec<u32>>> = (0..rows)
                .map(|r| {
                    let base = (r * cols) as u32;
                    (base..base + cols as u32)
                        .permutations(cols)
                        .collect()
                })
                .collect();
            Box::new(
                per_row
                    .into_iter()
                    .multi_cartesian_product()
                    .map(|parts| parts.into_iter().flatten().collect()),
            )
        }
    }
}

fn mc_pvalue(estimator: Estimator, count: usize, draws: usize) -> Result<f64> {
    match estimator {
        Estimator::McPlain => Ok(count as f64 / (draws as f64 + 1.0)),
        Estimator::McAddOne => Ok((count as f64 + 1.0) / (draws as f64 + 1.0)),
        Estimator::ExactEnumeration => Err(Error::InvalidParameter(
            "exact-enum estimator is only produced by permutation_pvalue_exact".into(),
        )),
    }
}

/// Number of draws at least as large as the observed value.
pub fn exceedance_count(observed: f64, draws: &[f64]) -> usize {
    draws.iter().filter(|&&v| v >= observed).count()
}

/// Exact permutation p-value by full group enumeration.
///
/// Feasible only for tiny matrices; the identity element is counted without
/// re-evaluating the statistic (its value *is* the observed one), so the
/// p-value is never below `1 / |group|`.
pub fn permutation_pvalue_exact<S: Statistic>(
    x: &DataMatrix,
    scheme: PermutationScheme,
    stat: &S,
    seed: u64,
) -> Result<TestOutcome> {
    permutation_pvalue_exact_capped(x, scheme, stat, seed, DEFAULT_GROUP_CAP)
}

/// [`permutation_pvalue_exact`] with an explicit group-size cap.
pub fn permutation_pvalue_exact_capped<S: Statistic>(
    x: &DataMatrix,
    scheme: PermutationScheme,
    stat: &S,
    seed: u64,
    cap: u64,
) -> Result<TestOutcome> {
    let size = match group_size(scheme, x.rows(), x.cols()) {
        Some(s) if s <= cap => s,
        _ => {
            return Err(Error::EnumerationTooLarge(format!(
                "permutation group for a {} x {} matrix exceeds the cap of {cap}; \
                 use permutation_pvalue_mc instead",
                x.rows(),
                x.cols()
            )));
        }
    };

    let observed = stat.evaluate(x, observed_seed(seed))?;
    let mut count = 0u64;
    for (idx, map) in enumerate_group(scheme, x.rows(), x.cols()).enumerate() {
        let perm = Permutation::from_map(x.rows(), x.cols(), map);
        if perm.is_identity() {
            count += 1;
            continue;
        }
        let value = stat.evaluate(&perm.apply(x), substream_seed(seed, &[TAG_EVAL, idx as u64]))?;
        if value >= observed {
            count += 1;
        }
    }

    Ok(TestOutcome {
        statistic: observed,
        p_value: count as f64 / size as f64,
        scheme: CalibrationScheme::Permutation(scheme),
        draws: size as usize,
        seed,
        estimator: Estimator::ExactEnumeration,
    })
}

/// Monte Carlo permutation p-value: draw `b` uniform permutations and count
/// how many permuted statistics reach the observed one. Each permutation's
/// statistic gets its own evaluation sub-stream, so the calibration matches
/// the (possibly randomized) statistic used on the data. Deterministic given
/// `seed`, independent of thread scheduling.
pub fn permutation_pvalue_mc<S: Statistic>(
    x: &DataMatrix,
    scheme: PermutationScheme,
    b: usize,
    seed: u64,
    stat: &S,
    estimator: Estimator,
) -> Result<TestOutcome> {
    if b == 0 {
        return Err(Error::InvalidParameter("B must be >= 1".into()));
    }
    let observed = stat.evaluate(x, observed_seed(seed))?;
    let count = (0..b)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = substream(seed, &[TAG_DRAW, i as u64]);
            let perm = sample_permutation(scheme, x.rows(), x.cols(), &mut rng);
            let value =
                stat.evaluate(&perm.apply(x), substream_seed(seed, &[TAG_EVAL, i as u64]))?;
            Ok(usize::from(value >= observed))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(TestOutcome {
        statistic: observed,
        p_value: mc_pvalue(estimator, count, b)?,
        scheme: CalibrationScheme::Permutation(scheme),
        draws: b,
        seed,
        estimator,
    })
}

/// Parametric Monte Carlo calibration: compare the observed statistic with
/// `b` statistics of fresh null matrices drawn from the family's base
/// measure. This is the oracle benchmark; it requires knowing the null.
pub fn oracle_pvalue_mc<S: Statistic>(
    x: &DataMatrix,
    family: Family,
    b: usize,
    seed: u64,
    stat: &S,
    estimator: Estimator,
) -> Result<TestOutcome> {
    if b == 0 {
        return Err(Error::InvalidParameter("B must be >= 1".into()));
    }
    let observed = stat.evaluate(x, observed_seed(seed))?;
    let count = (0..b)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let null = generate_matrix(
                x.rows(),
                x.cols(),
                None,
                family,
                substream_seed(seed, &[TAG_DRAW, i as u64]),
            )?;
            let value = stat.evaluate(&null, substream_seed(seed, &[TAG_EVAL, i as u64]))?;
            Ok(usize::from(value >= observed))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(TestOutcome {
        statistic: observed,
        p_value: mc_pvalue(estimator, count, b)?,
        scheme: CalibrationScheme::ParametricOracle,
        draws: b,
        seed,
        estimator,
    })
}
