//! Data matrices and the benchmark sampling families.
//!
//! The three families are one-parameter exponential tilts of a base measure
//! standardized to mean 0 and variance 1, so `theta = 0` is always the null.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::substream;

/// The benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Gaussian with mean `theta`, variance 1.
    Normal,
    /// Poisson with rate `exp(theta)`, shifted down by one.
    PoissonShifted,
    /// `+1` with probability `exp(theta) / (exp(theta) + exp(-theta))`, else `-1`.
    Rademacher,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Normal, Family::PoissonShifted, Family::Rademacher];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::PoissonShifted => "poisson",
            Family::Rademacher => "rademacher",
        }
    }

    /// Whether the base measure is supported on a discrete set.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, Family::Normal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "poisson" | "poisson-shifted" => Ok(Family::PoissonShifted),
            "rademacher" => Ok(Family::Rademacher),
            other => Err(Error::InvalidParameter(format!(
                "unknown family '{other}' (expected normal, poisson or rademacher)"
            ))),
        }
    }
}

/// A family member: the standardized base measure tilted by the natural
/// parameter `theta`. All three families accept any finite `theta >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySpec {
    pub family: Family,
    pub theta: f64,
}

impl FamilySpec {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "theta must be finite and nonnegative, got {theta}"
            )));
        }
        Ok(FamilySpec { family, theta })
    }

    /// The base measure (`theta = 0`).
    pub fn null(family: Family) -> Self {
        FamilySpec { family, theta: 0.0 }
    }

    /// One draw from the family member.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.sampler().sample(rng)
    }

    fn sampler(&self) -> EntrySampler {
        match self.family {
            Family::Normal => EntrySampler::Normal { mean: self.theta },
            Family::PoissonShifted => EntrySampler::Poisson(
                Poisson::new(self.theta.exp()).expect("rate is finite and positive"),
            ),
            Family::Rademacher => EntrySampler::Rademacher {
                p_plus: 1.0 / (1.0 + (-2.0 * self.theta).exp()),
            },
        }
    }
}

/// Precomputed per-entry sampler, so matrix generation does not rebuild
/// distribution tables for every cell.
enum EntrySampler {
    Normal { mean: f64 },
    Poisson(Poisson<f64>),
    Rademacher { p_plus: f64 },
}

impl EntrySampler {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            EntrySampler::Normal { mean } => {
                mean + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            }
            EntrySampler::Poisson(pois) => {
                let draw: f64 = pois.sample(rng);
                draw - 1.0
            }
            EntrySampler::Rademacher { p_plus } => {
                if rng.random_bool(*p_plus) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// A planted block: distinct row and column index sets plus the tilt applied
/// inside the block.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySpec {
    rows: Vec<usize>,
    cols: Vec<usize>,
    theta: f64,
}

impl AnomalySpec {
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>, theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "anomaly tilt must be finite and positive, got {theta}"
            )));
        }
        rows.sort_unstable();
        cols.sort_unstable();
        let distinct =
            rows.windows(2).all(|w| w[0] < w[1]) && cols.windows(2).all(|w| w[0] < w[1]);
        if rows.is_empty() || cols.is_empty() || !distinct {
            return Err(Error::InvalidParameter(
                "anomaly index sets must be non-empty and distinct".into(),
            ));
        }
        Ok(AnomalySpec { rows, cols, theta })
    }

    /// The block occupying the first `m` rows and first `n` columns.
    pub fn top_left(m: usize, n: usize, theta: f64) -> Result<Self> {
        AnomalySpec::new((0..m).collect(), (0..n).collect(), theta)
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Dense row-major matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimensions must be positive, got {rows} x {cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for a {rows} x {cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(DataMatrix { rows, cols, values })
    }

    /// Constructor for values already known to be finite.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        DataMatrix { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Sum of the entries indexed by `rows x cols`.
    pub fn block_sum(&self, rows: &[usize], cols: &[usize]) -> f64 {
        let mut total = 0.0;
        for &i in rows {
            let row = self.row(i);
            for &j in cols {
                total += row[j];
            }
        }
        total
    }

    /// A copy with each row's mean subtracted from its entries.
    pub fn center_rows(&self) -> DataMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            let row = self.row(i);
            let mean = row.iter().sum::<f64>() / self.cols as f64;
            values.extend(row.iter().map(|v| v - mean));
        }
        DataMatrix::from_parts(self.rows, self.cols, values)
    }

    /// FNV-1a over the dimensions and raw entry bits. Stable across runs and
    /// platforms; used to assert that paired evaluations saw the same data.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |word: u64| {
            for byte in word.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.rows as u64);
        feed(self.cols as u64);
        for v in &self.values {
            feed(v.to_bits());
        }
        hash
    }

    /// Parse a matrix from CSV text: one row per line, comma-separated,
    /// no header. Ragged rows and non-finite entries are rejected.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut cols = None;
        let mut values = Vec::new();
        let mut rows = 0;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty line inside matrix".into(),
                });
            }
            let mut count = 0;
            for field in line.split(',') {
                let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("'{}' is not a number", field.trim()),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite entry {value}"),
                    });
                }
                values.push(value);
                count += 1;
            }
            match cols {
                None => cols = Some(count),
                Some(expected) if expected != count => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("row has {count} entries, expected {expected}"),
                    });
                }
                _ => {}
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "empty input".into(),
            });
        }
        Ok(DataMatrix::from_parts(rows, cols.unwrap(), values))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DataMatrix::parse_csv(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let mut first = true;
            for v in self.row(i) {
                if !first {
                    out.push(',');
                }
                out.push_str(&v.to_string());
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Draw a `rows x cols` matrix with independent entries: cells inside the
/// anomaly block follow the family at the anomaly's tilt, all others follow
/// the base measure. A pure function of its arguments.
pub fn generate_matrix(
    rows: usize,
    cols: usize,
    anomaly: Option<&AnomalySpec>,
    family: Family,
    seed: u64,
) -> Result<DataMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "matrix dimensions must be positive, got {rows} x {cols}"
        )));
    }
    let mut in_rows = vec![false; rows];
    let mut in_cols = vec![false; cols];
    if let Some(spec) = anomaly {
        for &i in spec.rows() {
            *in_rows.get_mut(i).ok_or_else(|| {
                Error::IndexOutOfRange(format!("anomaly row {i} >= {rows}"))
            })? = true;
        }
        for &j in spec.cols() {
            *in_cols.get_mut(j).ok_or_else(|| {
                Error::IndexOutOfRange(format!("anomaly column {j} >= {cols}"))
            })? = true;
        }
    }

    let null = FamilySpec::null(family).sampler();
    let tilted = anomaly
        .map(|spec| FamilySpec::new(family, spec.theta()).map(|s| s.sampler()))
        .transpose()?;

    let mut rng = substream(seed, &[]);
    let mut values = Vec::with_capacity(rows * cols);
    for &row_hit in &in_rows {
        for &col_hit in &in_cols {
            let sampler = match &tilted {
                Some(t) if row_hit && col_hit => t,
                _ => &null,
            };
            values.push(sampler.sample(&mut rng));
        }
    }
    Ok(DataMatrix::from_parts(rows, cols, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn moments(family: Family, theta: f64, k: usize, seed: u64) -> (f64, f64, f64) {
        let spec = FamilySpec::new(family, theta).unwrap();
        let mut rng = substream(seed, &[]);
        let draws: Vec<f64> = (0..k).map(|_| spec.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / k as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / k as f64;
        (mean, var, m4)
    }

    #[test]
    fn null_mean_is_zero_for_every_family() {
        let k = 1_000_000;
        for family in Family::ALL {
            let (mean, _, _) = moments(family, 0.0, k, 11);
            let bound = 4.0 / (k as f64).sqrt();
            assert!(mean.abs() <= bound, "{family}: mean {mean} exceeds {bound}");
        }
    }

    #[test]
    fn null_variance_is_one_for_every_family() {
        let k = 1_000_000;
        for family in Family::ALL {
            let (_, var, m4) = moments(family, 0.0, k, 13);
            // plug-in standard error of the sample variance
            let se = ((m4 - var * var).max(0.0) / k as f64).sqrt();
            assert!(
                (var - 1.0).abs() <= 4.0 * se.max(1e-6),
                "{family}: variance {var} (se {se})"
            );
        }
    }

    #[test]
    fn rademacher_null_is_symmetric() {
        let spec = FamilySpec::null(Family::Rademacher);
        let mut rng = substream(17, &[]);
        let k = 1_000_000;
        let plus = (0..k).filter(|_| spec.sample(&mut rng) > 0.0).count();
        let freq = plus as f64 / k as f64;
        assert!((freq - 0.5).abs() <= 0.002, "P(+1) = {freq}");
    }

    #[test]
    fn means_increase_with_theta() {
        let k = 100_000;
        for family in Family::ALL {
            let (lo, _, _) = moments(family, 0.3, k, 19);
            let (hi, _, _) = moments(family, 0.8, k, 23);
            assert!(lo < hi, "{family}: mean at 0.3 ({lo}) >= mean at 0.8 ({hi})");
        }
    }

    #[test]
    fn theta_must_be_nonnegative_and_finite() {
        assert!(FamilySpec::new(Family::Normal, -0.1).is_err());
        assert!(FamilySpec::new(Family::Normal, f64::NAN).is_err());
        assert!(FamilySpec::new(Family::Normal, f64::INFINITY).is_err());
    }

    #[test]
    fn generated_null_columns_average_to_zero() {
        let reps = 100_000 / 10;
        let mut sums = [0.0; 3];
        let mut count = 0usize;
        for rep in 0..reps {
            let x = generate_matrix(3, 3, None, Family::Normal, rep as u64).unwrap();
            for (j, sum) in sums.iter_mut().enumerate() {
                for i in 0..3 {
                    *sum += x.get(i, j);
                }
            }
            count += 3;
        }
        for (j, sum) in sums.iter().enumerate() {
            let mean = sum / count as f64;
            assert!(mean.abs() <= 0.02, "column {j} mean {mean}");
        }
    }

    #[test]
    fn planted_block_mean_exceeds_background() {
        let anomaly = AnomalySpec::top_left(10, 15, 1.0).unwrap();
        let x = generate_matrix(200, 100, Some(&anomaly), Family::Normal, 5).unwrap();
        let block: Vec<usize> = (0..10).collect();
        let bcols: Vec<usize> = (0..15).collect();
        let block_mean = x.block_sum(&block, &bcols) / 150.0;
        let total: f64 = x.values().iter().sum();
        let rest_mean = (total - x.block_sum(&block, &bcols)) / (200.0 * 100.0 - 150.0);
        assert!(block_mean > rest_mean + 0.5);
    }

    #[test]
    fn generation_is_deterministic() {
        let anomaly = AnomalySpec::top_left(4, 3, 0.7).unwrap();
        let a = generate_matrix(20, 10, Some(&anomaly), Family::PoissonShifted, 99).unwrap();
        let b = generate_matrix(20, 10, Some(&anomaly), Family::PoissonShifted, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn anomaly_out_of_range_is_rejected() {
        let anomaly = AnomalySpec::new(vec![0, 5], vec![0], 1.0).unwrap();
        let err = generate_matrix(5, 5, Some(&anomaly), Family::Normal, 0).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange(_)));
    }

    #[test]
    fn csv_round_trip() {
        let x = generate_matrix(4, 7, None, Family::Normal, 3).unwrap();
        let parsed = DataMatrix::parse_csv(&x.to_csv_string()).unwrap();
        assert_eq!(x, parsed);
    }

    #[test]
    fn csv_rejects_ragged_rows_with_line_number() {
        let err = DataMatrix::parse_csv("1,2,3\n4,5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_non_finite_values() {
        assert!(DataMatrix::parse_csv("1,2\nNaN,4\n").is_err());
        assert!(DataMatrix::parse_csv("1,2\ninf,4\n").is_err());
        assert!(DataMatrix::parse_csv("1,2\nx,4\n").is_err());
    }

    #[test]
    fn center_rows_zeroes_row_means() {
        let x = generate_matrix(6, 9, None, Family::Normal, 8).unwrap();
        let centered = x.center_rows();
        for i in 0..6 {
            let mean: f64 = centered.row(i).iter().sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-12);
        }
    }
}
