//! Rank transforms, the rank scan, and reusable permutation-null tables.
//!
//! Replacing entries by their ranks makes the null distribution of the scan a
//! pure permutation distribution: it depends only on the matrix shape, the
//! block size and the statistic method, never on the data. A [`NullTable`]
//! therefore needs to be built once per configuration and can calibrate any
//! number of datasets, and the test inherits the robustness of ranks.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::calibrate::{CalibrationScheme, Estimator, PermutationScheme, TestOutcome};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::rng::{substream, substream_seed, SubRng};
use crate::scan::{scan_exact, scan_hillclimb, ScanResult, StatMethod};

const TAG_TIES: u64 = 0;
const TAG_EVAL: u64 = 1;

/// Seeds used by [`rank_test`] for tie breaking and for evaluating the
/// observed rank scan, exposed so callers can reproduce the observed scan
/// (e.g. for its argmax).
pub fn rank_test_seeds(seed: u64) -> (u64, u64) {
    (
        substream_seed(seed, &[TAG_TIES]),
        substream_seed(seed, &[TAG_EVAL]),
    )
}

/// Integer ranks of a data matrix; larger values receive larger ranks.
///
/// Unidimensional: every row holds a permutation of `1..=N`.
/// Bidimensional: the whole matrix holds a permutation of `1..=M*N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    rows: usize,
    cols: usize,
    scheme: PermutationScheme,
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scheme(&self) -> PermutationScheme {
        self.scheme
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.ranks[row * self.cols + col]
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// The ranks as a float matrix, ready for the scan engine. Rank sums stay
    /// far below 2^53, so the conversion is exact.
    pub fn to_data_matrix(&self) -> DataMatrix {
        DataMatrix::from_parts(
            self.rows,
            self.cols,
            self.ranks.iter().map(|&r| r as f64).collect(),
        )
    }
}

/// Rank the entries of `x` under the given scheme, ascending with the values
/// (the largest value gets the largest rank). Ties are broken uniformly at
/// random from `seed`.
pub fn rank_transform(x: &DataMatrix, scheme: PermutationScheme, seed: u64) -> RankMatrix {
    let mut rng = substream(seed, &[]);
    let tie_keys: Vec<u64> = (0..x.values().len())
        .map(|_| rand::Rng::random::<u64>(&mut rng))
        .collect();

    let mut ranks = vec![0u32; x.values().len()];
    let mut assign = |cells: &mut Vec<usize>, offset: usize| {
        // ascending by (value, tie key): position p gets rank p + 1
        cells.sort_unstable_by(|&a, &b| {
            x.values()[a]
                .partial_cmp(&x.values()[b])
                .expect("matrix entries are finite")
                .then(tie_keys[a].cmp(&tie_keys[b]))
        });
        for (p, &cell) in cells.iter().enumerate() {
            ranks[cell] = (offset + p + 1) as u32;
        }
    };

    match scheme {
        PermutationScheme::Unidimensional => {
            for r in 0..x.rows() {
                let mut cells: Vec<usize> = (r * x.cols()..(r + 1) * x.cols()).collect();
                assign(&mut cells, 0);
            }
        }
        PermutationScheme::Bidimensional => {
            let mut cells: Vec<usize> = (0..x.values().len()).collect();
            assign(&mut cells, 0);
        }
    }

    RankMatrix {
        rows: x.rows(),
        cols: x.cols(),
        scheme,
        ranks,
    }
}

/// A draw from the null distribution of the rank matrix: ranks of i.i.d.
/// continuous data, i.e. uniform permutations.
fn random_rank_matrix(
    scheme: PermutationScheme,
    rows: usize,
    cols: usize,
    rng: &mut SubRng,
) -> RankMatrix {
    let ranks = match scheme {
        PermutationScheme::Unidimensional => {
            let mut ranks = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let mut row: Vec<u32> = (1..=cols as u32).collect();
                row.shuffle(rng);
                ranks.extend(row);
            }
            ranks
        }
        PermutationScheme::Bidimensional => {
            let mut ranks: Vec<u32> = (1..=(rows * cols) as u32).collect();
            ranks.shuffle(rng);
            ranks
        }
    };
    RankMatrix {
        rows,
        cols,
        scheme,
        ranks,
    }
}

/// The scan statistic on a rank matrix. Contracts are identical to the raw
/// scan; `seed` feeds hill-climb restarts.
pub fn rank_scan(
    ranks: &RankMatrix,
    m: usize,
    n: usize,
    method: StatMethod,
    seed: u64,
) -> Result<ScanResult> {
    let x = ranks.to_data_matrix();
    match method {
        StatMethod::Exact => scan_exact(&x, m, n),
        StatMethod::HillClimb { restarts } => scan_hillclimb(&x, m, n, restarts, seed),
    }
}

/// Identifies the configuration a null table calibrates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NullTableKey {
    pub rows: usize,
    pub cols: usize,
    pub m: usize,
    pub n: usize,
    pub scheme: PermutationScheme,
    /// Number of null draws (B).
    pub draws: usize,
    pub method: StatMethod,
    pub seed: u64,
}

impl NullTableKey {
    /// Canonical string form, also used to name cache files.
    pub fn canonical(&self) -> String {
        format!(
            "M{}_N{}_m{}_n{}_{}_B{}_{}_seed{}",
            self.rows,
            self.cols,
            self.m,
            self.n,
            self.scheme,
            self.draws,
            self.method.label().replace(':', "-"),
            self.seed
        )
    }

    pub fn file_name(&self) -> String {
        format!("ranknull_{}.txt", self.canonical())
    }

    /// The fields that must agree for a table to calibrate a dataset
    /// (everything except the table's own draw count and seed).
    fn matches_config(
        &self,
        rows: usize,
        cols: usize,
        m: usize,
        n: usize,
        scheme: PermutationScheme,
    ) -> bool {
        self.rows == rows && self.cols == cols && self.m == m && self.n == n
            && self.scheme == scheme
    }
}

/// Sorted null draws of the rank scan for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NullTable {
    key: NullTableKey,
    values: Vec<f64>, // ascending
}

impl NullTable {
    pub fn key(&self) -> &NullTableKey {
        &self.key
    }

    /// The sorted null draws.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of table draws at least as large as `observed`.
    pub fn count_at_least(&self, observed: f64) -> usize {
        self.values.len() - self.values.partition_point(|&v| v < observed)
    }

    /// Write the table under `dir` (created if needed), named from the key.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.key.file_name());
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<fs::File>, text: String| {
            out.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        write(&mut out, format!("M={}\n", self.key.rows))?;
        write(&mut out, format!("N={}\n", self.key.cols))?;
        write(&mut out, format!("m={}\n", self.key.m))?;
        write(&mut out, format!("n={}\n", self.key.n))?;
        write(&mut out, format!("scheme={}\n", self.key.scheme))?;
        write(&mut out, format!("B={}\n", self.key.draws))?;
        write(&mut out, format!("stat={}\n", self.key.method.label()))?;
        write(&mut out, format!("seed={}\n\n", self.key.seed))?;
        for v in &self.values {
            write(&mut out, format!("{v}\n"))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Read a table written by [`NullTable::save`].
    pub fn load(path: &Path) -> Result<NullTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let mut fields = std::collections::HashMap::new();
        for (idx, line) in lines.by_ref() {
            if line.is_empty() {
                break;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: idx + 1,
                message: "expected key=value header".into(),
            })?;
            fields.insert(key.to_string(), value.to_string());
        }
        let get = |name: &str| {
            fields.get(name).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing header field {name}"),
            })
        };
        let parse_usize = |name: &str| -> Result<usize> {
            get(name)?.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad integer in header field {name}"),
            })
        };
        let key = NullTableKey {
            rows: parse_usize("M")?,
            cols: parse_usize("N")?,
            m: parse_usize("m")?,
            n: parse_usize("n")?,
            scheme: get("scheme")?.parse()?,
            draws: parse_usize("B")?,
            method: StatMethod::parse(get("stat")?)?,
            seed: get("seed")?.parse().map_err(|_| Error::Parse {
                line: 1,
                message: "bad integer in header field seed".into(),
            })?,
        };
        let mut values = Vec::with_capacity(key.draws);
        for (idx, line) in lines {
            let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("'{line}' is not a number"),
            })?;
            values.push(v);
        }
        if values.len() != key.draws {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected {} values, found {}", key.draws, values.len()),
            });
        }
        Ok(NullTable { key, values })
    }

    /// Load the table for `key` from `dir` if a cache file exists.
    pub fn load_from_dir(dir: &Path, key: &NullTableKey) -> Result<Option<NullTable>> {
        let path = dir.join(key.file_name());
        if !path.exists() {
            return Ok(None);
        }
        let table = NullTable::load(&path)?;
        if &table.key != key {
            return Err(Error::TableKeyMismatch(format!(
                "cache file {} holds key {}, expected {}",
                path.display(),
                table.key.canonical(),
                key.canonical()
            )));
        }
        Ok(Some(table))
    }
}

/// Build the null table for `key`: `draws` independent rank matrices under
/// the scheme, scanned with the key's statistic method, sorted ascending.
/// Deterministic given the key.
pub fn build_null_table(key: &NullTableKey) -> Result<NullTable> {
    if key.draws == 0 {
        return Err(Error::InvalidParameter("B must be >= 1".into()));
    }
    if key.m == 0 || key.m > key.rows || key.n == 0 || key.n > key.cols {
        return Err(Error::InvalidParameter(format!(
            "block size {} x {} does not fit a {} x {} matrix",
            key.m, key.n, key.rows, key.cols
        )));
    }
    let mut values: Vec<f64> = (0..key.draws)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = substream(key.seed, &[TAG_TIES, i as u64]);
            let ranks = random_rank_matrix(key.scheme, key.rows, key.cols, &mut rng);
            let scan = rank_scan(
                &ranks,
                key.m,
                key.n,
                key.method,
                substream_seed(key.seed, &[TAG_EVAL, i as u64]),
            )?;
            Ok(scan.value)
        })
        .collect::<Result<Vec<_>>>()?;
    values.sort_unstable_by(f64::total_cmp);
    Ok(NullTable {
        key: key.clone(),
        values,
    })
}

/// Load the table for `key` from `dir` when cached, otherwise build it and
/// try to persist it. A failed cache write does not lose the computation; the
/// error comes back alongside the fresh table.
pub fn build_or_load_null_table(
    dir: Option<&Path>,
    key: &NullTableKey,
) -> Result<(NullTable, Option<Error>)> {
    if let Some(dir) = dir {
        if let Some(table) = NullTable::load_from_dir(dir, key)? {
            return Ok((table, None));
        }
    }
    let table = build_null_table(key)?;
    let write_error = dir.and_then(|d| table.save(d).err());
    Ok((table, write_error))
}

/// Rank-scan test calibrated by a prebuilt null table.
///
/// `seed` drives tie breaking and the observed statistic's evaluation and is
/// recorded in the outcome. Default estimator semantics are the add-one rule
/// `p = (1 + #{table >= observed}) / (B + 1)`.
pub fn rank_test(
    x: &DataMatrix,
    m: usize,
    n: usize,
    scheme: PermutationScheme,
    table: &NullTable,
    seed: u64,
    estimator: Estimator,
) -> Result<TestOutcome> {
    if estimator == Estimator::ExactEnumeration {
        return Err(Error::InvalidParameter(
            "rank_test is Monte Carlo calibrated; use plain or add-one".into(),
        ));
    }
    if !table.key.matches_config(x.rows(), x.cols(), m, n, scheme) {
        return Err(Error::TableKeyMismatch(format!(
            "table {} cannot calibrate a {} x {} matrix with block {m} x {n}, scheme {scheme}",
            table.key.canonical(),
            x.rows(),
            x.cols()
        )));
    }

    let (tie_seed, eval_seed) = rank_test_seeds(seed);
    let ranks = rank_transform(x, scheme, tie_seed);
    let observed = rank_scan(&ranks, m, n, table.key.method, eval_seed)?.value;
    let count = table.count_at_least(observed);
    let b = table.key.draws as f64;
    let p_value = match estimator {
        Estimator::McPlain => count as f64 / (b + 1.0),
        Estimator::McAddOne => (count as f64 + 1.0) / (b + 1.0),
        Estimator::ExactEnumeration => unreachable!(),
    };

    Ok(TestOutcome {
        statistic: observed,
        p_value,
        scheme: CalibrationScheme::Permutation(scheme),
        draws: table.key.draws,
        seed,
        estimator,
    })
}
