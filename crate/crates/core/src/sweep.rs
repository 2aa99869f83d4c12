//! The simulation harness: signal-strength sweeps with paired method
//! comparisons.
//!
//! For every multiplier `kappa` and every replicate, one matrix is generated
//! with an anomaly of strength `kappa * theta_crit` planted in the top-left
//! block, and *all* requested methods are evaluated on that same matrix. Rank
//! null tables are built once per scheme and shared across the whole sweep.
//! Everything derives from the master seed, so a sweep is reproducible byte
//! for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::calibrate::{
    oracle_pvalue_mc, permutation_pvalue_mc, Estimator, PermutationScheme,
};
use crate::error::{Error, Result};
use crate::matrix::{generate_matrix, AnomalySpec, Family};
use crate::rank::{build_null_table, rank_test, NullTable, NullTableKey};
use crate::rng::substream_seed;
use crate::scan::{ScanStatistic, StatMethod};
use crate::theory::theta_crit;
use crate::DEFAULT_SEED;

const TAG_GEN: u64 = 0;
const TAG_EVAL: u64 = 1;
const TAG_TABLE: u64 = 2;

/// The five calibration strategies the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Oracle,
    PermUni,
    PermBi,
    RankUni,
    RankBi,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Oracle,
        Method::PermUni,
        Method::PermBi,
        Method::RankUni,
        Method::RankBi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::PermUni => "perm_uni",
            Method::PermBi => "perm_bi",
            Method::RankUni => "rank_uni",
            Method::RankBi => "rank_bi",
        }
    }

    fn id(&self) -> u64 {
        match self {
            Method::Oracle => 0,
            Method::PermUni => 1,
            Method::PermBi => 2,
            Method::RankUni => 3,
            Method::RankBi => 4,
        }
    }

    pub fn scheme(&self) -> Option<PermutationScheme> {
        match self {
            Method::Oracle => None,
            Method::PermUni | Method::RankUni => Some(PermutationScheme::Unidimensional),
            Method::PermBi | Method::RankBi => Some(PermutationScheme::Bidimensional),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "oracle" => Ok(Method::Oracle),
            "perm_uni" => Ok(Method::PermUni),
            "perm_bi" => Ok(Method::PermBi),
            "rank_uni" => Ok(Method::RankUni),
            "rank_bi" => Ok(Method::RankBi),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected oracle, perm-uni, perm-bi, rank-uni or rank-bi)"
            ))),
        }
    }
}

/// Full description of one simulation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rows: usize,
    pub cols: usize,
    pub m: usize,
    pub n: usize,
    pub family: Family,
    /// Signal strengths as multiples of `theta_crit`, nonnegative and sorted.
    /// A multiplier of zero generates pure null matrices.
    pub theta_multipliers: Vec<f64>,
    pub replicates: usize,
    /// Monte Carlo draws per calibration (B).
    pub draws: usize,
    pub restarts: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub estimator: Estimator,
    /// Record wall-clock seconds per evaluation. Off by default so that
    /// exports are byte-reproducible; when off the seconds column is zero.
    pub record_timing: bool,
}

impl SweepConfig {
    /// Multipliers 0.5 to 1.5 in steps of 0.125.
    pub fn default_multipliers() -> Vec<f64> {
        (0..=8).map(|k| 0.5 + 0.125 * k as f64).collect()
    }

    /// Scaled-down profile that finishes in minutes on a laptop while keeping
    /// the regime qualitative: 60 x 40 matrix, 8 x 6 block, 50 replicates,
    /// B = 199. Uses 50 restarts: at this size the rank scans have a flat
    /// optimization landscape (every row of a within-row rank matrix holds
    /// the same values), and smaller budgets visibly under-optimize the
    /// observed statistic.
    pub fn desk() -> Self {
        SweepConfig {
            rows: 60,
            cols: 40,
            m: 8,
            n: 6,
            family: Family::Normal,
            theta_multipliers: Self::default_multipliers(),
            replicates: 50,
            draws: 199,
            restarts: 50,
            methods: Method::ALL.to_vec(),
            master_seed: DEFAULT_SEED,
            estimator: Estimator::McAddOne,
            record_timing: false,
        }
    }

    fn full_study(rows: usize, cols: usize, m: usize, n: usize, family: Family) -> Self {
        SweepConfig {
            rows,
            cols,
            m,
            n,
            family,
            theta_multipliers: Self::default_multipliers(),
            replicates: 200,
            draws: 500,
            restarts: 10,
            methods: Method::ALL.to_vec(),
            master_seed: DEFAULT_SEED,
            estimator: Estimator::McAddOne,
            record_timing: false,
        }
    }

    /// Named profiles: `desk`, `paper-normal-1` (200x100, 10x15),
    /// `paper-normal-2` (200x100, 30x10), and the Poisson counterparts
    /// `paper-poisson-1` / `paper-poisson-2`.
    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper-normal-1" => Some(Self::full_study(200, 100, 10, 15, Family::Normal)),
            "paper-normal-2" => Some(Self::full_study(200, 100, 30, 10, Family::Normal)),
            "paper-poisson-1" => {
                Some(Self::full_study(200, 100, 10, 15, Family::PoissonShifted))
            }
            "paper-poisson-2" => {
                Some(Self::full_study(200, 100, 30, 10, Family::PoissonShifted))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.rows || self.n == 0 || self.n > self.cols {
            return Err(Error::InvalidParameter(format!(
                "block size {} x {} does not fit a {} x {} matrix",
                self.m, self.n, self.rows, self.cols
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.draws == 0 {
            return Err(Error::InvalidParameter("B must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods requested".into()));
        }
        if self.theta_multipliers.is_empty() {
            return Err(Error::InvalidParameter("no theta multipliers".into()));
        }
        let sorted = self
            .theta_multipliers
            .windows(2)
            .all(|w| w[0] <= w[1]);
        let in_range = self
            .theta_multipliers
            .iter()
            .all(|&k| k.is_finite() && k >= 0.0);
        if !sorted || !in_range {
            return Err(Error::InvalidParameter(
                "theta multipliers must be nonnegative, finite and sorted".into(),
            ));
        }
        if self.estimator == Estimator::ExactEnumeration {
            return Err(Error::InvalidParameter(
                "sweeps are Monte Carlo calibrated; use plain or add-one".into(),
            ));
        }
        Ok(())
    }
}

/// One (method, multiplier, replicate) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub theta_multiplier: f64,
    pub replicate: usize,
    pub p_value: f64,
    pub statistic: f64,
    pub seconds: f64,
}

/// Per-(method, multiplier) aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummaryRow {
    pub method: Method,
    pub theta_multiplier: f64,
    pub replicates: usize,
    pub mean_p: f64,
    pub median_p: f64,
    pub q1_p: f64,
    pub q3_p: f64,
    /// Fraction of replicates with p <= 0.05.
    pub power_at_05: f64,
}

/// Everything a sweep produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub theta_crit: f64,
    /// Ordered by (method position in the config, multiplier index, replicate).
    pub records: Vec<SweepRecord>,
    pub summary: Vec<SweepSummaryRow>,
    /// Fingerprint of the matrix every method consumed at (multiplier index
    /// * replicates + replicate); evidence of the paired design.
    pub matrix_fingerprints: Vec<u64>,
}

/// Run the sweep described by `cfg`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with_progress(cfg, |_, _| {})
}

/// [`run_sweep`] with a callback invoked as (done, total) after each
/// (multiplier, replicate) pair completes. The callback may fire from worker
/// threads.
pub fn run_sweep_with_progress(
    cfg: &SweepConfig,
    on_pair_done: impl Fn(usize, usize) + Sync,
) -> Result<SweepResult> {
    cfg.validate()?;
    let crit = theta_crit(cfg.rows, cfg.cols, cfg.m, cfg.n)?;
    let stat_method = StatMethod::HillClimb {
        restarts: cfg.restarts,
    };
    let stat = ScanStatistic::new(cfg.m, cfg.n, stat_method);

    let table_for = |scheme: PermutationScheme| -> Result<NullTable> {
        build_null_table(&NullTableKey {
            rows: cfg.rows,
            cols: cfg.cols,
            m: cfg.m,
            n: cfg.n,
            scheme,
            draws: cfg.draws,
            method: stat_method,
            seed: substream_seed(cfg.master_seed, &[TAG_TABLE, scheme as u64]),
        })
    };
    let table_uni = if cfg.methods.contains(&Method::RankUni) {
        Some(table_for(PermutationScheme::Unidimensional)?)
    } else {
        None
    };
    let table_bi = if cfg.methods.contains(&Method::RankBi) {
        Some(table_for(PermutationScheme::Bidimensional)?)
    } else {
        None
    };

    let total = cfg.theta_multipliers.len() * cfg.replicates;
    let done = std::sync::atomic::AtomicUsize::new(0);

    // matrix fingerprint plus (p_value, statistic, seconds) per method
    type PairOutput = (u64, Vec<(f64, f64, f64)>);
    let per_pair: Vec<PairOutput> = (0..total)
        .into_par_iter()
        .map(|pair| -> Result<PairOutput> {
            let k = pair / cfg.replicates;
            let r = pair % cfg.replicates;
            let kappa = cfg.theta_multipliers[k];
            let anomaly = if kappa > 0.0 {
                Some(AnomalySpec::top_left(cfg.m, cfg.n, kappa * crit)?)
            } else {
                None
            };
            let x = generate_matrix(
                cfg.rows,
                cfg.cols,
                anomaly.as_ref(),
                cfg.family,
                substream_seed(cfg.master_seed, &[TAG_GEN, k as u64, r as u64]),
            )?;

            let mut evals = Vec::with_capacity(cfg.methods.len());
            for &method in &cfg.methods {
                let seed =
                    substream_seed(cfg.master_seed, &[TAG_EVAL, method.id(), k as u64, r as u64]);
                let started = Instant::now();
                let outcome = match method {
                    Method::Oracle => {
                        oracle_pvalue_mc(&x, cfg.family, cfg.draws, seed, &stat, cfg.estimator)?
                    }
                    Method::PermUni | Method::PermBi => permutation_pvalue_mc(
                        &x,
                        method.scheme().unwrap(),
                        cfg.draws,
                        seed,
                        &stat,
                        cfg.estimator,
                    )?,
                    Method::RankUni => rank_test(
                        &x,
                        cfg.m,
                        cfg.n,
                        PermutationScheme::Unidimensional,
                        table_uni.as_ref().unwrap(),
                        seed,
                        cfg.estimator,
                    )?,
                    Method::RankBi => rank_test(
                        &x,
                        cfg.m,
                        cfg.n,
                        PermutationScheme::Bidimensional,
                        table_bi.as_ref().unwrap(),
                        seed,
                        cfg.estimator,
                    )?,
                };
                let seconds = if cfg.record_timing {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                };
                evals.push((outcome.p_value, outcome.statistic, seconds));
            }
            let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            on_pair_done(finished, total);
            Ok((x.fingerprint(), evals))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records =
        Vec::with_capacity(cfg.methods.len() * cfg.theta_multipliers.len() * cfg.replicates);
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (k, &kappa) in cfg.theta_multipliers.iter().enumerate() {
            for r in 0..cfg.replicates {
                let (_, evals) = &per_pair[k * cfg.replicates + r];
                let (p_value, statistic, seconds) = evals[mi];
                records.push(SweepRecord {
                    method,
                    theta_multiplier: kappa,
                    replicate: r,
                    p_value,
                    statistic,
                    seconds,
                });
            }
        }
    }

    let summary = summarize(cfg, &records);
    Ok(SweepResult {
        config: cfg.clone(),
        theta_crit: crit,
        records,
        summary,
        matrix_fingerprints: per_pair.into_iter().map(|(fp, _)| fp).collect(),
    })
}

/// Interpolated quantile of an ascending slice (linear between order
/// statistics, as in most statistical software).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(cfg: &SweepConfig, records: &[SweepRecord]) -> Vec<SweepSummaryRow> {
    let mut rows = Vec::with_capacity(cfg.methods.len() * cfg.theta_multipliers.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (k, &kappa) in cfg.theta_multipliers.iter().enumerate() {
            let start = (mi * cfg.theta_multipliers.len() + k) * cfg.replicates;
            let chunk = &records[start..start + cfg.replicates];
            let mut ps: Vec<f64> = chunk.iter().map(|r| r.p_value).collect();
            ps.sort_unstable_by(f64::total_cmp);
            let count = ps.len();
            rows.push(SweepSummaryRow {
                method,
                theta_multiplier: kappa,
                replicates: count,
                mean_p: ps.iter().sum::<f64>() / count as f64,
                median_p: quantile(&ps, 0.5),
                q1_p: quantile(&ps, 0.25),
                q3_p: quantile(&ps, 0.75),
                power_at_05: ps.iter().filter(|&&p| p <= 0.05).count() as f64 / count as f64,
            });
        }
    }
    rows
}

/// Header of the per-record CSV export.
pub const RECORDS_HEADER: &str = "method,theta_multiplier,replicate,p_value,statistic,seconds";
/// Header of the summary CSV export.
pub const SUMMARY_HEADER: &str =
    "method,theta_multiplier,replicates,mean_p,median_p,q1_p,q3_p,power_at_005";

/// Write the per-record CSV to `path` and the summary CSV to the sibling path
/// `<stem>.summary.csv`. Returns (records path, summary path). Identical
/// results export to identical bytes.
pub fn export_sweep(result: &SweepResult, path: &Path) -> Result<(PathBuf, PathBuf)> {
    if result.records.is_empty() {
        return Err(Error::InvalidParameter(
            "nothing to export: the sweep produced no records".into(),
        ));
    }
    let summary_path = path.with_extension("summary.csv");

    let mut records_csv = String::from(RECORDS_HEADER);
    records_csv.push('\n');
    for r in &result.records {
        records_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method, r.theta_multiplier, r.replicate, r.p_value, r.statistic, r.seconds
        ));
    }
    fs::write(path, records_csv).map_err(|e| Error::io(path, e))?;

    let mut summary_csv = String::from(SUMMARY_HEADER);
    summary_csv.push('\n');
    for s in &result.summary {
        summary_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.method,
            s.theta_multiplier,
            s.replicates,
            s.mean_p,
            s.median_p,
            s.q1_p,
            s.q3_p,
            s.power_at_05
        ));
    }
    fs::write(&summary_path, summary_csv).map_err(|e| Error::io(&summary_path, e))?;

    Ok((path.to_path_buf(), summary_path))
}

/// Plain-text summary table (mean p and power per method and multiplier).
pub fn format_summary_table(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "theta_crit = {:.6}  ({} x {}, block {} x {}, {} family)\n",
        result.theta_crit,
        result.config.rows,
        result.config.cols,
        result.config.m,
        result.config.n,
        result.config.family
    ));
    out.push_str(&format!(
        "{:<10} {:>10} {:>10} {:>10} {:>12}\n",
        "method", "multiplier", "mean_p", "median_p", "power@0.05"
    ));
    for s in &result.summary {
        out.push_str(&format!(
            "{:<10} {:>10.3} {:>10.4} {:>10.4} {:>12.3}\n",
            s.method.as_str(),
            s.theta_multiplier,
            s.mean_p,
            s.median_p,
            s.power_at_05
        ));
    }
    out
}
