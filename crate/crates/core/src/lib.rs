//! Detection of an anomalous submatrix in a large data matrix.
//!
//! The central object is the scan statistic: the maximum block sum over all
//! submatrices formed by `m` rows and `n` columns (arbitrary index sets, not
//! contiguous blocks). This crate provides
//!
//! * exact and hill-climbing evaluation of the scan ([`scan`]),
//! * calibration of the resulting test by within-row or global permutation,
//!   or by parametric Monte Carlo when the null distribution is known
//!   ([`calibrate`]),
//! * rank-transformed variants whose null tables can be built once per matrix
//!   shape and reused ([`rank`]),
//! * the critical signal threshold and related constants ([`theory`]),
//! * a simulation harness that sweeps signal strength around the threshold
//!   and exports per-replicate p-values as CSV ([`sweep`]).
//!
//! All randomness flows from explicit `u64` seeds through counter-based
//! sub-streams ([`rng`]), so every result is reproducible and independent of
//! thread scheduling.

pub mod calibrate;
pub mod error;
pub mod matrix;
pub mod rank;
pub mod rng;
pub mod scan;
pub mod sweep;
pub mod theory;

pub use calibrate::{
    oracle_pvalue_mc, permutation_pvalue_exact, permutation_pvalue_mc, sample_permutation,
    CalibrationScheme, Estimator, Permutation, PermutationScheme, Statistic, TestOutcome,
};
pub use error::{Error, Result};
pub use matrix::{generate_matrix, AnomalySpec, DataMatrix, Family, FamilySpec};
pub use rank::{
    build_null_table, build_or_load_null_table, rank_scan, rank_test, rank_transform, NullTable,
    NullTableKey, RankMatrix,
};
pub use scan::{
    scan_exact, scan_grid_bonferroni, scan_hillclimb, sum_statistic, ScanMethod, ScanResult,
    ScanStatistic, StatMethod, SubmatrixIndex,
};
pub use sweep::{export_sweep, run_sweep, Method, SweepConfig, SweepRecord, SweepResult};
pub use theory::{
    regime_report, scan_condition_lhs, theta_crit, upsilon, RegimeReport, UpsilonEstimate,
};

/// Seed used whenever the caller does not supply one. Fixed rather than drawn
/// from entropy so that repeated invocations agree byte for byte.
pub const DEFAULT_SEED: u64 = 1729;
