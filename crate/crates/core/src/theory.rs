//! Threshold constants and asymptotic-regime diagnostics.
//!
//! `theta_crit` separates the detectable from the undetectable signal regime
//! for the scan test at a given configuration; the rank variants pay a
//! further factor of `1 / (2 sqrt(3) Upsilon)`, where `Upsilon` is a pairwise
//! exceedance moment of the base measure.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{Family, FamilySpec};
use crate::rng::substream;

/// `Upsilon` for the standard normal: `1 / (2 sqrt(pi))`.
pub const UPSILON_NORMAL: f64 = 0.282_094_791_773_878_14;

fn validate_dims(rows: usize, cols: usize, m: usize, n: usize) -> Result<()> {
    if rows == 0 || cols == 0 || m == 0 || m > rows || n == 0 || n > cols {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= m <= M and 1 <= n <= N, got M={rows}, N={cols}, m={m}, n={n}"
        )));
    }
    Ok(())
}

/// Critical signal level for the scan at block size `m x n` in an `M x N`
/// matrix: `sqrt(2 (m ln(M/m) + n ln(N/n)) / (m n))`. Zero when the block
/// fills the whole matrix.
pub fn theta_crit(rows: usize, cols: usize, m: usize, n: usize) -> Result<f64> {
    validate_dims(rows, cols, m, n)?;
    let lambda = m as f64 * (rows as f64 / m as f64).ln()
        + n as f64 * (cols as f64 / n as f64).ln();
    Ok((2.0 * lambda / (m as f64 * n as f64)).sqrt())
}

/// `theta / theta_crit`. Values above 1 put the scan test in its
/// asymptotically powerful regime; the rank variants need values above
/// [`rank_efficiency_threshold`].
pub fn scan_condition_lhs(
    theta: f64,
    rows: usize,
    cols: usize,
    m: usize,
    n: usize,
) -> Result<f64> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "theta must be finite and nonnegative, got {theta}"
        )));
    }
    let crit = theta_crit(rows, cols, m, n)?;
    if crit == 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate configuration: the block fills the whole matrix".into(),
        ));
    }
    Ok(theta / crit)
}

/// The rank tests' efficiency price: `1 / (2 sqrt(3) Upsilon)`.
pub fn rank_efficiency_threshold(upsilon: f64) -> f64 {
    1.0 / (2.0 * 3f64.sqrt() * upsilon)
}

/// Monte Carlo estimate of `Upsilon`, with an exact value where one is
/// available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsilonEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Closed form for the normal family; full support enumeration for the
    /// discrete families.
    pub exact: Option<f64>,
}

impl UpsilonEstimate {
    /// The exact value when known, else the Monte Carlo estimate.
    pub fn best(&self) -> f64 {
        self.exact.unwrap_or(self.estimate)
    }
}

/// `Upsilon = E[Z 1{Z > Y}] + E[Z 1{Z = Y}] / 2` with `Y, Z` i.i.d. from the
/// family's base measure. Estimated from `samples` pairs (at least 10^4);
/// deterministic given `seed` and independent of thread scheduling.
pub fn upsilon(family: Family, samples: usize, seed: u64) -> Result<UpsilonEstimate> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10^4 samples for a usable estimate, got {samples}"
        )));
    }
    let spec = FamilySpec::null(family);
    let chunks = 64usize;
    let per_chunk = samples / chunks;
    let remainder = samples % chunks;

    let partials: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = per_chunk + usize::from(c < remainder);
            let mut rng = substream(seed, &[c as u64]);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let y = spec.sample(&mut rng);
                let z = spec.sample(&mut rng);
                let g = if z > y {
                    z
                } else if z == y {
                    0.5 * z
                } else {
                    0.0
                };
                sum += g;
                sum_sq += g * g;
            }
            (sum, sum_sq, count)
        })
        .collect();

    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, q), &(cs, cq, _)| (s + cs, q + cq));
    let k = samples as f64;
    let mean = sum / k;
    let variance = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    let std_error = (variance / k).sqrt();

    let exact = match family {
        Family::Normal => Some(UPSILON_NORMAL),
        Family::PoissonShifted | Family::Rademacher => Some(upsilon_discrete(family)),
    };

    Ok(UpsilonEstimate {
        estimate: mean,
        std_error,
        exact,
    })
}

/// Support of a discrete base measure up to total mass `1 - 1e-12`.
fn discrete_support(family: Family) -> Vec<(f64, f64)> {
    match family {
        Family::Rademacher => vec![(-1.0, 0.5), (1.0, 0.5)],
        Family::PoissonShifted => {
            // Poisson(1) probabilities, values shifted down by one
            let mut support = Vec::new();
            let mut mass = 0.0;
            let mut p = (-1.0f64).exp();
            let mut k = 0u32;
            while mass < 1.0 - 1e-12 {
                support.push((k as f64 - 1.0, p));
                mass += p;
                k += 1;
                p *= 1.0 / k as f64;
            }
            support
        }
        Family::Normal => unreachable!("normal has a closed form"),
    }
}

fn upsilon_discrete(family: Family) -> f64 {
    let support = discrete_support(family);
    let mut total = 0.0;
    for &(z, pz) in &support {
        for &(y, py) in &support {
            if z > y {
                total += z * pz * py;
            } else if z == y {
                total += 0.5 * z * pz * py;
            }
        }
    }
    total
}

/// Warn levels for the regime diagnostics. Purely advisory; the underlying
/// conditions are asymptotic and these finite-sample cutoffs are conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// Warn when `m/M` or `n/N` exceeds this.
    pub max_side_ratio: f64,
    /// Warn when `ln(max(M,N)) / min(m,n)` exceeds this.
    pub max_log_ratio: f64,
    /// Warn when `ln(max(M,N))^3 / min(m,n)` exceeds this.
    pub max_log_cubed_ratio: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            max_side_ratio: 0.5,
            max_log_ratio: 1.0,
            max_log_cubed_ratio: 20.0,
        }
    }
}

/// How far a finite configuration sits from the asymptotic regime the theory
/// assumes. Informational only; nothing here is a hard failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub row_ratio: f64,
    pub col_ratio: f64,
    pub log_ratio: f64,
    pub log_cubed_ratio: f64,
    pub thresholds: RegimeThresholds,
    pub side_ratios_ok: bool,
    pub log_ratio_ok: bool,
    pub log_cubed_ratio_ok: bool,
}

/// Evaluate the regime diagnostics with the default thresholds.
pub fn regime_report(rows: usize, cols: usize, m: usize, n: usize) -> Result<RegimeReport> {
    regime_report_with(rows, cols, m, n, RegimeThresholds::default())
}

/// Evaluate the regime diagnostics with explicit thresholds.
pub fn regime_report_with(
    rows: usize,
    cols: usize,
    m: usize,
    n: usize,
    thresholds: RegimeThresholds,
) -> Result<RegimeReport> {
    validate_dims(rows, cols, m, n)?;
    let log_max = (rows.max(cols) as f64).ln();
    let min_block = m.min(n) as f64;
    let row_ratio = m as f64 / rows as f64;
    let col_ratio = n as f64 / cols as f64;
    let log_ratio = log_max / min_block;
    let log_cubed_ratio = log_max.powi(3) / min_block;
    Ok(RegimeReport {
        row_ratio,
        col_ratio,
        log_ratio,
        log_cubed_ratio,
        thresholds,
        side_ratios_ok: row_ratio <= thresholds.max_side_ratio
            && col_ratio <= thresholds.max_side_ratio,
        log_ratio_ok: log_ratio <= thresholds.max_log_ratio,
        log_cubed_ratio_ok: log_cubed_ratio <= thresholds.max_log_cubed_ratio,
    })
}
