//! Argument parsing and the four subcommands: detect, sweep, theory, table.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use subscan_core::calibrate::observed_seed;
use subscan_core::rank::rank_test_seeds;
use subscan_core::rng::substream_seed;
use subscan_core::sweep::{format_summary_table, run_sweep_with_progress};
use subscan_core::theory::{rank_efficiency_threshold, regime_report, theta_crit, upsilon};
use subscan_core::{
    build_or_load_null_table, export_sweep, oracle_pvalue_mc, permutation_pvalue_mc, rank_scan,
    rank_test, rank_transform, scan_grid_bonferroni, DataMatrix, Estimator, Family, Method,
    NullTable, NullTableKey, PermutationScheme, ScanStatistic, StatMethod, SubmatrixIndex,
    SweepConfig, TestOutcome, DEFAULT_SEED,
};

/// Environment variable consulted for the null-table cache directory when
/// `--cache-dir` is absent.
pub const CACHE_DIR_ENV: &str = "SUBSCAN_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "subscan",
    version,
    about = "Detect an anomalous submatrix in a data matrix: scan statistics with \
             permutation, rank and parametric Monte Carlo calibration"
)]
struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a matrix (CSV) for an unusually heavy m-by-n submatrix.
    Detect(DetectArgs),
    /// Run a signal-strength sweep and export per-replicate p-values.
    Sweep(SweepArgs),
    /// Print threshold constants and regime diagnostics.
    Theory(TheoryArgs),
    /// Build or inspect rank-scan null tables.
    Table(TableArgs),
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::from_str(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_str(s).map_err(|e| e.to_string())
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    let est = Estimator::from_str(s).map_err(|e| e.to_string())?;
    if est == Estimator::ExactEnumeration {
        return Err("expected plain or add-one".into());
    }
    Ok(est)
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let alpha: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err("alpha must lie strictly between 0 and 1".into());
    }
    Ok(alpha)
}

/// A parsed `--grid` value such as `"2x2,4x4"`.
#[derive(Debug, Clone)]
struct Grid(Vec<(usize, usize)>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut sizes = Vec::new();
    for part in s.split(',') {
        let (m, n) = part
            .trim()
            .split_once('x')
            .ok_or_else(|| format!("'{part}' is not of the form MxN"))?;
        let m = m.trim().parse().map_err(|_| format!("bad row count in '{part}'"))?;
        let n = n.trim().parse().map_err(|_| format!("bad column count in '{part}'"))?;
        sizes.push((m, n));
    }
    if sizes.is_empty() {
        return Err("empty size grid".into());
    }
    Ok(Grid(sizes))
}

#[derive(Args)]
struct DetectArgs {
    /// Input matrix: CSV of reals, one row per line, no header.
    #[arg(long)]
    input: PathBuf,

    /// Block row count (with --n; exclusive with --grid).
    #[arg(long)]
    m: Option<usize>,

    /// Block column count (with --m; exclusive with --grid).
    #[arg(long)]
    n: Option<usize>,

    /// Size grid such as "2x2,4x4", combined with a Bonferroni correction.
    #[arg(long, value_parser = parse_grid, conflicts_with_all = ["m", "n"])]
    grid: Option<Grid>,

    /// Calibration: oracle, perm-uni, perm-bi, rank-uni or rank-bi.
    #[arg(long, value_parser = parse_method)]
    method: Method,

    /// Null family assumed by the oracle: normal, poisson or rademacher.
    #[arg(long, default_value = "normal", value_parser = parse_family)]
    family: Family,

    /// Monte Carlo draws per calibration.
    #[arg(long = "B", default_value_t = 500)]
    b: usize,

    /// Hill-climb restarts per statistic evaluation.
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Statistic evaluation: hillclimb or exact.
    #[arg(long, default_value = "hillclimb")]
    scan: String,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,

    /// P-value rule: add-one (valid at finite B) or plain (count / (B + 1)).
    #[arg(long, default_value = "add-one", value_parser = parse_estimator)]
    estimator: Estimator,

    /// Subtract each row's mean before testing (within-row permutation
    /// setting only).
    #[arg(long)]
    center_rows: bool,

    /// Machine-readable output (line-stable CSV).
    #[arg(long)]
    csv: bool,

    /// Null-table cache directory (falls back to SUBSCAN_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base profile: desk, paper-normal-1, paper-normal-2, paper-poisson-1
    /// or paper-poisson-2.
    #[arg(long, default_value = "desk")]
    profile: String,

    /// key=value file overriding the profile (keys: M, N, m, n, family,
    /// replicates, B, restarts, seed, estimator, methods, multipliers,
    /// timing).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Per-record CSV output path; the summary lands next to it.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,

    #[arg(long = "M")]
    rows: Option<usize>,

    #[arg(long = "N")]
    cols: Option<usize>,

    #[arg(long)]
    m: Option<usize>,

    #[arg(long)]
    n: Option<usize>,

    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,

    #[arg(long)]
    replicates: Option<usize>,

    #[arg(long = "B")]
    b: Option<usize>,

    #[arg(long)]
    restarts: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<Estimator>,

    /// Comma-separated subset of oracle,perm-uni,perm-bi,rank-uni,rank-bi.
    #[arg(long)]
    methods: Option<String>,

    /// Comma-separated multipliers of theta_crit, e.g. "0.5,1.0,1.5".
    #[arg(long)]
    multipliers: Option<String>,

    /// Record wall-clock seconds per evaluation (makes exports
    /// non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long = "M")]
    rows: usize,

    #[arg(long = "N")]
    cols: usize,

    #[arg(long)]
    m: usize,

    #[arg(long)]
    n: usize,

    #[arg(long, default_value = "normal", value_parser = parse_family)]
    family: Family,

    /// Monte Carlo pairs for the Upsilon estimate.
    #[arg(long = "K", default_value_t = 1_000_000)]
    samples: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Machine-readable output (single CSV row).
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct TableArgs {
    #[command(subcommand)]
    action: TableAction,
}

#[derive(Subcommand)]
enum TableAction {
    /// Build (and cache) the null table for one configuration.
    Build(TableBuildArgs),
    /// Print the key and value summary of a cached table file.
    Show(TableShowArgs),
}

#[derive(Args)]
struct TableBuildArgs {
    #[arg(long = "M")]
    rows: usize,

    #[arg(long = "N")]
    cols: usize,

    #[arg(long)]
    m: usize,

    #[arg(long)]
    n: usize,

    /// uni or bi.
    #[arg(long)]
    scheme: String,

    #[arg(long = "B", default_value_t = 500)]
    b: usize,

    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Statistic evaluation: hillclimb or exact.
    #[arg(long, default_value = "hillclimb")]
    scan: String,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Cache directory (falls back to SUBSCAN_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TableShowArgs {
    /// A table file produced by `table build`.
    #[arg(long)]
    path: PathBuf,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore the error if a pool already exists (e.g. repeated init in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    let result = match cli.command {
        Command::Detect(args) => cmd_detect(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Table(args) => match args.action {
            TableAction::Build(build) => cmd_table_build(build),
            TableAction::Show(show) => cmd_table_show(show),
        },
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn cache_dir_from(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
}

fn stat_method(scan: &str, restarts: usize) -> Result<StatMethod> {
    match scan {
        "hillclimb" => Ok(StatMethod::HillClimb { restarts }),
        "exact" => Ok(StatMethod::Exact),
        other => bail!("unknown scan method '{other}' (expected hillclimb or exact)"),
    }
}

/// One per-size detection outcome.
struct SizeReport {
    m: usize,
    n: usize,
    outcome: TestOutcome,
    argmax: SubmatrixIndex,
}

fn detect_one_size(
    x: &DataMatrix,
    m: usize,
    n: usize,
    args: &DetectArgs,
    method: StatMethod,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<SizeReport> {
    let stat = ScanStatistic::new(m, n, method);
    let (outcome, argmax) = match args.method {
        Method::Oracle => {
            let outcome = oracle_pvalue_mc(x, args.family, args.b, seed, &stat, args.estimator)?;
            let scan = stat.scan(x, observed_seed(seed))?;
            (outcome, scan.argmax)
        }
        Method::PermUni | Method::PermBi => {
            let scheme = args.method.scheme().unwrap();
            let outcome = permutation_pvalue_mc(x, scheme, args.b, seed, &stat, args.estimator)?;
            let scan = stat.scan(x, observed_seed(seed))?;
            (outcome, scan.argmax)
        }
        Method::RankUni | Method::RankBi => {
            let scheme = args.method.scheme().unwrap();
            let key = NullTableKey {
                rows: x.rows(),
                cols: x.cols(),
                m,
                n,
                scheme,
                draws: args.b,
                method,
                seed,
            };
            let (table, cache_warning) = build_or_load_null_table(cache_dir, &key)?;
            if let Some(warning) = cache_warning {
                eprintln!("warning: could not write null-table cache: {warning}");
            }
            let outcome = rank_test(x, m, n, scheme, &table, seed, args.estimator)?;
            let (tie_seed, eval_seed) = rank_test_seeds(seed);
            let ranks = rank_transform(x, scheme, tie_seed);
            let scan = rank_scan(&ranks, m, n, method, eval_seed)?;
            debug_assert_eq!(scan.value, outcome.statistic);
            (outcome, scan.argmax)
        }
    };
    Ok(SizeReport {
        m,
        n,
        outcome,
        argmax,
    })
}

fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let sizes: Vec<(usize, usize)> = match (&args.grid, args.m, args.n) {
        (Some(grid), None, None) => grid.0.clone(),
        (None, Some(m), Some(n)) => vec![(m, n)],
        _ => bail!("specify either --m and --n, or --grid"),
    };
    let x = DataMatrix::read_csv(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let x = if args.center_rows { x.center_rows() } else { x };
    for &(m, n) in &sizes {
        if m == 0 || m > x.rows() || n == 0 || n > x.cols() {
            bail!(
                "block size {m} x {n} does not fit the {} x {} input",
                x.rows(),
                x.cols()
            );
        }
    }
    let method = stat_method(&args.scan, args.restarts)?;
    let cache_dir = cache_dir_from(args.cache_dir.clone());

    // every size gets its own evaluation sub-stream of --seed
    let mut reports = Vec::with_capacity(sizes.len());
    for (idx, &(m, n)) in sizes.iter().enumerate() {
        let size_seed = substream_seed(args.seed, &[idx as u64]);
        reports.push(detect_one_size(&x, m, n, &args, method, size_seed, cache_dir.as_deref())?);
    }

    let combined_p = if reports.len() > 1 {
        let mut iter = reports.iter();
        Some(scan_grid_bonferroni(&sizes, |_, _| {
            Ok(iter.next().expect("one report per size").outcome.p_value)
        })?)
    } else {
        None
    };
    let final_p = combined_p.unwrap_or(reports[0].outcome.p_value);
    let detected = final_p <= args.alpha;
    let decision = if detected { "detect" } else { "none" };

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if args.csv {
        writeln!(
            out,
            "kind,m,n,statistic,p_value,decision,alpha,method,estimator,B,seed,rows,cols"
        )?;
        for report in &reports {
            let row_decision = if combined_p.is_none() { decision } else { "" };
            writeln!(
                out,
                "size,{},{},{},{},{},{},{},{},{},{},{},{}",
                report.m,
                report.n,
                report.outcome.statistic,
                report.outcome.p_value,
                row_decision,
                args.alpha,
                args.method,
                args.estimator,
                args.b,
                args.seed,
                join_indices(report.argmax.rows()),
                join_indices(report.argmax.cols()),
            )?;
        }
        if let Some(p) = combined_p {
            writeln!(
                out,
                "bonferroni,,,,{},{},{},{},{},{},{},,",
                p, decision, args.alpha, args.method, args.estimator, args.b, args.seed
            )?;
        }
    } else {
        writeln!(
            out,
            "input: {} ({} x {})",
            args.input.display(),
            x.rows(),
            x.cols()
        )?;
        writeln!(
            out,
            "method: {} (B = {}, estimator = {}, seed = {})",
            args.method, args.b, args.estimator, args.seed
        )?;
        for report in &reports {
            writeln!(
                out,
                "size {} x {}: statistic = {}, p = {}",
                report.m, report.n, report.outcome.statistic, report.outcome.p_value
            )?;
            writeln!(out, "  rows: {}", join_indices(report.argmax.rows()))?;
            writeln!(out, "  cols: {}", join_indices(report.argmax.cols()))?;
        }
        if let Some(p) = combined_p {
            writeln!(out, "bonferroni over {} sizes: p = {}", reports.len(), p)?;
        }
        writeln!(
            out,
            "decision: {decision} (p = {final_p}, alpha = {})",
            args.alpha
        )?;
    }
    Ok(())
}

fn apply_config_file(cfg: &mut SweepConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), idx + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let context = || format!("{}:{}: bad value for {key}", path.display(), idx + 1);
        match key {
            "M" => cfg.rows = value.parse().with_context(context)?,
            "N" => cfg.cols = value.parse().with_context(context)?,
            "m" => cfg.m = value.parse().with_context(context)?,
            "n" => cfg.n = value.parse().with_context(context)?,
            "family" => cfg.family = value.parse().map_err(|e| anyhow!("{}", e)).with_context(context)?,
            "replicates" => cfg.replicates = value.parse().with_context(context)?,
            "B" => cfg.draws = value.parse().with_context(context)?,
            "restarts" => cfg.restarts = value.parse().with_context(context)?,
            "seed" => cfg.master_seed = value.parse().with_context(context)?,
            "estimator" => {
                cfg.estimator = parse_estimator(value).map_err(|e| anyhow!(e)).with_context(context)?
            }
            "methods" => cfg.methods = parse_methods(value).with_context(context)?,
            "multipliers" => cfg.theta_multipliers = parse_multipliers(value).with_context(context)?,
            "timing" => cfg.record_timing = value.parse().with_context(context)?,
            other => bail!("{}:{}: unknown key '{other}'", path.display(), idx + 1),
        }
    }
    Ok(())
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods = s
        .split(',')
        .map(|part| Method::from_str(part.trim()).map_err(|e| anyhow!("{e}")))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        bail!("empty method list");
    }
    Ok(methods)
}

fn parse_multipliers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("'{part}' is not a number"))
        })
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::profile(&args.profile)
        .ok_or_else(|| anyhow!("unknown profile '{}'", args.profile))?;
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    if let Some(v) = args.rows {
        cfg.rows = v;
    }
    if let Some(v) = args.cols {
        cfg.cols = v;
    }
    if let Some(v) = args.m {
        cfg.m = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.family {
        cfg.family = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.b {
        cfg.draws = v;
    }
    if let Some(v) = args.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.estimator {
        cfg.estimator = v;
    }
    if let Some(v) = &args.methods {
        cfg.methods = parse_methods(v)?;
    }
    if let Some(v) = &args.multipliers {
        cfg.theta_multipliers = parse_multipliers(v)?;
    }
    if args.timing {
        cfg.record_timing = true;
    }

    let total = cfg.theta_multipliers.len() * cfg.replicates;
    let step = (total / 20).max(1);
    eprintln!(
        "sweep: {} x {} matrix, block {} x {}, {} multipliers x {} replicates, B = {}",
        cfg.rows,
        cfg.cols,
        cfg.m,
        cfg.n,
        cfg.theta_multipliers.len(),
        cfg.replicates,
        cfg.draws
    );
    let result = run_sweep_with_progress(&cfg, |done, total| {
        if done % step == 0 || done == total {
            eprintln!("  {done}/{total} replicate evaluations done");
        }
    })?;
    let (records_path, summary_path) = export_sweep(&result, &args.out)?;

    print!("{}", format_summary_table(&result));
    println!("records: {}", records_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> Result<()> {
    let crit = theta_crit(args.rows, args.cols, args.m, args.n)?;
    let ups = upsilon(args.family, args.samples, args.seed)?;
    let threshold = rank_efficiency_threshold(ups.best());
    let regime = regime_report(args.rows, args.cols, args.m, args.n)?;

    if args.csv {
        println!(
            "M,N,m,n,family,theta_crit,upsilon_mc,upsilon_se,upsilon_exact,rank_threshold,\
             row_ratio,col_ratio,log_ratio,log_cubed_ratio,side_ratios_ok,log_ratio_ok,\
             log_cubed_ratio_ok"
        );
        println!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            args.rows,
            args.cols,
            args.m,
            args.n,
            args.family,
            crit,
            ups.estimate,
            ups.std_error,
            ups.exact.map(|v| v.to_string()).unwrap_or_default(),
            threshold,
            regime.row_ratio,
            regime.col_ratio,
            regime.log_ratio,
            regime.log_cubed_ratio,
            regime.side_ratios_ok,
            regime.log_ratio_ok,
            regime.log_cubed_ratio_ok
        );
        return Ok(());
    }

    let flag = |ok: bool| if ok { "ok" } else { "warn" };
    println!(
        "configuration: M = {}, N = {}, m = {}, n = {}, family = {}",
        args.rows, args.cols, args.m, args.n, args.family
    );
    println!("theta_crit            = {crit:.6}");
    println!(
        "upsilon (Monte Carlo) = {:.6} +- {:.6}  (K = {}, seed = {})",
        ups.estimate, ups.std_error, args.samples, args.seed
    );
    if let Some(exact) = ups.exact {
        println!("upsilon (exact)       = {exact:.6}");
    }
    println!("rank threshold        = {threshold:.6}  (1 / (2 sqrt(3) upsilon))");
    println!("regime diagnostics (advisory):");
    println!(
        "  m/M = {:.4}, n/N = {:.4}  [{}]",
        regime.row_ratio,
        regime.col_ratio,
        flag(regime.side_ratios_ok)
    );
    println!(
        "  log(max(M,N)) / min(m,n)   = {:.4}  [{}]",
        regime.log_ratio,
        flag(regime.log_ratio_ok)
    );
    println!(
        "  log(max(M,N))^3 / min(m,n) = {:.4}  [{}]",
        regime.log_cubed_ratio,
        flag(regime.log_cubed_ratio_ok)
    );
    Ok(())
}

fn table_stats(table: &NullTable) -> String {
    let values = table.values();
    let pick = |q: f64| values[((values.len() - 1) as f64 * q) as usize];
    format!(
        "draws = {}, min = {}, q1 = {}, median = {}, q3 = {}, max = {}",
        values.len(),
        values.first().unwrap(),
        pick(0.25),
        pick(0.5),
        pick(0.75),
        values.last().unwrap()
    )
}

fn cmd_table_build(args: TableBuildArgs) -> Result<()> {
    let scheme = PermutationScheme::from_str(&args.scheme).map_err(|e| anyhow!("{e}"))?;
    let method = stat_method(&args.scan, args.restarts)?;
    let dir = cache_dir_from(args.cache_dir).ok_or_else(|| {
        anyhow!("no cache directory: pass --cache-dir or set {CACHE_DIR_ENV}")
    })?;
    let key = NullTableKey {
        rows: args.rows,
        cols: args.cols,
        m: args.m,
        n: args.n,
        scheme,
        draws: args.b,
        method,
        seed: args.seed,
    };
    let (table, cache_warning) = build_or_load_null_table(Some(&dir), &key)?;
    if let Some(warning) = cache_warning {
        bail!("could not write {}: {warning}", dir.display());
    }
    println!("table: {}", key.canonical());
    println!("file:  {}", dir.join(key.file_name()).display());
    println!("{}", table_stats(&table));
    Ok(())
}

fn cmd_table_show(args: TableShowArgs) -> Result<()> {
    let table = NullTable::load(&args.path)?;
    println!("table: {}", table.key().canonical());
    println!("{}", table_stats(&table));
    Ok(())
}
