//! Batch front end. Every subcommand reads files, writes artifacts into the
//! output directory and records a manifest (`manifest-<subcommand>.json`)
//! with the parsed arguments, seed, SHA-256 digests of all inputs and the
//! list of outputs. Only the manifest's `created_at` field varies between
//! identical runs.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on data errors (the
//! error's name is printed on standard error).

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimators::{
    self, bucket_table, grid_estimates, median_volume_by_stress, mu_by_stress_change, order_series,
    partition_fixed, split_sample, EstimateError, EstimateTable, Grid2D, OrderMode,
};
use crate::ingest::{
    attach_volume, compute_log_returns, detrend_volume, label_with_stress, read_labeled_csv,
    read_price_series, read_stress_series, read_volume_series, write_labeled_csv, ColumnSpec, IngestError,
    LabeledSeries,
};
use crate::normality::{excess_kurtosis, pvalue_rejection_fraction, rescale_returns, NormalityError, RescaleMode};
use crate::portfolio::{
    capm_regression_by_bucket, efficient_frontier, portfolio_components, write_regressions_csv, CellParams,
    PortfolioError,
};
use crate::riskmodel::{
    interval_probability, mixture_cdf, mixture_cdf_components, mixture_moments, percent_to_log_return,
    risk_report, KappaFilter, RiskError, RiskQuery,
};
use crate::simulate::{simulate, simulate_joint, JointSimConfig, SimConfig, SimError};

pub const OUT_DIR_ENV: &str = "STRESSWALK_OUT";

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "stresswalk",
    version,
    about = "Stress-conditioned random-walk toolkit",
    long_about = "Stress-conditioned random-walk toolkit.\n\n\
        Returns are daily log returns throughout. Thresholds given with --threshold are log returns; \
        --threshold-pct P converts a simple percentage to ln(1 + P/100). Portfolio weights are \
        long-only (w = bond share in [0, 1]) and CAPM regressions use raw, not excess, returns."
)]
struct Cli {
    /// Output directory
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out: PathBuf,
    /// Format for table and grid artifacts
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Join prices with stress (and optionally volume) into a labeled CSV
    Label(LabelArgs),
    /// Per-bucket estimates (with --edges) or a stock/bond decile grid (with --deciles)
    Estimate(EstimateArgs),
    /// Shapiro-Wilk rejection fractions for chronological, randomized and stress orderings
    Normality(NormalityArgs),
    /// Tail probabilities and derived measures from an estimate table
    Risk(RiskArgs),
    /// Returns divided by the sigma of their stress bucket
    Rescale(RescaleArgs),
    /// Mean return of sets ordered by one-day stress change
    MuByDkappa(SetArgs),
    /// Median detrended volume of stress-ordered sets
    VolumeByStress(VolumeArgs),
    /// Two-asset efficient frontier for one stress cell
    Frontier(FrontierArgs),
    /// Portfolio tail probability from a decile grid
    PortfolioRisk(PortfolioRiskArgs),
    /// Per-bucket regression of an asset on a benchmark
    Capm(CapmArgs),
    /// Generate a synthetic labeled series from a JSON config
    Simulate(SimulateArgs),
    /// Random half split into train.csv and test.csv
    Split(SplitArgs),
    /// Compare a train table's predicted bracket frequencies with test data
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Serialize)]
struct SeriesInput {
    /// Labeled CSV (date,return,kappa[,...]); with --stress, a price CSV (date,close)
    #[arg(long)]
    input: PathBuf,
    /// Stress CSV (date,kappa) joined with the prices given by --input
    #[arg(long)]
    stress: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct LabelArgs {
    /// Price CSV (date,close)
    #[arg(long)]
    input: PathBuf,
    /// Stress CSV (date,kappa)
    #[arg(long)]
    stress: PathBuf,
    /// Volume CSV (date,volume)
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Trailing window (days) of the volume median used for detrending
    #[arg(long, default_value_t = 20)]
    window: usize,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    #[command(flatten)]
    series: SeriesInput,
    /// Bucket lower edges: comma list (0,10,20) or start:width:count
    #[arg(long, value_parser = parse_edges, conflicts_with = "deciles")]
    edges: Option<Edges>,
    /// Decile count for the stock/bond grid (requires --bond)
    #[arg(long, requires = "bond")]
    deciles: Option<usize>,
    /// Bond labeled CSV for the grid
    #[arg(long)]
    bond: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct NormalityArgs {
    #[command(flatten)]
    series: SeriesInput,
    #[arg(long, default_value_t = 75)]
    set_size: usize,
    /// Seed for the randomized ordering
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("thr").required(true).args(["threshold", "threshold_pct"])))]
struct RiskArgs {
    /// Estimate table (JSON, or CSV with bucket_low,bucket_high,p,mu,sigma,count)
    #[arg(long)]
    table: PathBuf,
    /// Threshold as a daily log return
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    /// Threshold as a simple percentage, converted to ln(1 + P/100)
    #[arg(long, allow_negative_numbers = true)]
    threshold_pct: Option<f64>,
    /// Condition on buckets whose lower edge is at least this kappa
    #[arg(long)]
    bucket_min: Option<f64>,
    /// Condition on buckets whose upper edge is at most this kappa
    #[arg(long)]
    bucket_max: Option<f64>,
    /// Horizon N in days for r_N and P_N
    #[arg(long)]
    horizon: Option<i64>,
    /// Daily risk-free return for the Sharpe ratio
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    risk_free: f64,
    /// Interval a,b of log returns
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    interval: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RescaleChoice {
    /// Divide by the sigma of the same day's stress
    Concurrent,
    /// Divide by the sigma of the previous day's stress
    Persistence,
}

#[derive(Args, Debug, Serialize)]
struct RescaleArgs {
    #[command(flatten)]
    series: SeriesInput,
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value_t = RescaleChoice::Concurrent)]
    mode: RescaleChoice,
}

#[derive(Args, Debug, Serialize)]
struct SetArgs {
    #[command(flatten)]
    series: SeriesInput,
    #[arg(long, default_value_t = 75)]
    set_size: usize,
}

#[derive(Args, Debug, Serialize)]
struct VolumeArgs {
    #[command(flatten)]
    series: SeriesInput,
    #[arg(long, default_value_t = 75)]
    set_size: usize,
    /// Volume CSV (date,volume); otherwise the labeled file's detrended_volume column is used
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    window: usize,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["cell", "grid"])))]
struct FrontierArgs {
    /// Cell parameters mu_s,mu_b,sigma_s,sigma_b,rho
    #[arg(long, value_parser = parse_cell, allow_hyphen_values = true)]
    cell: Option<CellParams>,
    /// Grid JSON written by `estimate --deciles`
    #[arg(long, requires = "at")]
    grid: Option<PathBuf>,
    /// Grid cell i,j (stock decile, bond decile)
    #[arg(long, value_parser = parse_index_pair)]
    at: Option<(usize, usize)>,
    /// Bond-weight step
    #[arg(long, default_value_t = 0.05)]
    step: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("thr").required(true).args(["threshold", "threshold_pct"])))]
struct PortfolioRiskArgs {
    #[arg(long)]
    grid: PathBuf,
    /// Bond weight in [0, 1]
    #[arg(long)]
    weight: f64,
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    threshold_pct: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CapmArgs {
    /// Asset labeled CSV
    #[arg(long)]
    input: PathBuf,
    /// Benchmark labeled CSV; its kappa selects the bucket
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, value_parser = parse_edges)]
    edges: Edges,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Simulation config JSON
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Read a two-asset config and write stock.csv and bond.csv
    #[arg(long)]
    joint: bool,
    /// Also write the generator's truth table for these edges (single asset)
    #[arg(long, value_parser = parse_edges)]
    edges: Option<Edges>,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[command(flatten)]
    series: SeriesInput,
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    /// Train estimate table (JSON or table CSV), or a train labeled CSV together with --edges
    #[arg(long)]
    train: PathBuf,
    /// Test labeled CSV
    #[arg(long)]
    test: PathBuf,
    /// Stress edges used when --train is a labeled series
    #[arg(long, value_parser = parse_edges)]
    edges: Option<Edges>,
    /// Return bracket edges: comma list or lo:hi:width (default: half-sigma bins over +-4 sigma)
    #[arg(long, value_parser = parse_brackets, allow_hyphen_values = true)]
    brackets: Option<Edges>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
struct Edges(Vec<f64>);

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn parse_edges(s: &str) -> Result<Edges, String> {
    if s.contains(':') {
        let parts = parse_colon(s)?;
        if parts[2] < 1.0 || parts[2].fract() != 0.0 {
            return Err("count must be a positive integer".into());
        }
        return Ok(Edges(estimators::fixed_width_edges(parts[0], parts[1], parts[2] as usize)));
    }
    parse_f64_list(s).map(Edges)
}

fn parse_brackets(s: &str) -> Result<Edges, String> {
    if s.contains(':') {
        let [lo, hi, width] = parse_colon(s)?;
        if !(width > 0.0 && hi > lo) {
            return Err("expected lo:hi:width with hi > lo and width > 0".into());
        }
        let count = ((hi - lo) / width).round() as usize;
        return Ok(Edges((0..=count).map(|k| lo + width * k as f64).collect()));
    }
    parse_f64_list(s).map(Edges)
}

fn parse_colon(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three colon-separated numbers".to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_f64_list(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn parse_index_pair(s: &str) -> Result<(usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [i, j] => Ok((*i, *j)),
        _ => Err("expected i,j".into()),
    }
}

fn parse_cell(s: &str) -> Result<CellParams, String> {
    match parse_f64_list(s)?.as_slice() {
        [mu_s, mu_b, sigma_s, sigma_b, rho] => {
            Ok(CellParams { mu_s: *mu_s, mu_b: *mu_b, sigma_s: *sigma_s, sigma_b: *sigma_b, rho: *rho })
        }
        _ => Err("expected mu_s,mu_b,sigma_s,sigma_b,rho".into()),
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

macro_rules! data_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}
data_failure!(Error, IngestError, EstimateError, NormalityError, RiskError, PortfolioError, SimError);

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a Cli,
    seed: Option<u64>,
    inputs: &'a [InputDigest],
    outputs: &'a [String],
    created_at: String,
}

/// Tracks inputs read and artifacts written during one run.
struct Run {
    out: PathBuf,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        if !path.is_file() {
            return Err(IngestError::MissingFile(path.display().to_string()).into());
        }
        let bytes = fs::read(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex_digest(&bytes) });
        Ok(bytes)
    }

    /// Atomic write: temp file in the output directory, then rename.
    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|source| io_error(&self.out, source))?;
        let target = self.out.join(name);
        let tmp = self.out.join(format!(".{name}.tmp{}", std::process::id()));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &target)
        })();
        if let Err(source) = result {
            let _ = fs::remove_file(&tmp);
            return Err(io_error(&target, source));
        }
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn series(&mut self, input: &SeriesInput) -> CliResult<LabeledSeries> {
        let id = asset_id(&input.input);
        let bytes = self.read(&input.input)?;
        match &input.stress {
            None => Ok(read_labeled_csv(bytes.as_slice(), &id)?),
            Some(stress) => {
                let prices = read_price_series(bytes.as_slice(), &ColumnSpec::price())?;
                let sb = self.read(stress)?;
                let stress = read_stress_series(sb.as_slice(), &ColumnSpec::stress())?;
                let returns = compute_log_returns(&prices)?;
                let (series, report) = label_with_stress(&returns, &stress, &id)?;
                if report.dropped() > 0 {
                    eprintln!("note: {} unmatched dates dropped in the stress join", report.dropped());
                }
                Ok(series)
            }
        }
    }

    fn labeled(&mut self, path: &Path) -> CliResult<LabeledSeries> {
        let bytes = self.read(path)?;
        Ok(read_labeled_csv(bytes.as_slice(), &asset_id(path))?)
    }

    fn table(&mut self, path: &Path) -> CliResult<EstimateTable> {
        let bytes = self.read(path)?;
        if is_json(path) {
            let text = String::from_utf8(bytes).map_err(|e| artifact(path, e))?;
            Ok(EstimateTable::from_json(&text)?)
        } else {
            Ok(EstimateTable::read_csv(bytes.as_slice())?)
        }
    }

    fn grid(&mut self, path: &Path) -> CliResult<Grid2D> {
        let bytes = self.read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| artifact(path, e))?;
        Ok(Grid2D::from_json(&text)?)
    }

    fn text(&mut self, path: &Path) -> CliResult<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| artifact(path, e))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Failure {
    Failure::Data(Error::Io { path: path.display().to_string(), source })
}

fn artifact(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(Error::Artifact { path: path.display().to_string(), message: e.to_string() })
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn asset_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn timestamp() -> String {
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
    chrono::DateTime::from_timestamp(now.as_secs() as i64, now.subsec_nanos())
        .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Failure::Data(IngestError::from(e).into());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Failure::Data(IngestError::Csv(e.to_string()).into()))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn threshold(log: Option<f64>, pct: Option<f64>) -> f64 {
    match (log, pct) {
        (Some(x), _) => x,
        (None, Some(p)) => percent_to_log_return(p),
        (None, None) => unreachable!("clap requires one threshold"),
    }
}

fn check_set_size(n: usize) -> CliResult<()> {
    if n < 3 {
        return Err(Failure::Usage(format!("--set-size must be at least 3, got {n}")));
    }
    Ok(())
}

/// Runs the tool on `argv` (program name first) and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut run = Run { out: cli.out.clone(), inputs: Vec::new(), outputs: Vec::new() };
    match dispatch(&cli, &mut run) {
        Ok((name, seed)) => {
            let manifest = Manifest {
                tool: "stresswalk",
                version: env!("CARGO_PKG_VERSION"),
                subcommand: name,
                config: &cli,
                seed,
                inputs: &run.inputs,
                outputs: &run.outputs.clone(),
                created_at: timestamp(),
            };
            let bytes = json_bytes(&manifest);
            match run.write(&format!("manifest-{name}.json"), &bytes) {
                Ok(()) => 0,
                Err(f) => report(f),
            }
        }
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("usage error: {msg}");
            2
        }
        Failure::Data(e) => {
            eprintln!("{}: {e}", e.name());
            1
        }
    }
}

fn dispatch(cli: &Cli, run: &mut Run) -> CliResult<(&'static str, Option<u64>)> {
    let fmt = cli.format;
    Ok(match &cli.command {
        Command::Label(a) => (label(a, run)?, None),
        Command::Estimate(a) => (estimate(a, fmt, run)?, None),
        Command::Normality(a) => (normality(a, run)?, Some(a.seed)),
        Command::Risk(a) => (risk(a, run)?, None),
        Command::Rescale(a) => (rescale(a, run)?, None),
        Command::MuByDkappa(a) => (mu_by_dkappa(a, run)?, None),
        Command::VolumeByStress(a) => (volume_by_stress(a, run)?, None),
        Command::Frontier(a) => (frontier(a, run)?, None),
        Command::PortfolioRisk(a) => (portfolio_risk(a, run)?, None),
        Command::Capm(a) => (capm(a, run)?, None),
        Command::Simulate(a) => return simulate_cmd(a, run).map(|s| ("simulate", Some(s))),
        Command::Split(a) => (split(a, run)?, Some(a.seed)),
        Command::Validate(a) => (validate(a, run)?, None),
    })
}

fn label(a: &LabelArgs, run: &mut Run) -> CliResult<&'static str> {
    let mut series = run.series(&SeriesInput { input: a.input.clone(), stress: Some(a.stress.clone()) })?;
    if let Some(vp) = &a.volume {
        let vb = run.read(vp)?;
        let raw = read_volume_series(vb.as_slice(), &ColumnSpec::volume())?;
        let det = detrend_volume(&raw, a.window)?;
        attach_volume(&mut series, &raw, &det);
    }
    let mut buf = Vec::new();
    write_labeled_csv(&mut buf, &series)?;
    run.write("labeled.csv", &buf)?;
    println!("labeled {} observations", series.len());
    Ok("label")
}

fn estimate(a: &EstimateArgs, fmt: Format, run: &mut Run) -> CliResult<&'static str> {
    let series = run.series(&a.series)?;
    match (&a.edges, a.deciles, &a.bond) {
        (Some(edges), None, _) => {
            let table = bucket_table(&series, &edges.0)?;
            match fmt {
                Format::Json => run.write("estimate.json", table.to_json().as_bytes())?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    table.write_csv(&mut buf)?;
                    run.write("estimate.csv", &buf)?;
                }
            }
            println!("{} buckets from {} observations ({} below the first edge)", table.buckets.len(), table.total, table.unassigned);
        }
        (None, Some(k), Some(bond)) => {
            let bond = run.labeled(bond)?;
            let grid = grid_estimates(&series, &bond, k)?;
            match fmt {
                Format::Json => run.write("grid.json", grid.to_json().as_bytes())?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    grid.write_csv(&mut buf)?;
                    run.write("grid.csv", &buf)?;
                }
            }
            println!("{k}x{k} grid from {} joint days, {} empty cells", grid.total, grid.unoccupied_count());
        }
        _ => return Err(Failure::Usage("estimate needs --edges, or --deciles with --bond".into())),
    }
    Ok("estimate")
}

fn normality(a: &NormalityArgs, run: &mut Run) -> CliResult<&'static str> {
    check_set_size(a.set_size)?;
    let series = run.series(&a.series)?;
    let modes = [
        ("chronological", OrderMode::Chronological),
        ("randomized", OrderMode::Randomized { seed: a.seed }),
        ("stress", OrderMode::StressAscending),
    ];
    #[derive(Serialize)]
    struct Summary {
        ordering: &'static str,
        sets: usize,
        tested: usize,
        rejected: usize,
        fraction: f64,
        dropped: usize,
    }
    let mut summaries = Vec::new();
    for (name, mode) in modes {
        let ordered = order_series(&series, mode)?;
        let part = partition_fixed(&ordered, a.set_size)?;
        let s = pvalue_rejection_fraction(&part.sets, a.alpha)?;
        let rows = s.per_set.iter().map(|r| {
            let (w, p) = r.result.map_or((String::new(), String::new()), |t| (t.w_statistic.to_string(), t.p_value.to_string()));
            vec![r.set_index.to_string(), r.n.to_string(), r.kappa_min.to_string(), r.kappa_max.to_string(), w, p]
        });
        let bytes = csv_bytes(&["set_index", "n", "kappa_min", "kappa_max", "W", "p"], rows)?;
        run.write(&format!("normality_{name}.csv"), &bytes)?;
        println!("{name:<14} rejected {}/{} sets at alpha {} ({:.3})", s.rejected, s.tested, a.alpha, s.fraction);
        summaries.push(Summary {
            ordering: name,
            sets: part.sets.len(),
            tested: s.tested,
            rejected: s.rejected,
            fraction: s.fraction,
            dropped: part.dropped,
        });
    }
    run.write("normality.json", &json_bytes(&summaries))?;
    Ok("normality")
}

fn risk(a: &RiskArgs, run: &mut Run) -> CliResult<&'static str> {
    let table = run.table(&a.table)?;
    let conditioning = (a.bucket_min.is_some() || a.bucket_max.is_some())
        .then_some(KappaFilter { min: a.bucket_min, max: a.bucket_max });
    let query = RiskQuery {
        threshold: threshold(a.threshold, a.threshold_pct),
        conditioning,
        horizon: a.horizon,
        risk_free: a.risk_free,
        interval: a.interval,
    };
    let report = risk_report(&table, &query)?;
    run.write("risk.json", &json_bytes(&report))?;
    print!("{}", report.to_text());
    Ok("risk")
}

fn rescale(a: &RescaleArgs, run: &mut Run) -> CliResult<&'static str> {
    let series = run.series(&a.series)?;
    let table = run.table(&a.table)?;
    let mode = match a.mode {
        RescaleChoice::Concurrent => RescaleMode::Concurrent,
        RescaleChoice::Persistence => RescaleMode::Persistence,
    };
    let rescaled = rescale_returns(&series, &table, mode)?;
    let rows = rescaled.observations.iter().map(|p| vec![p.date.to_string(), p.rescaled_return.to_string()]);
    run.write("rescaled.csv", &csv_bytes(&["date", "rescaled_return"], rows)?)?;
    if !rescaled.skipped.is_empty() {
        eprintln!("note: skipped {} day(s) whose bucket has no sigma estimate", rescaled.skipped.len());
    }
    if let (Ok(before), Ok(after)) = (excess_kurtosis(&series.returns()), excess_kurtosis(&rescaled.values())) {
        println!("excess kurtosis: raw {before:.4}, rescaled {after:.4}");
    }
    Ok("rescale")
}

fn mu_by_dkappa(a: &SetArgs, run: &mut Run) -> CliResult<&'static str> {
    check_set_size(a.set_size)?;
    let series = run.series(&a.series)?;
    let points = mu_by_stress_change(&series, a.set_size)?;
    let rows = points.iter().map(|p| vec![p.median_kappa_change.to_string(), p.mu_hat.to_string()]);
    run.write("mu_by_dkappa.csv", &csv_bytes(&["median_kappa_change", "mu_hat"], rows)?)?;
    println!("{} sets", points.len());
    Ok("mu-by-dkappa")
}

fn volume_by_stress(a: &VolumeArgs, run: &mut Run) -> CliResult<&'static str> {
    check_set_size(a.set_size)?;
    let mut series = run.series(&a.series)?;
    if let Some(vp) = &a.volume {
        let vb = run.read(vp)?;
        let raw = read_volume_series(vb.as_slice(), &ColumnSpec::volume())?;
        let det = detrend_volume(&raw, a.window)?;
        attach_volume(&mut series, &raw, &det);
    }
    // days inside the first detrending window carry no detrended volume
    series.observations.retain(|o| o.detrended_volume.is_some());
    if series.is_empty() {
        return Err(IngestError::InsufficientData { needed: a.set_size, got: 0 }.into());
    }
    let points = median_volume_by_stress(&series, a.set_size)?;
    let rows = points
        .iter()
        .map(|p| vec![p.set_index.to_string(), p.kappa_median.to_string(), p.median_volume.to_string()]);
    run.write("volume_by_stress.csv", &csv_bytes(&["set_index", "kappa_median", "median_volume"], rows)?)?;
    println!("{} sets", points.len());
    Ok("volume-by-stress")
}

fn frontier(a: &FrontierArgs, run: &mut Run) -> CliResult<&'static str> {
    let cell = match (&a.cell, &a.grid, a.at) {
        (Some(c), _, _) => *c,
        (None, Some(path), Some((i, j))) => {
            let grid = run.grid(path)?;
            if i >= grid.deciles || j >= grid.deciles {
                return Err(Failure::Usage(format!("cell {i},{j} outside a {0}x{0} grid", grid.deciles)));
            }
            let c = grid.cell(i, j);
            match (c.mu_s, c.mu_b, c.sigma_s, c.sigma_b) {
                (Some(mu_s), Some(mu_b), Some(sigma_s), Some(sigma_b)) => {
                    CellParams { mu_s, mu_b, sigma_s, sigma_b, rho: c.rho.unwrap_or(0.0) }
                }
                _ => return Err(PortfolioError::InvalidCell(format!("cell {i},{j} has fewer than two observations")).into()),
            }
        }
        _ => return Err(Failure::Usage("frontier needs --cell, or --grid with --at".into())),
    };
    let f = efficient_frontier(&cell, a.step)?;
    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    run.write("frontier.csv", &buf)?;
    println!(
        "minimum-variance bond weight {:.6} (long-only {:.6})",
        f.min_variance_weight, f.min_variance_weight_long_only
    );
    Ok("frontier")
}

fn portfolio_risk(a: &PortfolioRiskArgs, run: &mut Run) -> CliResult<&'static str> {
    let grid = run.grid(&a.grid)?;
    let x0 = threshold(a.threshold, a.threshold_pct);
    let comps = portfolio_components(&grid, a.weight)?;
    let probability = mixture_cdf_components(&comps, x0).ok_or(PortfolioError::EmptyGrid)?;
    #[derive(Serialize)]
    struct Out {
        weight: f64,
        threshold: f64,
        probability: f64,
    }
    run.write("portfolio_risk.json", &json_bytes(&Out { weight: a.weight, threshold: x0, probability }))?;
    println!("P(r_p < {x0}) at bond weight {} = {probability:.6e}", a.weight);
    Ok("portfolio-risk")
}

fn capm(a: &CapmArgs, run: &mut Run) -> CliResult<&'static str> {
    let asset = run.labeled(&a.input)?;
    let bench = run.labeled(&a.benchmark)?;
    let per = capm_regression_by_bucket(&asset, &bench, &a.edges.0)?;
    let mut ok = Vec::new();
    let mut first_err = None;
    for r in per {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                eprintln!("skipped bucket: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(first_err.unwrap_or(PortfolioError::InvalidEdges).into());
    }
    let mut buf = Vec::new();
    write_regressions_csv(&mut buf, &ok)?;
    run.write("capm.csv", &buf)?;
    println!("{} buckets regressed", ok.len());
    Ok("capm")
}

fn simulate_cmd(a: &SimulateArgs, run: &mut Run) -> CliResult<u64> {
    let text = run.text(&a.config)?;
    if a.joint {
        let mut cfg: JointSimConfig = JointSimConfig::from_json(&text)?;
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        let (stock, bond) = simulate_joint(&cfg)?;
        for (name, s) in [("stock.csv", &stock), ("bond.csv", &bond)] {
            let mut buf = Vec::new();
            write_labeled_csv(&mut buf, s)?;
            run.write(name, &buf)?;
        }
        println!("simulated {} joint days (seed {})", cfg.n, cfg.seed);
        return Ok(cfg.seed);
    }
    let mut cfg = SimConfig::from_json(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let market = simulate(&cfg)?;
    let mut buf = Vec::new();
    write_labeled_csv(&mut buf, &market.series)?;
    run.write("synthetic.csv", &buf)?;
    if let Some(edges) = &a.edges {
        let truth = cfg.truth_table(&market.kappa_path, &edges.0);
        run.write("truth.json", truth.to_json().as_bytes())?;
    }
    println!("simulated {} days (seed {})", cfg.n, cfg.seed);
    Ok(cfg.seed)
}

fn split(a: &SplitArgs, run: &mut Run) -> CliResult<&'static str> {
    let series = run.series(&a.series)?;
    let (train, test) = split_sample(&series, a.seed)?;
    for (name, s) in [("train.csv", &train), ("test.csv", &test)] {
        let mut buf = Vec::new();
        write_labeled_csv(&mut buf, s)?;
        run.write(name, &buf)?;
    }
    println!("train {} / test {}", train.len(), test.len());
    Ok("split")
}

/// One return bracket of the out-of-sample comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketCheck {
    pub low: f64,
    pub high: f64,
    pub predicted: f64,
    pub observed: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Predicted (train mixture) versus observed (test) frequencies of returns
/// in (-inf, e0], (e0, e1], …, (e_last, inf).
///
/// `std_error` is the binomial standard error of the difference between
/// two frequencies, sqrt(p(1-p)(1/n_test + 1/n_train)), since the
/// prediction is itself estimated from `table.total` train days. Tables
/// without a count (entered by hand) use the test term alone.
pub fn bracket_checks(table: &EstimateTable, test: &[f64], edges: &[f64]) -> Result<Vec<BracketCheck>, RiskError> {
    if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RiskError::NonFiniteThreshold);
    }
    let n = test.len() as f64;
    let inv_n = 1.0 / n + if table.total > 0 { 1.0 / table.total as f64 } else { 0.0 };
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    bounds
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let predicted = match (lo.is_finite(), hi.is_finite()) {
                (false, _) => mixture_cdf(table, hi)?,
                (_, false) => 1.0 - mixture_cdf(table, lo)?,
                _ => interval_probability(table, lo, hi)?,
            };
            let count = test.iter().filter(|&&r| r > lo && r <= hi).count() as f64;
            let observed = if n > 0.0 { count / n } else { 0.0 };
            let std_error = (predicted * (1.0 - predicted) * inv_n).sqrt();
            let z = if std_error > 0.0 {
                (observed - predicted) / std_error
            } else if observed == predicted {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(BracketCheck { low: lo, high: hi, predicted, observed, std_error, z })
        })
        .collect()
}

fn validate(a: &ValidateArgs, run: &mut Run) -> CliResult<&'static str> {
    let table = if is_json(&a.train) {
        run.table(&a.train)?
    } else {
        let bytes = run.read(&a.train)?;
        if bytes.starts_with(b"bucket_low") {
            EstimateTable::read_csv(bytes.as_slice())?
        } else {
            let series: LabeledSeries = read_labeled_csv(bytes.as_slice(), &asset_id(&a.train))?;
            let Some(edges) = &a.edges else {
                return Err(Failure::Usage("--edges is required when --train is a labeled series".into()));
            };
            bucket_table(&series, &edges.0)?
        }
    };
    let test = run.labeled(&a.test)?;
    let edges = match &a.brackets {
        Some(b) => b.0.clone(),
        None => {
            let m = mixture_moments(&table)?;
            let half = 0.5 * m.stddev();
            (-8..=8).map(|k| m.mean + half * k as f64).collect()
        }
    };
    let checks = bracket_checks(&table, &test.returns(), &edges)?;
    let rows = checks.iter().map(|c| {
        vec![
            c.low.to_string(),
            c.high.to_string(),
            c.predicted.to_string(),
            c.observed.to_string(),
            c.std_error.to_string(),
            c.z.to_string(),
        ]
    });
    let bytes = csv_bytes(&["bracket_low", "bracket_high", "predicted", "observed", "std_error", "z"], rows)?;
    run.write("validate.csv", &bytes)?;
    let worst = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let outside = checks.iter().filter(|c| c.z.abs() > 3.0).count();
    println!(
        "{} brackets over {} test days; max |z| {worst:.3}; {outside} beyond 3 standard errors",
        checks.len(),
        test.len()
    );
    Ok("validate")
}
