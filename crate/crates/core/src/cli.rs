//! The `expkde` command-line front end.
//!
//! Subcommands:
//!
//! - `fit`: tune a method on a one-column CSV and write the fitted density on
//!   a grid.
//! - `simulate`: run scenario studies and write quartile tables.
//! - `theory`: print asymptotic constants and the optimal `(w*, h*)`.
//! - `scenarios`: list the benchmark presets.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 fit failure,
//! 4 degenerate density in `theory`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exp_kde::SampleSet;
use crate::kernel::KernelSpec;
use crate::mixture::{GaussianMixture, Scenario};
use crate::plot::density_svg;
use crate::sim::{
    fit_method, run_study, Method, Metric, PlotData, StudyConfig, StudyTable, DEFAULT_GRID_POINTS,
    DEFAULT_GRID_SPAN,
};
use crate::theory::{self, Hessian, TheoryConstants};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

/// Grid points of the written density grid are at most this far apart, in
/// units of the effective kernel width `h / sqrt(w)`.
const FIT_GRID_STEP: f64 = 0.2;
/// The written density grid extends this many effective kernel widths past
/// the data.
const FIT_GRID_PAD: f64 = 9.0;
const FIT_GRID_MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "expkde", version, about = "Exponentiated KDE tuned by the Hyvarinen score")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Seed for every random draw (the only source of randomness is scenario
    /// sampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a density to one numeric CSV column.
    Fit(FitArgs),
    /// Run Monte Carlo studies on the scenario presets.
    Simulate(SimulateArgs),
    /// Asymptotic constants and optimal (w*, h*) of a mixture.
    Theory(TheoryArgs),
    /// List the scenario presets.
    Scenarios(ScenariosArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV: one value per line, or a headered table.
    pub input: PathBuf,
    /// Column to read: header name or 1-based index.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_enum, default_value = "hs")]
    pub method: MethodArg,
    /// Density grid output (default: `<input>.density.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum number of grid points written.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Hs,
    Fhs,
    Cv,
    Pi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Hs => Method::Hs,
            MethodArg::Fhs => Method::Fhs,
            MethodArg::Cv => Method::Cv,
            MethodArg::Pi => Method::Pi,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON study file; command-line flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario name or numeral, or `all`; repeatable.
    #[arg(long)]
    pub scenario: Vec<String>,
    /// Sample size; repeatable.
    #[arg(long)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated subset of hs, fhs, cv, pi.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for `study.csv` and `study.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replication records as CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Directory for per-scenario SVG and plot-data CSV of replication 0.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// What to print on standard output.
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Scenario preset name or numeral.
    #[arg(long, conflicts_with = "mixture", required_unless_present = "mixture")]
    pub scenario: Option<String>,
    /// Mixture JSON `{"components": [{"weight", "mean", "sd"}, ...]}`.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Truncation T of the constant integrals (default max|mu| + 8 max sigma).
    #[arg(long = "truncation", short = 'T')]
    pub truncation: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: msg.into(),
        }
    }

    fn fit(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_FIT,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateDensity { .. } => EXIT_DEGENERATE,
            Error::Config(_) | Error::Sample(_) | Error::Parameter(_) => EXIT_INPUT,
            _ => EXIT_FIT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging(&cli);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn init_logging(cli: &Cli) {
    let quiet = if matches!(cli.command, Command::Simulate(_)) {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    let level = match cli.verbose {
        0 => quiet,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs a parsed command, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, out),
        Command::Theory(a) => cmd_theory(a, out),
        Command::Scenarios(a) => cmd_scenarios(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::input(format!("cannot write output: {e}")))
}

/// Reads one numeric column. A first row whose selected field is not a
/// number is taken as a header; any later non-finite or non-numeric value is
/// an error naming its line.
pub fn read_column(path: &Path, column: Option<&str>) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    let Some((_, first)) = rows.first() else {
        return Err(CliError::input(format!("{}: no data", path.display())));
    };
    let parse = |s: &str| s.parse::<f64>().ok();
    let (idx, has_header) = match column {
        None => (0, parse(first.get(0).unwrap_or("")).is_none()),
        Some(c) => match c.parse::<usize>() {
            Ok(0) => return Err(CliError::input("column indices start at 1")),
            Ok(k) => (k - 1, parse(first.get(k - 1).unwrap_or("")).is_none()),
            Err(_) => {
                let k = first.iter().position(|h| h == c).ok_or_else(|| {
                    CliError::input(format!(
                        "{}: no column named '{c}' in header [{}]",
                        path.display(),
                        first.iter().collect::<Vec<_>>().join(", ")
                    ))
                })?;
                (k, true)
            }
        },
    };
    let mut values = Vec::with_capacity(rows.len());
    let mut bad = Vec::new();
    for (line, rec) in rows.iter().skip(usize::from(has_header)) {
        match rec.get(idx).and_then(parse) {
            Some(v) if v.is_finite() => values.push(v),
            _ => bad.push(format!("line {line}: '{}'", rec.get(idx).unwrap_or(""))),
        }
    }
    if !bad.is_empty() {
        let shown: Vec<_> = bad.iter().take(5).cloned().collect();
        let more = if bad.len() > 5 { format!(" and {} more", bad.len() - 5) } else { String::new() };
        return Err(CliError::input(format!(
            "{}: non-finite or non-numeric values at {}{more}",
            path.display(),
            shown.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(CliError::input(format!("{}: no data", path.display())));
    }
    Ok(values)
}

#[derive(Debug, Serialize)]
struct FitReport {
    method: Method,
    n: usize,
    h: f64,
    w: f64,
    objective: Option<f64>,
    normalizer: f64,
    boundary_hit: bool,
    grid_file: String,
    grid_points: usize,
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> CliResult<()> {
    let values = read_column(&a.input, a.column.as_deref())?;
    let grid_path = a.out.clone().unwrap_or_else(|| {
        let mut p = a.input.clone().into_os_string();
        p.push(".density.csv");
        PathBuf::from(p)
    });
    if a.grid_points < 2 {
        return Err(CliError::input("--grid-points must be at least 2"));
    }
    let sample = SampleSet::new(values).map_err(|e| CliError::input(e.to_string()))?;
    let method = Method::from(a.method);
    info!("fitting {method} on {} values", sample.len());
    let fit = fit_method(method, &sample).map_err(|e| match e {
        Error::Config(m) => CliError::input(m),
        other => CliError::fit(other.to_string()),
    })?;
    if fit.boundary_hit {
        warn!("{method}: the selected bandwidth {} lies on the search boundary", fit.h);
    }
    let width = fit.h / fit.w.sqrt();
    let (lo, hi) = (sample.min() - FIT_GRID_PAD * width, sample.max() + FIT_GRID_PAD * width);
    let needed = ((hi - lo) / (FIT_GRID_STEP * width)).ceil() as usize + 1;
    if needed > FIT_GRID_MAX_POINTS {
        warn!("density grid capped at {FIT_GRID_MAX_POINTS} points ({needed} needed to resolve h)");
    }
    let k = needed.clamp(a.grid_points, FIT_GRID_MAX_POINTS.max(a.grid_points));
    let step = (hi - lo) / (k - 1) as f64;
    let mut csv = String::with_capacity(k * 40);
    csv.push_str("x,density\n");
    for i in 0..k {
        let x = if i + 1 == k { hi } else { lo + i as f64 * step };
        csv.push_str(&format!("{x},{}\n", fit.model.density(x)));
    }
    write_file(&grid_path, csv.as_bytes())?;
    let report = FitReport {
        method,
        n: sample.len(),
        h: fit.h,
        w: fit.w,
        objective: fit.objective,
        normalizer: fit.model.normalizer(),
        boundary_hit: fit.boundary_hit,
        grid_file: grid_path.display().to_string(),
        grid_points: k,
    };
    let text = match a.format {
        ReportFormat::Json => json(&report)? + "\n",
        ReportFormat::Text => {
            let obj = report.objective.map_or("-".to_string(), |v| format!("{v:.6e}"));
            format!(
                "method     {}\nn          {}\nh          {:.6e}\nw          {:.6}\nobjective  {obj}\nZ          {:.6e}\nboundary   {}\ngrid       {} ({} points)\n",
                report.method, report.n, report.h, report.w, report.normalizer, report.boundary_hit,
                report.grid_file, report.grid_points
            )
        }
    };
    emit(out, &text)
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::input(format!("cannot encode JSON: {e}")))
}

/// Study file read by `simulate --config`; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyFile {
    pub scenarios: Vec<String>,
    pub n: Vec<usize>,
    pub replications: Option<usize>,
    pub methods: Vec<String>,
    pub grid_points: Option<usize>,
    pub grid_span: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

fn parse_scenarios(names: &[String]) -> CliResult<Vec<Scenario>> {
    let mut v = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            v.extend(Scenario::ALL);
        } else {
            v.push(name.parse::<Scenario>().map_err(|e| CliError::input(e.to_string()))?);
        }
    }
    v.sort();
    v.dedup();
    Ok(v)
}

/// Merges a study file with command-line overrides into one config per
/// scenario and sample size.
pub fn study_configs(a: &SimulateArgs, seed: Option<u64>) -> CliResult<Vec<StudyConfig>> {
    let file = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str::<StudyFile>(&text).map_err(|e| io_err(p, e))?
        }
        None => StudyFile::default(),
    };
    let pick = |cli: &Vec<String>, file: &Vec<String>| if cli.is_empty() { file.clone() } else { cli.clone() };
    let scenario_names = pick(&a.scenario, &file.scenarios);
    if scenario_names.is_empty() {
        return Err(CliError::input(format!(
            "no scenario given; use --scenario with one of: {}, all",
            Scenario::ALL.map(|s| s.name()).join(", ")
        )));
    }
    let scenarios = parse_scenarios(&scenario_names)?;
    let ns = if a.n.is_empty() { file.n.clone() } else { a.n.clone() };
    let ns = if ns.is_empty() { vec![500] } else { ns };
    let method_names = pick(&a.methods, &file.methods);
    let methods = if method_names.is_empty() {
        Method::ALL.to_vec()
    } else {
        let mut m = method_names
            .iter()
            .map(|s| s.trim().parse::<Method>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(e.to_string()))?;
        m.sort();
        m.dedup();
        m
    };
    let mut cfgs = Vec::new();
    for &scenario in &scenarios {
        for &n in &ns {
            let cfg = StudyConfig {
                scenario,
                n,
                replications: a.reps.or(file.replications).unwrap_or(100),
                methods: methods.clone(),
                grid_points: a.grid_points.or(file.grid_points).unwrap_or(DEFAULT_GRID_POINTS),
                grid_span: file.grid_span.unwrap_or(DEFAULT_GRID_SPAN),
                base_seed: seed.or(file.seed).unwrap_or(0),
                workers: a.workers.or(file.workers).unwrap_or(0),
            };
            cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
            cfgs.push(cfg);
        }
    }
    Ok(cfgs)
}

fn records_csv(records: &[crate::sim::MetricsRecord]) -> CliResult<Vec<u8>> {
    let err = |e: csv::Error| CliError::input(format!("cannot write records: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::input(format!("cannot write records: {e}")))
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>, out: &mut dyn Write) -> CliResult<()> {
    let cfgs = study_configs(a, seed)?;
    for p in [&a.out, &a.plot].into_iter().flatten() {
        if p.exists() && !p.is_dir() {
            return Err(CliError::input(format!("{}: exists and is not a directory", p.display())));
        }
    }
    let mut table = StudyTable::default();
    let mut records = Vec::new();
    for cfg in &cfgs {
        info!(
            "{} n={}: {} replications of {:?}",
            cfg.scenario.name(),
            cfg.n,
            cfg.replications,
            cfg.methods
        );
        let outcome = run_study(cfg)?;
        table.extend(outcome.table);
        records.extend(outcome.records);
    }
    let csv = table.to_csv_string()?;
    let json_text = table.to_json()? + "\n";
    if let Some(dir) = &a.out {
        write_file(&dir.join("study.csv"), csv.as_bytes())?;
        write_file(&dir.join("study.json"), json_text.as_bytes())?;
    }
    if let Some(path) = &a.records {
        write_file(path, &records_csv(&records)?)?;
    }
    if let Some(dir) = &a.plot {
        let mut done = Vec::new();
        for cfg in &cfgs {
            if done.contains(&(cfg.scenario, cfg.n)) {
                continue;
            }
            done.push((cfg.scenario, cfg.n));
            let data = PlotData::for_replication(cfg, 0)?;
            let stem = format!("{}_n{}", cfg.scenario.name(), cfg.n);
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            write_file(&dir.join(format!("{stem}.csv")), &buf)?;
            write_file(&dir.join(format!("{stem}.svg")), density_svg(&data).as_bytes())?;
        }
    }
    let text = match a.format {
        TableFormat::Csv => csv,
        TableFormat::Json => json_text,
        TableFormat::Text => {
            let mut s = format!("replications: {}\n", cfgs[0].replications);
            for m in Metric::ALL {
                s.push('\n');
                s.push_str(&table.render(m));
            }
            s
        }
    };
    emit(out, &text)
}

#[derive(Debug, Serialize)]
struct TheoryReport {
    source: String,
    n: usize,
    constants: TheoryConstants,
    cauchy_schwarz_gap: f64,
    h_star: f64,
    w_star: f64,
    hessian: Hessian,
}

fn cmd_theory(a: &TheoryArgs, out: &mut dyn Write) -> CliResult<()> {
    let (source, mix) = match (&a.scenario, &a.mixture) {
        (Some(s), _) => {
            let sc = s.parse::<Scenario>().map_err(|e| CliError::input(e.to_string()))?;
            (sc.label(), sc.preset())
        }
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let mix = GaussianMixture::from_json(&text).map_err(|e| io_err(p, e))?;
            (p.display().to_string(), mix)
        }
        (None, None) => return Err(CliError::input("give --scenario or --mixture")),
    };
    if a.n == 0 {
        return Err(CliError::input("--n must be positive"));
    }
    let t = a.truncation.unwrap_or_else(|| theory::default_truncation(&mix));
    let c = theory::constants(&mix, &KernelSpec::GAUSSIAN, t)?;
    let gap = c.cauchy_schwarz_gap();
    let optimum = c.optimal_h(a.n);
    let h_star = match optimum {
        Ok(h) => h,
        Err(e) => {
            let text = match a.format {
                ReportFormat::Json => json(&c)? + "\n",
                ReportFormat::Text => constants_text(&source, &c, gap),
            };
            emit(out, &text)?;
            return Err(e.into());
        }
    };
    let w_star = c.optimal_w(h_star);
    let hessian = c.hessian_leading(w_star, h_star, a.n);
    let text = match a.format {
        ReportFormat::Json => {
            json(&TheoryReport {
                source,
                n: a.n,
                constants: c,
                cauchy_schwarz_gap: gap,
                h_star,
                w_star,
                hessian,
            })? + "\n"
        }
        ReportFormat::Text => {
            let mut s = constants_text(&source, &c, gap);
            s.push_str(&format!(
                "n               {}\nh*              {:.10e}\nw*              {:.10}\nHessian         [[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]\npositive def.   {}\n",
                a.n,
                h_star,
                w_star,
                hessian.matrix[0][0],
                hessian.matrix[0][1],
                hessian.matrix[1][0],
                hessian.matrix[1][1],
                hessian.positive_definite
            ));
            s
        }
    };
    emit(out, &text)
}

fn constants_text(source: &str, c: &TheoryConstants, gap: f64) -> String {
    let mut s = format!(
        "density         {source}\nkernel order L  {}\ntruncation T    {}\nC(B,1)          {:.10e}\nC(B,L)          {:.10e}\nC(B,2L)         {:.10e}\nC(V)            {:.10e}\n",
        c.order, c.truncation, c.c_b1, c.c_bl, c.c_b2l, c.c_v
    );
    for (l, v) in &c.c_prime_bl {
        s.push_str(&format!("{:<16}{v:.10e}\n", format!("C'(B,{l})")));
    }
    s.push_str(&format!("C'(B,2L)        {:.10e}\n", c.c_prime_b2l));
    s.push_str(&format!("4C1C2L - CL^2   {gap:.10e}\n"));
    s
}

#[derive(Debug, Serialize)]
struct ScenarioEntry {
    name: &'static str,
    numeral: &'static str,
    label: String,
    mixture: GaussianMixture,
}

fn cmd_scenarios(a: &ScenariosArgs, out: &mut dyn Write) -> CliResult<()> {
    let entries: Vec<ScenarioEntry> = Scenario::ALL
        .iter()
        .map(|&s| ScenarioEntry {
            name: s.name(),
            numeral: s.numeral(),
            label: s.label(),
            mixture: s.preset(),
        })
        .collect();
    let text = match a.format {
        ReportFormat::Json => json(&entries)? + "\n",
        ReportFormat::Text => {
            let mut s = String::new();
            for e in &entries {
                s.push_str(&format!("{:<10}{:<5}{}\n", e.name, e.numeral, e.label));
                for c in e.mixture.components() {
                    s.push_str(&format!(
                        "          weight {:<10.6} mean {:<10.6} sd {:.6}\n",
                        c.weight, c.mean, c.sd
                    ));
                }
            }
            s
        }
    };
    emit(out, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("expkde").chain(args.iter().copied())).unwrap()
    }

    fn run_capture(args: &[&str]) -> (CliResult<()>, String) {
        let cli = parse(args);
        let mut buf = Vec::new();
        let r = run(&cli, &mut buf);
        (r, String::from_utf8(buf).unwrap())
    }

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_plain_and_headered_columns() {
        let f = temp_csv("1.5\n0\n-2\n\n3e-1\n");
        assert_eq!(read_column(f.path(), None).unwrap(), vec![1.5, 0.0, -2.0, 0.3]);
        let f = temp_csv("id,income\n1,0.25\n2,0\n3,7\n");
        assert_eq!(read_column(f.path(), Some("income")).unwrap(), vec![0.25, 0.0, 7.0]);
        assert_eq!(read_column(f.path(), Some("2")).unwrap(), vec![0.25, 0.0, 7.0]);
        assert_eq!(read_column(f.path(), None).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let f = temp_csv("x\n1\nnan\n2\nabc\n");
        let e = read_column(f.path(), None).unwrap_err();
        assert_eq!(e.code, EXIT_INPUT);
        assert!(e.message.contains("line 3") && e.message.contains("line 5"), "{}", e.message);
        let f = temp_csv("");
        assert_eq!(read_column(f.path(), None).unwrap_err().code, EXIT_INPUT);
        let f = temp_csv("a,b\n1,2\n");
        assert_eq!(read_column(f.path(), Some("c")).unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::DegenerateDensity { denominator: 0.0 }).code, EXIT_DEGENERATE);
        assert_eq!(CliError::from(Error::Config("x".into())).code, EXIT_INPUT);
        assert_eq!(CliError::from(Error::Tuning("x".into())).code, EXIT_FIT);
    }

    #[test]
    fn simulate_rejects_zero_reps_and_bad_scenario() {
        let (r, _) = run_capture(&["simulate", "--scenario", "bimodal", "--reps", "0"]);
        assert_eq!(r.unwrap_err().code, EXIT_INPUT);
        let (r, _) = run_capture(&["simulate", "--scenario", "unimodal", "--reps", "1"]);
        let e = r.unwrap_err();
        assert_eq!(e.code, EXIT_INPUT);
        assert!(e.message.contains("bimodal") && e.message.contains("outlier"), "{}", e.message);
    }

    #[test]
    fn study_file_and_overrides() {
        let f = temp_csv(r#"{"scenarios": ["ii", "claw"], "n": [100, 200], "replications": 3, "methods": ["pi"], "seed": 9}"#);
        let path = f.path().to_str().unwrap().to_string();
        let cli = parse(&["simulate", "--config", &path, "--n", "150", "--seed", "4"]);
        let Command::Simulate(a) = &cli.command else { unreachable!() };
        let cfgs = study_configs(a, cli.seed).unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!(cfgs[0].scenario, Scenario::Trimodal);
        assert_eq!(cfgs[1].scenario, Scenario::Claw);
        assert!(cfgs.iter().all(|c| c.n == 150 && c.replications == 3 && c.base_seed == 4));
        assert_eq!(cfgs[0].methods, vec![Method::Pi]);
        let bad = temp_csv(r#"{"replicates": 3}"#);
        let bad_path = bad.path().to_str().unwrap().to_string();
        let cli = parse(&["simulate", "--config", &bad_path, "--scenario", "claw"]);
        let Command::Simulate(a) = &cli.command else { unreachable!() };
        assert_eq!(study_configs(a, None).unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn theory_reports_and_degenerate_exit() {
        let (r, text) = run_capture(&["theory", "--scenario", "bimodal", "--n", "500"]);
        r.unwrap();
        assert!(text.contains("w*") && text.contains("positive def.   true"), "{text}");
        let f = temp_csv(r#"{"components": [{"weight": 1.0, "mean": 0.0, "sd": 1.0}]}"#);
        let (r, _) = run_capture(&["theory", "--mixture", f.path().to_str().unwrap()]);
        let e = r.unwrap_err();
        assert_eq!(e.code, EXIT_DEGENERATE);
        assert!(e.message.contains("D(e)"));
    }

    #[test]
    fn scenarios_lists_all_presets() {
        let (r, text) = run_capture(&["scenarios", "--format", "json"]);
        r.unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 5);
        assert_eq!(v[4]["name"], "outlier");
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["expkde", "fit", "x.csv", "--bogus"]).is_err());
        assert_eq!(main_from_args(["expkde", "simulate", "--frobnicate"]), EXIT_INPUT);
    }
}
