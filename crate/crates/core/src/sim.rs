//! Accuracy metrics and the Monte Carlo study harness.
//!
//! Every replication draws one sample from a scenario preset, fits each
//! requested method on it and scores the fitted density against the truth
//! with three grid metrics:
//!
//! ```text
//! MISE_f = ∫ (f̂ - f)²            KL = ∫ f log(f / f̂)
//! MISE_C = ∫ (Ĉ - C)²,           C(x) = f''(x) / (1 + f'(x)²)^{3/2}
//! ```
//!
//! Replications run in parallel on a dedicated thread pool. Each one owns a
//! ChaCha20 stream selected by its index, so the results do not depend on the
//! worker count or on scheduling order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{plugin_bandwidth, ucv_select, PluginConfig};
use crate::error::{Error, Result};
use crate::exp_kde::{quantile_sorted, DensityDerivs, ExpKdeModel, SampleSet};
use crate::hscore::{silverman_bandwidth, tune, BoundPolicy, TuneConfig, DEFAULT_H_FACTORS};
use crate::mixture::{GaussianMixture, Scenario};
use crate::quad::{trapezoid, QuadConfig};

/// Default number of metric grid points.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Smallest accepted metric grid.
pub const MIN_GRID_POINTS: usize = 64;
/// The metric grid spans `[min_j(μ_j - kσ_j), max_j(μ_j + kσ_j)]` with this `k`.
pub const DEFAULT_GRID_SPAN: f64 = 5.0;
/// Quantile levels reported by a study.
pub const QUANTILE_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

/// Bandwidth selectors compared by the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Joint H-score tuning of `(w, h)`.
    #[serde(rename = "HS")]
    Hs,
    /// H-score tuning of `h` with `w = 1`.
    #[serde(rename = "fHS")]
    Fhs,
    /// Unbiased least-squares cross-validation.
    #[serde(rename = "CV")]
    Cv,
    /// AMISE plug-in rule.
    #[serde(rename = "PI")]
    Pi,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hs, Method::Fhs, Method::Cv, Method::Pi];

    pub fn label(self) -> &'static str {
        match self {
            Method::Hs => "HS",
            Method::Fhs => "fHS",
            Method::Cv => "CV",
            Method::Pi => "PI",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hs" => Ok(Method::Hs),
            "fhs" => Ok(Method::Fhs),
            "cv" => Ok(Method::Cv),
            "pi" => Ok(Method::Pi),
            _ => Err(Error::Config(format!("unknown method '{s}'; expected one of hs, fhs, cv, pi"))),
        }
    }
}

/// The three accuracy metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MiseF,
    Kl,
    MiseC,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::MiseF, Metric::Kl, Metric::MiseC];

    pub fn label(self) -> &'static str {
        match self {
            Metric::MiseF => "MISE_f",
            Metric::Kl => "KL",
            Metric::MiseC => "MISE_C",
        }
    }

    /// Multiplier applied in rendered tables only.
    pub fn display_factor(self, scenario: Scenario) -> f64 {
        match self {
            Metric::MiseF | Metric::Kl => 100.0,
            Metric::MiseC => match scenario {
                Scenario::Bimodal | Scenario::Trimodal => 10.0,
                _ => 1.0,
            },
        }
    }
}

/// A density with log-density and first two derivatives.
pub trait DensityEstimate {
    fn log_density(&self, x: f64) -> f64;

    fn derivs(&self, x: f64) -> DensityDerivs;

    fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }
}

impl DensityEstimate for ExpKdeModel {
    fn log_density(&self, x: f64) -> f64 {
        ExpKdeModel::log_density(self, x)
    }

    fn derivs(&self, x: f64) -> DensityDerivs {
        self.density_derivs(x)
    }
}

impl DensityEstimate for GaussianMixture {
    fn log_density(&self, x: f64) -> f64 {
        self.log_pdf(x)
    }

    fn derivs(&self, x: f64) -> DensityDerivs {
        DensityDerivs {
            f: self.pdf(x),
            f1: self.pdf_deriv(x, 1).unwrap_or(f64::NAN),
            f2: self.pdf_deriv(x, 2).unwrap_or(f64::NAN),
        }
    }
}

/// Curvature `f'' / (1 + f'²)^{3/2}` of the graph of a density.
pub fn curvature(d: &DensityDerivs) -> f64 {
    d.f2 / (1.0 + d.f1 * d.f1).powf(1.5)
}

/// Equally spaced evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl MetricGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid grid range [{lo}, {hi}]")));
        }
        if points < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {points}")));
        }
        Ok(Self { lo, hi, points })
    }

    /// `points` nodes over `mix.support_range(span)`.
    pub fn for_mixture(mix: &GaussianMixture, points: usize, span: f64) -> Result<Self> {
        let (lo, hi) = mix.support_range(span);
        Self::new(lo, hi, points)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points)
            .map(|k| if k + 1 == self.points { self.hi } else { self.lo + k as f64 * dx })
            .collect()
    }
}

/// Truth tabulated on a grid, reused across methods.
#[derive(Debug, Clone)]
pub struct TruthTable {
    xs: Vec<f64>,
    f: Vec<f64>,
    log_f: Vec<f64>,
    curvature: Vec<f64>,
}

impl TruthTable {
    pub fn new<D: DensityEstimate + ?Sized>(truth: &D, grid: &MetricGrid) -> Self {
        let xs = grid.nodes();
        let mut f = Vec::with_capacity(xs.len());
        let mut log_f = Vec::with_capacity(xs.len());
        let mut curv = Vec::with_capacity(xs.len());
        for &x in &xs {
            let d = truth.derivs(x);
            f.push(d.f);
            log_f.push(truth.log_density(x));
            curv.push(curvature(&d));
        }
        Self {
            xs,
            f,
            log_f,
            curvature: curv,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn density(&self) -> &[f64] {
        &self.f
    }

    /// All three metrics of `model` with one pass over the grid.
    pub fn metrics<D: DensityEstimate + ?Sized>(&self, model: &D) -> Metrics {
        let k = self.xs.len();
        let mut sq = Vec::with_capacity(k);
        let mut kl = Vec::with_capacity(k);
        let mut cs = Vec::with_capacity(k);
        for (i, &x) in self.xs.iter().enumerate() {
            let d = model.derivs(x);
            let log_m = model.log_density(x);
            sq.push((d.f - self.f[i]).powi(2));
            kl.push(if self.f[i] > 0.0 { self.f[i] * (self.log_f[i] - log_m) } else { 0.0 });
            cs.push((curvature(&d) - self.curvature[i]).powi(2));
        }
        Metrics {
            mise_f: trapezoid(&self.xs, &sq),
            kl: trapezoid(&self.xs, &kl),
            mise_c: trapezoid(&self.xs, &cs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mise_f: f64,
    pub kl: f64,
    pub mise_c: f64,
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::MiseF => self.mise_f,
            Metric::Kl => self.kl,
            Metric::MiseC => self.mise_c,
        }
    }

    fn is_finite(&self) -> bool {
        self.mise_f.is_finite() && self.kl.is_finite() && self.mise_c.is_finite()
    }
}

/// Trapezoid `∫ (f̂ - f)²` on the grid.
pub fn metrics_mise_f<T, M>(truth: &T, model: &M, grid: &MetricGrid) -> f64
where
    T: DensityEstimate + ?Sized,
    M: DensityEstimate + ?Sized,
{
    TruthTable::new(truth, grid).metrics(model).mise_f
}

/// Trapezoid `∫ f log(f / f̂)` on the grid.
pub fn metrics_kl<T, M>(truth: &T, model: &M, grid: &MetricGrid) -> f64
where
    T: DensityEstimate + ?Sized,
    M: DensityEstimate + ?Sized,
{
    TruthTable::new(truth, grid).metrics(model).kl
}

/// Trapezoid `∫ (Ĉ - C)²` on the grid.
pub fn metrics_mise_c<T, M>(truth: &T, model: &M, grid: &MetricGrid) -> f64
where
    T: DensityEstimate + ?Sized,
    M: DensityEstimate + ?Sized,
{
    TruthTable::new(truth, grid).metrics(model).mise_c
}

/// A fitted method.
#[derive(Debug, Clone)]
pub struct Fit {
    pub method: Method,
    pub h: f64,
    pub w: f64,
    /// Criterion value at the optimum (H-score or UCV); none for PI.
    pub objective: Option<f64>,
    pub boundary_hit: bool,
    pub model: ExpKdeModel,
}

/// Default `h` search range of CV: the normal-reference bandwidth times
/// `[1/20, 20]`.
pub fn cv_bandwidth_bounds(sample: &SampleSet) -> Result<(f64, f64)> {
    let hs = silverman_bandwidth(sample);
    if !(hs > 0.0 && hs.is_finite()) {
        return Err(Error::Config(
            "sample has zero spread; cannot derive default bandwidth bounds".into(),
        ));
    }
    Ok((hs * DEFAULT_H_FACTORS.0, hs * DEFAULT_H_FACTORS.1))
}

/// Fits one method with its default configuration.
pub fn fit_method(method: Method, sample: &SampleSet) -> Result<Fit> {
    let sample = std::sync::Arc::new(sample.clone());
    match method {
        Method::Hs | Method::Fhs => {
            let mut cfg = TuneConfig::default_for(&sample)?;
            if method == Method::Fhs {
                cfg = cfg.with_fixed_w(1.0);
            }
            let r = tune(&sample, &cfg)?;
            let model = ExpKdeModel::fit(sample, r.h_hat, r.w_hat, QuadConfig::default())?;
            Ok(Fit {
                method,
                h: r.h_hat,
                w: r.w_hat,
                objective: Some(r.objective),
                boundary_hit: r.boundary_hit,
                model,
            })
        }
        Method::Cv => {
            let sel = ucv_select(&sample, cv_bandwidth_bounds(&sample)?, BoundPolicy::WarnOnBoundary)?;
            let model = ExpKdeModel::kde(sample, sel.h)?;
            Ok(Fit {
                method,
                h: sel.h,
                w: 1.0,
                objective: Some(sel.objective),
                boundary_hit: sel.boundary_hit,
                model,
            })
        }
        Method::Pi => {
            let h = plugin_bandwidth(&sample, &PluginConfig::default())?;
            let model = ExpKdeModel::kde(sample, h)?;
            Ok(Fit {
                method,
                h,
                w: 1.0,
                objective: None,
                boundary_hit: false,
                model,
            })
        }
    }
}

/// Design of one scenario study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub grid_points: usize,
    /// Half-width of the metric grid in component standard deviations.
    pub grid_span: f64,
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, n: usize, replications: usize) -> Self {
        Self {
            scenario,
            n,
            replications,
            methods: Method::ALL.to_vec(),
            grid_points: DEFAULT_GRID_POINTS,
            grid_span: DEFAULT_GRID_SPAN,
            base_seed: 0,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("sample size must be at least 2, got {}", self.n)));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {}",
                self.grid_points
            )));
        }
        if !(self.grid_span > 0.0 && self.grid_span.is_finite()) {
            return Err(Error::Config(format!("grid span must be positive, got {}", self.grid_span)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<MetricGrid> {
        MetricGrid::for_mixture(&self.scenario.preset(), self.grid_points, self.grid_span)
    }

    /// The sample of replication `index`: ChaCha20 seeded by `base_seed`,
    /// stream `index`.
    pub fn replication_sample(&self, index: usize) -> Result<SampleSet> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.base_seed);
        rng.set_stream(index as u64);
        SampleSet::new(self.scenario.preset().draw(&mut rng, self.n))
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    pub n: usize,
    pub replication: usize,
    pub method: Method,
    pub h_hat: Option<f64>,
    pub w_hat: Option<f64>,
    pub mise_f: Option<f64>,
    pub kl: Option<f64>,
    pub mise_c: Option<f64>,
    pub boundary_hit: bool,
    /// Wall time of the fit in seconds; the only non-reproducible field.
    pub fit_seconds: f64,
    pub failure: Option<String>,
}

impl MetricsRecord {
    pub fn metrics(&self) -> Option<Metrics> {
        Some(Metrics {
            mise_f: self.mise_f?,
            kl: self.kl?,
            mise_c: self.mise_c?,
        })
    }

    /// Equality ignoring the wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.fit_seconds = other.fit_seconds;
        a == *other
    }
}

fn run_replication_with(cfg: &StudyConfig, truth: &TruthTable, index: usize) -> Vec<MetricsRecord> {
    let blank = |method: Method| MetricsRecord {
        scenario: cfg.scenario,
        n: cfg.n,
        replication: index,
        method,
        h_hat: None,
        w_hat: None,
        mise_f: None,
        kl: None,
        mise_c: None,
        boundary_hit: false,
        fit_seconds: 0.0,
        failure: None,
    };
    let sample = match cfg.replication_sample(index) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|&m| MetricsRecord {
                    failure: Some(format!("sampling failed: {e}")),
                    ..blank(m)
                })
                .collect()
        }
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let fit = fit_method(method, &sample);
            let fit_seconds = start.elapsed().as_secs_f64();
            match fit {
                Ok(fit) => {
                    let m = truth.metrics(&fit.model);
                    let failure = (!m.is_finite()).then(|| format!("non-finite metrics {m:?}"));
                    MetricsRecord {
                        h_hat: Some(fit.h),
                        w_hat: Some(fit.w),
                        mise_f: Some(m.mise_f),
                        kl: Some(m.kl),
                        mise_c: Some(m.mise_c),
                        boundary_hit: fit.boundary_hit,
                        fit_seconds,
                        failure,
                        ..blank(method)
                    }
                }
                Err(e) => MetricsRecord {
                    fit_seconds,
                    failure: Some(e.to_string()),
                    ..blank(method)
                },
            }
        })
        .collect()
}

/// Draws replication `index` and fits every configured method on it. Fit
/// failures are recorded, not returned.
pub fn run_replication(cfg: &StudyConfig, index: usize) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let truth = TruthTable::new(&cfg.scenario.preset(), &cfg.grid()?);
    Ok(run_replication_with(cfg, &truth, index))
}

/// Type-7 quartiles of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

impl Quartiles {
    /// `None` for an empty input; NaNs must be removed beforehand.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let [a, b, c] = QUANTILE_LEVELS.map(|p| quantile_sorted(&v, p));
        Some(Self { q25: a, q50: b, q75: c })
    }

    pub fn at(&self, level: usize) -> f64 {
        [self.q25, self.q50, self.q75][level]
    }
}

/// Summary of one method in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub method: Method,
    /// Replications entering the quantiles.
    pub used: usize,
    /// Replications excluded because the fit failed.
    pub excluded: usize,
    pub boundary_hits: usize,
    pub mise_f: Option<Quartiles>,
    pub kl: Option<Quartiles>,
    pub mise_c: Option<Quartiles>,
}

impl MethodSummary {
    pub fn quartiles(&self, metric: Metric) -> Option<&Quartiles> {
        match metric {
            Metric::MiseF => self.mise_f.as_ref(),
            Metric::Kl => self.kl.as_ref(),
            Metric::MiseC => self.mise_c.as_ref(),
        }
    }

    pub fn median(&self, metric: Metric) -> Option<f64> {
        self.quartiles(metric).map(|q| q.q50)
    }

    fn from_records(scenario: Scenario, n: usize, method: Method, records: &[MetricsRecord]) -> Self {
        let mine: Vec<&MetricsRecord> = records.iter().filter(|r| r.method == method).collect();
        let ok: Vec<Metrics> = mine
            .iter()
            .filter(|r| r.failure.is_none())
            .filter_map(|r| r.metrics())
            .collect();
        let col = |m: Metric| Quartiles::of(&ok.iter().map(|x| x.get(m)).collect::<Vec<_>>());
        Self {
            scenario,
            n,
            method,
            used: ok.len(),
            excluded: mine.len() - ok.len(),
            boundary_hits: mine.iter().filter(|r| r.boundary_hit).count(),
            mise_f: col(Metric::MiseF),
            kl: col(Metric::Kl),
            mise_c: col(Metric::MiseC),
        }
    }
}

/// Quartile table of one or more scenario studies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<MethodSummary>,
}

/// Records and their summary.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub table: StudyTable,
    pub records: Vec<MetricsRecord>,
}

/// Runs every replication of `cfg` on `cfg.workers` threads and summarizes
/// them per method. Records are in replication order, then method order.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let truth = TruthTable::new(&cfg.scenario.preset(), &cfg.grid()?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Vec<MetricsRecord>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_replication_with(cfg, &truth, i))
            .collect()
    });
    let records: Vec<MetricsRecord> = per_rep.into_iter().flatten().collect();
    let rows = cfg
        .methods
        .iter()
        .map(|&m| MethodSummary::from_records(cfg.scenario, cfg.n, m, &records))
        .collect();
    Ok(StudyOutcome {
        table: StudyTable { rows },
        records,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    n: usize,
    method: &'a str,
    quantile: f64,
    mise_f: Option<f64>,
    kl: Option<f64>,
    mise_c: Option<f64>,
    used: usize,
    excluded: usize,
}

impl StudyTable {
    pub fn extend(&mut self, other: StudyTable) {
        self.rows.extend(other.rows);
    }

    pub fn find(&self, scenario: Scenario, n: usize, method: Method) -> Option<&MethodSummary> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.n == n && r.method == method)
    }

    /// One row per scenario, sample size, method and quantile level, with
    /// unscaled metric columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for r in &self.rows {
            for (k, &p) in QUANTILE_LEVELS.iter().enumerate() {
                w.serialize(CsvRow {
                    scenario: r.scenario.name(),
                    n: r.n,
                    method: r.method.label(),
                    quantile: p,
                    mise_f: r.mise_f.map(|q| q.at(k)),
                    kl: r.kl.map(|q| q.at(k)),
                    mise_c: r.mise_c.map(|q| q.at(k)),
                    used: r.used,
                    excluded: r.excluded,
                })
                .map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
            }
        }
        w.flush().map_err(|e| Error::Config(format!("cannot write CSV: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
    }

    /// Nested JSON, scenarios then sample sizes then methods.
    pub fn to_json(&self) -> Result<String> {
        use std::collections::BTreeMap;
        let mut nested: BTreeMap<String, BTreeMap<usize, BTreeMap<&str, &MethodSummary>>> = BTreeMap::new();
        for r in &self.rows {
            nested
                .entry(r.scenario.name().to_string())
                .or_default()
                .entry(r.n)
                .or_default()
                .insert(r.method.label(), r);
        }
        serde_json::to_string_pretty(&nested).map_err(|e| Error::Config(format!("cannot write JSON: {e}")))
    }

    /// Plain-text table of one metric in the usual comparison layout:
    /// scenarios down, quantile levels within each scenario, methods across,
    /// one column block per sample size. Values carry the display factor.
    pub fn render(&self, metric: Metric) -> String {
        let mut scenarios: Vec<Scenario> = Vec::new();
        let mut ns: Vec<usize> = Vec::new();
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !scenarios.contains(&r.scenario) {
                scenarios.push(r.scenario);
            }
            if !ns.contains(&r.n) {
                ns.push(r.n);
            }
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        scenarios.sort();
        ns.sort_unstable();
        methods.sort();
        const CELL: usize = 9;
        let mut s = String::new();
        let factors: Vec<String> = scenarios
            .iter()
            .map(|&sc| format!("x{}", metric.display_factor(sc)))
            .collect();
        s.push_str(&format!("{} quantiles (scaled: {})\n", metric.label(), factors.join(" ")));
        let head_w = 16 + 6;
        s.push_str(&" ".repeat(head_w));
        for &n in &ns {
            s.push_str(&format!(" | {:<w$}", format!("n={n}"), w = CELL * methods.len()));
        }
        s.push('\n');
        s.push_str(&format!("{:<16}{:<6}", "Scenario", "q"));
        for _ in &ns {
            s.push_str(" | ");
            for m in &methods {
                s.push_str(&format!("{:>w$}", m.label(), w = CELL));
            }
        }
        s.push('\n');
        for &sc in &scenarios {
            let factor = metric.display_factor(sc);
            for (k, p) in QUANTILE_LEVELS.iter().enumerate() {
                let name = if k == 1 { sc.label() } else { String::new() };
                s.push_str(&format!("{:<16}{:<6}", name, format!("{}%", (p * 100.0) as u32)));
                for &n in &ns {
                    s.push_str(" | ");
                    for &m in &methods {
                        let cell = self
                            .find(sc, n, m)
                            .and_then(|r| r.quartiles(metric))
                            .map(|q| format!("{:.2}", q.at(k) * factor))
                            .unwrap_or_else(|| "-".into());
                        s.push_str(&format!("{cell:>w$}", w = CELL));
                    }
                }
                s.push('\n');
            }
        }
        let excluded: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.excluded > 0)
            .map(|r| format!("{} n={} {}: {}", r.scenario.name(), r.n, r.method, r.excluded))
            .collect();
        if !excluded.is_empty() {
            s.push_str(&format!("excluded fits: {}\n", excluded.join("; ")));
        }
        s
    }
}

/// Truth and fitted densities of one replication on the metric grid.
#[derive(Debug, Clone)]
pub struct PlotData {
    pub scenario: Scenario,
    pub n: usize,
    pub sample: SampleSet,
    pub xs: Vec<f64>,
    pub truth: Vec<f64>,
    /// One curve per method; `None` when the fit failed.
    pub curves: Vec<(Method, Option<Vec<f64>>)>,
}

impl PlotData {
    /// Fits the methods of `cfg` on replication `index`.
    pub fn for_replication(cfg: &StudyConfig, index: usize) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let truth = TruthTable::new(&cfg.scenario.preset(), &grid);
        let sample = cfg.replication_sample(index)?;
        let curves = cfg
            .methods
            .iter()
            .map(|&m| {
                let curve = fit_method(m, &sample)
                    .ok()
                    .map(|fit| truth.nodes().iter().map(|&x| fit.model.density(x)).collect());
                (m, curve)
            })
            .collect();
        Ok(Self {
            scenario: cfg.scenario,
            n: cfg.n,
            sample,
            xs: truth.nodes().to_vec(),
            truth: truth.density().to_vec(),
            curves,
        })
    }

    /// Columns `x, truth` and one per method (empty cells for failed fits).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Config(format!("cannot write CSV: {e}"));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["x".to_string(), "truth".to_string()];
        header.extend(self.curves.iter().map(|(m, _)| m.label().to_string()));
        w.write_record(&header).map_err(err)?;
        for (i, &x) in self.xs.iter().enumerate() {
            let mut row = vec![x.to_string(), self.truth[i].to_string()];
            row.extend(
                self.curves
                    .iter()
                    .map(|(_, c)| c.as_ref().map(|c| c[i].to_string()).unwrap_or_default()),
            );
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("cannot write CSV: {e}")))
    }
}
