//! Command-line front end.
//!
//! Every setting is a `key=value` pair whose key is the long flag name. A
//! config file (flat `key=value` text or a flat JSON object) supplies a base
//! layer, flags override it, and `TWCORR_SEED` overrides the seed last. The
//! fully resolved configuration is echoed at the top of every output file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ensembles::{build_r, build_w, DataMatrix, EntryDistribution};
use crate::error::{Error, Result};
use crate::experiments::{
    ks_distance, run_delocalization, run_edge_experiment, run_green_comparison, scaling_transform, with_workers, Edge,
    ExperimentConfig, GreenArm, GreenComparisonConfig, MatrixForm, Polynomial, Scaling,
};
use crate::mp_law::{mp_cdf, mp_density, mp_params, nonasymptotic_params};
use crate::spectra::symmetric_eigen;
use crate::tracy_widom::{tw1_cdf_table, PainleveConfig, TW1Table, TableSource};
use crate::verify::identity_suite;

pub const VERSION: &str = match option_env!("TWCORR_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

pub const SEED_ENV: &str = "TWCORR_SEED";
pub const CACHE_ENV: &str = "TWCORR_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "twcorr", version, about = "Extreme eigenvalues of sample correlation matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandName {
    Simulate,
    TwTable,
    MpDensity,
    Verify,
    TestIndependence,
    GreenCompare,
    Delocalize,
}

#[derive(Debug, Subcommand)]
pub enum CommandKind {
    /// Monte Carlo edge statistics, one CSV row per replica
    Simulate(Flags),
    /// Solve Painlevé II and write the TW1 table
    TwTable(Flags),
    /// Tabulate the Marchenko–Pastur density and CDF
    MpDensity(Flags),
    /// Run the identity suites; nonzero exit on failure
    Verify(Flags),
    /// TW1 test of independence for a data file
    TestIndependence(Flags),
    /// Green-function comparison statistic for two ensembles
    GreenCompare(Flags),
    /// Largest singular-vector component per replica
    Delocalize(Flags),
}

impl CommandKind {
    fn split(self) -> (CommandName, Flags) {
        match self {
            CommandKind::Simulate(f) => (CommandName::Simulate, f),
            CommandKind::TwTable(f) => (CommandName::TwTable, f),
            CommandKind::MpDensity(f) => (CommandName::MpDensity, f),
            CommandKind::Verify(f) => (CommandName::Verify, f),
            CommandKind::TestIndependence(f) => (CommandName::TestIndependence, f),
            CommandKind::GreenCompare(f) => (CommandName::GreenCompare, f),
            CommandKind::Delocalize(f) => (CommandName::Delocalize, f),
        }
    }
}

impl CommandName {
    pub fn label(self) -> &'static str {
        match self {
            CommandName::Simulate => "simulate",
            CommandName::TwTable => "tw-table",
            CommandName::MpDensity => "mp-density",
            CommandName::Verify => "verify",
            CommandName::TestIndependence => "test-independence",
            CommandName::GreenCompare => "green-compare",
            CommandName::Delocalize => "delocalize",
        }
    }
}

/// Flags shared by every subcommand. Values stay strings until resolution
/// so file and flag layers are merged before any parsing.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// key=value or JSON config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// rademacher | gaussian | uniform_symmetric | laplace | truncated:<base>:<K>
    #[arg(long)]
    pub dist: Option<String>,
    /// w | r | s
    #[arg(long)]
    pub form: Option<String>,
    /// largest | smallest
    #[arg(long)]
    pub edge: Option<String>,
    #[arg(long)]
    pub replicas: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// n | n_minus_1
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long = "t-plus", allow_hyphen_values = true)]
    pub t_plus: Option<String>,
    #[arg(long = "t-min", allow_hyphen_values = true)]
    pub t_min: Option<String>,
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    /// aspect ratio for mp-density (default p/n)
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub points: Option<String>,
    /// spectral parameter E for green-compare (default λ₊)
    #[arg(long)]
    pub energy: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    /// polynomial coefficients c0,c1,... (degree ≤ 4)
    #[arg(long = "test-fn")]
    pub test_fn: Option<String>,
    /// second ensemble for green-compare
    #[arg(long = "dist-w")]
    pub dist_w: Option<String>,
    #[arg(long = "seed-w")]
    pub seed_w: Option<String>,
    /// input CSV for test-independence
    #[arg(long)]
    pub data: Option<String>,
    /// rows_are_variables | columns_are_variables
    #[arg(long)]
    pub orientation: Option<String>,
    /// known_zero | unknown
    #[arg(long)]
    pub mean: Option<String>,
    /// import a TW1 table instead of solving
    #[arg(long)]
    pub table: Option<String>,
}

/// Recognised keys, in echo order.
pub const KEYS: [&str; 25] = [
    "p",
    "n",
    "dist",
    "form",
    "edge",
    "replicas",
    "seed",
    "scaling",
    "t-plus",
    "t-min",
    "step",
    "output",
    "format",
    "workers",
    "y",
    "points",
    "energy",
    "epsilon",
    "test-fn",
    "dist-w",
    "seed-w",
    "data",
    "orientation",
    "mean",
    "table",
];

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("p", &self.p),
            ("n", &self.n),
            ("dist", &self.dist),
            ("form", &self.form),
            ("edge", &self.edge),
            ("replicas", &self.replicas),
            ("seed", &self.seed),
            ("scaling", &self.scaling),
            ("t-plus", &self.t_plus),
            ("t-min", &self.t_min),
            ("step", &self.step),
            ("output", &self.output),
            ("format", &self.format),
            ("workers", &self.workers),
            ("y", &self.y),
            ("points", &self.points),
            ("energy", &self.energy),
            ("epsilon", &self.epsilon),
            ("test-fn", &self.test_fn),
            ("dist-w", &self.dist_w),
            ("seed-w", &self.seed_w),
            ("data", &self.data),
            ("orientation", &self.orientation),
            ("mean", &self.mean),
            ("table", &self.table),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    RowsAreVariables,
    ColumnsAreVariables,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanModel {
    KnownZero,
    Unknown,
}

impl MeanModel {
    pub fn form(self) -> MatrixForm {
        match self {
            MeanModel::KnownZero => MatrixForm::W,
            MeanModel::Unknown => MatrixForm::R,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandName,
    pub p: usize,
    pub n: usize,
    pub dist: EntryDistribution,
    pub form: MatrixForm,
    pub edge: Edge,
    pub replicas: usize,
    pub seed: u64,
    pub scaling: Scaling,
    pub painleve: PainleveConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    pub y: Option<f64>,
    pub points: usize,
    pub energy: Option<f64>,
    pub epsilon: f64,
    pub test_fn: Polynomial,
    pub dist_w: EntryDistribution,
    pub seed_w: Option<u64>,
    pub data: Option<PathBuf>,
    pub orientation: Orientation,
    pub mean: MeanModel,
    pub table: Option<PathBuf>,
}

/// Parses a config file: a flat JSON object if it starts with `{`, else
/// `key=value` lines with `#` comments.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut insert = |k: String, v: String| -> Result<()> {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        if map.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("key '{k}' given twice")));
        }
        Ok(())
    };
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad JSON config: {e}")))?;
        let obj = v.as_object().ok_or_else(|| Error::Config("JSON config must be an object".into()))?;
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(x) => x.to_string(),
                Value::Bool(b) => b.to_string(),
                other => return Err(Error::Config(format!("key '{k}': unsupported value {other}"))),
            };
            insert(k.clone(), s)?;
        }
    } else {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            insert(k.trim().to_string(), v.trim().to_string())?;
        }
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{s}'"))),
    }
}

fn get_opt<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key).map(|s| s.parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{s}'")))).transpose()
}

fn with_key<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("key '{key}': {e}")))
}

/// Merges file and flag layers and validates the result.
pub fn parse_config(command: CommandName, flags: &Flags, file_text: Option<&str>) -> Result<RunConfig> {
    let mut map = match file_text {
        Some(t) => parse_config_text(t)?,
        None => BTreeMap::new(),
    };
    for (k, v) in flags.pairs() {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        map.insert("seed".into(), seed);
    }
    resolve(command, &map)
}

pub fn resolve(command: CommandName, map: &BTreeMap<String, String>) -> Result<RunConfig> {
    if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key '{k}'")));
    }
    let default_replicas = match command {
        CommandName::Verify => 25,
        CommandName::GreenCompare => 400,
        CommandName::Delocalize => 20,
        _ => 1000,
    };
    let text = |k: &str, d: &str| map.get(k).cloned().unwrap_or_else(|| d.to_string());
    let painleve = PainleveConfig {
        t_plus: get(map, "t-plus", PainleveConfig::default().t_plus)?,
        t_min: get(map, "t-min", PainleveConfig::default().t_min)?,
        step: get(map, "step", PainleveConfig::default().step)?,
    };
    with_key("step", painleve.validate())?;
    let cfg = RunConfig {
        command,
        p: get(map, "p", 100)?,
        n: get(map, "n", 200)?,
        dist: with_key("dist", EntryDistribution::parse(&text("dist", "gaussian")))?,
        form: with_key("form", MatrixForm::parse(&text("form", "w")))?,
        edge: with_key("edge", Edge::parse(&text("edge", "largest")))?,
        replicas: get(map, "replicas", default_replicas)?,
        seed: get(map, "seed", 0)?,
        scaling: with_key("scaling", Scaling::parse(&text("scaling", "n")))?,
        painleve,
        output: map.get("output").map(PathBuf::from),
        format: match text("format", "csv").as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(Error::Config(format!("key 'format': expected csv or json, got '{other}'"))),
        },
        workers: get_opt(map, "workers")?,
        y: get_opt(map, "y")?,
        points: get(map, "points", 200)?,
        energy: get_opt(map, "energy")?,
        epsilon: get(map, "epsilon", 0.05)?,
        test_fn: with_key("test-fn", Polynomial::parse(&text("test-fn", "0,1")))?,
        dist_w: with_key("dist-w", EntryDistribution::parse(&text("dist-w", "gaussian")))?,
        seed_w: get_opt(map, "seed-w")?,
        data: map.get("data").map(PathBuf::from),
        orientation: match text("orientation", "rows_are_variables").as_str() {
            "rows_are_variables" | "rows" => Orientation::RowsAreVariables,
            "columns_are_variables" | "columns" => Orientation::ColumnsAreVariables,
            other => return Err(Error::Config(format!("key 'orientation': unknown value '{other}'"))),
        },
        mean: match text("mean", "unknown").as_str() {
            "known_zero" | "known" => MeanModel::KnownZero,
            "unknown" => MeanModel::Unknown,
            other => return Err(Error::Config(format!("key 'mean': unknown value '{other}'"))),
        },
        table: map.get("table").map(PathBuf::from),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        // test-independence takes its dimensions from the data file
        if self.command != CommandName::TestIndependence && (self.p == 0 || self.p >= self.n) {
            return Err(Error::Config(format!("constraint violated: need 1 ≤ p < n, got p={}, n={}", self.p, self.n)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("constraint violated: replicas must be ≥ 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("constraint violated: workers must be ≥ 1".into()));
        }
        if self.points < 2 {
            return Err(Error::Config("constraint violated: points must be ≥ 2".into()));
        }
        if let Some(y) = self.y {
            if !(y > 0.0 && y < 1.0) {
                return Err(Error::Config(format!("constraint violated: y must lie in (0,1), got {y}")));
            }
        }
        if self.command == CommandName::TestIndependence && self.data.is_none() {
            return Err(Error::Config("test-independence needs --data".into()));
        }
        if self.scaling == Scaling::NMinus1 && self.command != CommandName::TestIndependence && self.p + 1 >= self.n {
            return Err(Error::Config("constraint violated: n−1 scaling needs p < n−1".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` pairs; feeding them back reproduces the run.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("p", self.p.to_string()),
            ("n", self.n.to_string()),
            ("dist", self.dist.label()),
            ("form", self.form.label().to_string()),
            ("edge", self.edge.label().to_string()),
            ("replicas", self.replicas.to_string()),
            ("seed", self.seed.to_string()),
            ("scaling", self.scaling.label().to_string()),
            ("t-plus", self.painleve.t_plus.to_string()),
            ("t-min", self.painleve.t_min.to_string()),
            ("step", self.painleve.step.to_string()),
            (
                "format",
                match self.format {
                    Format::Csv => "csv".to_string(),
                    Format::Json => "json".to_string(),
                },
            ),
            ("points", self.points.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("test-fn", self.test_fn.label()),
            ("dist-w", self.dist_w.label()),
            (
                "orientation",
                match self.orientation {
                    Orientation::RowsAreVariables => "rows_are_variables".to_string(),
                    Orientation::ColumnsAreVariables => "columns_are_variables".to_string(),
                },
            ),
            (
                "mean",
                match self.mean {
                    MeanModel::KnownZero => "known_zero".to_string(),
                    MeanModel::Unknown => "unknown".to_string(),
                },
            ),
        ];
        let opt = |k: &'static str, s: Option<String>| s.map(|s| (k, s));
        v.extend(opt("y", self.y.map(|x| x.to_string())));
        v.extend(opt("energy", self.energy.map(|x| x.to_string())));
        v.extend(opt("seed-w", self.seed_w.map(|x| x.to_string())));
        v.extend(opt("data", self.data.as_ref().map(|p| p.display().to_string())));
        v.extend(opt("table", self.table.as_ref().map(|p| p.display().to_string())));
        // worker count and output path do not affect results
        v.sort_by_key(|(k, _)| KEYS.iter().position(|x| x == k));
        v
    }

    pub fn preamble(&self) -> String {
        let mut s = format!("# twcorr {} {}\n", VERSION, self.command.label());
        for (k, v) in self.echo() {
            let _ = writeln!(s, "# {k}={v}");
        }
        s
    }

    fn echo_json(&self) -> Value {
        Value::Object(self.echo().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            p: self.p,
            n: self.n,
            dist: self.dist,
            form: self.form,
            edge: self.edge,
            replicas: self.replicas,
            master_seed: self.seed,
            scaling: self.scaling,
        }
    }

    fn output_path(&self, default: &str) -> PathBuf {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.output.clone().unwrap_or_else(|| PathBuf::from(format!("{default}.{ext}")))
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn json_document(cfg: &RunConfig, body: Value) -> String {
    let mut doc = json!({
        "version": VERSION,
        "command": cfg.command.label(),
        "seed": cfg.seed,
        "config": cfg.echo_json(),
    });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("serialisable");
    s.push('\n');
    s
}

/// Directory for solved TW₁ tables.
pub fn cache_dir() -> Option<PathBuf> {
    if let Ok(d) = std::env::var(CACHE_ENV) {
        return Some(PathBuf::from(d));
    }
    std::env::current_exe().ok().and_then(|e| e.parent().map(|p| p.join("data")))
}

/// File name keyed by the Painlevé configuration.
pub fn cache_file_name(cfg: &PainleveConfig) -> String {
    let key = format!("t_plus={:e};t_min={:e};step={:e};order=4", cfg.t_plus, cfg.t_min, cfg.step);
    let digest = Sha256::digest(key.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("tw1-{hex}.csv")
}

/// Explicit `--table`, else the cache, else a fresh solve (cached if the
/// directory is writable).
pub fn load_table(cfg: &RunConfig) -> Result<TW1Table> {
    if let Some(path) = &cfg.table {
        return TW1Table::read_csv(path);
    }
    let cached = cache_dir().map(|d| d.join(cache_file_name(&cfg.painleve)));
    if let Some(path) = &cached {
        // the cache only ever holds our own solves
        if let Ok(t) = TW1Table::read_csv(path) {
            return TW1Table::new(t.t_grid().to_vec(), t.q().to_vec(), t.f1().to_vec(), TableSource::Solved);
        }
    }
    let table = tw1_cdf_table(&cfg.painleve)?;
    if let Some(path) = &cached {
        if let Err(e) = write_file(path, &table.to_csv()) {
            eprintln!("warning: cannot cache TW1 table at {}: {e}", path.display());
        }
    }
    Ok(table)
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>, stdout: String) -> Self {
        Outcome { files, stdout, exit_code: 0 }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.workers {
        Some(k) => with_workers(k, || dispatch(cfg))?,
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        CommandName::Simulate => cmd_simulate(cfg),
        CommandName::TwTable => cmd_tw_table(cfg),
        CommandName::MpDensity => cmd_mp_density(cfg),
        CommandName::Verify => cmd_verify(cfg),
        CommandName::TestIndependence => cmd_test_independence(cfg).map(|(_, o)| o),
        CommandName::GreenCompare => cmd_green_compare(cfg),
        CommandName::Delocalize => cmd_delocalize(cfg),
    }
}

const SUMMARY_LEVELS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

/// Swaps the extension for `.json`, or appends `.summary.json` when the
/// output already is JSON.
fn summary_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.with_extension("summary.json")
    } else {
        path.with_extension("json")
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let exp = run_edge_experiment(&cfg.experiment())?;
    let table = load_table(cfg)?;
    let oriented = exp.oriented();
    let ks = ks_distance(&oriented, |x| table.cdf(x));
    let ks_printed = ks_distance(&exp.ecdf, |x| table.cdf(x));
    let quantiles: serde_json::Map<String, Value> = SUMMARY_LEVELS
        .iter()
        .map(|&u| (u.to_string(), json!({ "empirical": oriented.quantile(u), "tw1": table.quantile(u).ok() })))
        .collect();
    let summary = json!({
        "edge": cfg.edge.label(),
        "replicas_used": exp.records.len(),
        "aborted": exp.aborted,
        "exploratory": cfg.experiment().exploratory(),
        "ks_tw1": ks,
        "ks_tw1_unreflected": ks_printed,
        "mean": oriented.mean(),
        "quantiles": quantiles,
    });

    let path = cfg.output_path("simulate");
    let mut files = vec![];
    match cfg.format {
        Format::Csv => {
            let mut s = cfg.preamble();
            s.push_str("replica,lambda_min,lambda_max,stat_min,stat_max\n");
            for r in &exp.records {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.replica,
                    fmt_f64(r.lambda_min),
                    fmt_f64(r.lambda_max),
                    fmt_f64(r.stat_min),
                    fmt_f64(r.stat_max)
                );
            }
            write_file(&path, &s)?;
            files.push(path.clone());
            let sp = summary_path(&path);
            write_file(&sp, &json_document(cfg, json!({ "summary": summary })))?;
            files.push(sp);
        }
        Format::Json => {
            write_file(&path, &json_document(cfg, json!({ "records": exp.records, "summary": summary })))?;
            files.push(path);
        }
    }
    let stdout = format!(
        "{} replicas ({} aborted), KS to TW1 = {:.4}, mean statistic = {:.4}\n",
        exp.records.len(),
        exp.aborted.len(),
        ks,
        oriented.mean()
    );
    Ok(Outcome::ok(files, stdout))
}

pub fn cmd_tw_table(cfg: &RunConfig) -> Result<Outcome> {
    let table = match &cfg.table {
        Some(p) => TW1Table::read_csv(p)?,
        None => tw1_cdf_table(&cfg.painleve)?,
    };
    let path = cfg.output_path("tw1_table");
    let body = match cfg.format {
        Format::Csv => cfg.preamble() + &table.to_csv(),
        Format::Json => json_document(cfg, json!({ "t": table.t_grid(), "q": table.q(), "F1": table.f1() })),
    };
    write_file(&path, &body)?;
    let stdout = format!(
        "{} grid points, F1 in [{:.3e}, {:.12}]\n",
        table.t_grid().len(),
        table.f1()[0],
        table.f1()[table.f1().len() - 1]
    );
    Ok(Outcome::ok(vec![path], stdout))
}

pub fn cmd_mp_density(cfg: &RunConfig) -> Result<Outcome> {
    let y = cfg.y.unwrap_or(cfg.p as f64 / cfg.n as f64);
    let params = mp_params(y)?;
    let xs: Vec<f64> =
        (0..cfg.points).map(|k| params.a + (params.b - params.a) * k as f64 / (cfg.points - 1) as f64).collect();
    let rows: Vec<(f64, f64, f64)> = xs.iter().map(|&x| (x, mp_density(x, &params), mp_cdf(x, &params))).collect();
    let path = cfg.output_path("mp_density");
    let body = match cfg.format {
        Format::Csv => {
            let mut s = cfg.preamble();
            s.push_str("x,density,cdf\n");
            for (x, d, c) in &rows {
                let _ = writeln!(s, "{},{},{}", fmt_f64(*x), fmt_f64(*d), fmt_f64(*c));
            }
            s
        }
        Format::Json => json_document(
            cfg,
            json!({
                "y": y,
                "x": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "density": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "cdf": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            }),
        ),
    };
    write_file(&path, &body)?;
    Ok(Outcome::ok(vec![path], format!("MP law y = {y}: support [{}, {}]\n", params.a, params.b)))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let checks = identity_suite(cfg.replicas, cfg.seed)?;
    let mut stdout = String::new();
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            stdout,
            "{status} {} (worst {:.3e}, tolerance {:.0e}, {} instances, {} skipped)",
            c.name, c.worst, c.tolerance, c.instances, c.skipped
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let mut files = vec![];
    if let Some(path) = &cfg.output {
        let body = match cfg.format {
            Format::Csv => {
                let mut s = cfg.preamble();
                s.push_str("check,pass,worst,tolerance,instances,skipped\n");
                for c in &checks {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        c.name,
                        c.pass,
                        fmt_f64(c.worst),
                        fmt_f64(c.tolerance),
                        c.instances,
                        c.skipped
                    );
                }
                s
            }
            Format::Json => json_document(cfg, json!({ "checks": checks })),
        };
        write_file(path, &body)?;
        files.push(path.clone());
    }
    let exit_code = if failed.is_empty() {
        0
    } else {
        let _ = writeln!(stdout, "failing invariants: {}", failed.join(", "));
        1
    };
    Ok(Outcome { files, stdout, exit_code })
}

/// Result of the TW₁ independence test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub p: usize,
    pub n: usize,
    pub form: MatrixForm,
    pub edge: Edge,
    pub lambda_extreme: f64,
    /// As defined by the edge scaling, before any sign flip.
    pub statistic: f64,
    /// The quantity compared with TW₁ (negated for the smallest edge).
    pub oriented_statistic: f64,
    pub p_value: f64,
    pub scaling: Scaling,
    pub table_source: &'static str,
}

/// Reads a numeric CSV. A first line with any non-numeric field is taken as
/// a header. Empty or non-numeric fields elsewhere are errors.
pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let unquote = |f: &str| {
        let f = f.trim();
        f.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(f).trim().to_string()
    };
    let parse = |f: &str| -> Option<f64> {
        let lower = f.to_ascii_lowercase();
        if f.is_empty() || lower == "na" || lower == "nan" {
            return None;
        }
        f.parse::<f64>().ok().filter(|x| x.is_finite())
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
    let mut rows: Vec<Vec<f64>> = vec![];
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<String> = line.split(',').map(unquote).collect();
        if i == 0 && fields.iter().any(|f| !f.is_empty() && f.parse::<f64>().is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(fields.len());
        for (j, f) in fields.iter().enumerate() {
            match parse(f) {
                Some(x) => row.push(x),
                None => {
                    return Err(Error::Parse(format!(
                        "missing or non-numeric value '{f}' at line {}, column {}",
                        i + 1,
                        j + 1
                    )))
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!("line {} has {} fields, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// The independence test on in-memory data (rows are variables).
pub fn test_independence(
    data: &DataMatrix,
    mean: MeanModel,
    edge: Edge,
    scaling: Scaling,
    table: &TW1Table,
) -> Result<TestReport> {
    let (p, n) = (data.p(), data.n());
    let n_eff = scaling.effective_n(n);
    if p >= n_eff {
        return Err(Error::InvalidDimensions(format!(
            "need p < n after orientation (n = {n_eff} with {} scaling), got p={p}",
            scaling.label()
        )));
    }
    let m = match mean {
        MeanModel::KnownZero => build_w(data)?.1,
        MeanModel::Unknown => build_r(data)?.1,
    };
    let s = symmetric_eigen(&m, false)?;
    let lambda = match edge {
        Edge::Largest => s.max(),
        Edge::Smallest => s.min(),
    };
    let statistic = scaling_transform(p, n_eff, edge)?.apply(lambda);
    let oriented = match edge {
        Edge::Largest => statistic,
        Edge::Smallest => -statistic,
    };
    if !statistic.is_finite() {
        return Err(Error::InvalidParameter("test statistic is not finite".into()));
    }
    Ok(TestReport {
        p,
        n,
        form: mean.form(),
        edge,
        lambda_extreme: lambda,
        statistic,
        oriented_statistic: oriented,
        p_value: table.pvalue(oriented)?,
        scaling,
        table_source: match table.source() {
            TableSource::Solved => "solved",
            TableSource::Imported => "imported",
        },
    })
}

pub fn cmd_test_independence(cfg: &RunConfig) -> Result<(TestReport, Outcome)> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("test-independence needs --data".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let raw = read_matrix_csv(&text)?;
    let entries = match cfg.orientation {
        Orientation::RowsAreVariables => raw,
        Orientation::ColumnsAreVariables => raw.transpose(),
    };
    let data = DataMatrix::from_entries(entries)?;
    let table = load_table(cfg)?;
    let report = test_independence(&data, cfg.mean, cfg.edge, cfg.scaling, &table)?;
    let mut files = vec![];
    if let Some(out) = &cfg.output {
        let body = match cfg.format {
            Format::Csv => {
                let mut s = cfg.preamble();
                s.push_str("p,n,form,edge,lambda_extreme,statistic,oriented_statistic,p_value,scaling,table_source\n");
                let r = &report;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.p,
                    r.n,
                    r.form.label(),
                    r.edge.label(),
                    fmt_f64(r.lambda_extreme),
                    fmt_f64(r.statistic),
                    fmt_f64(r.oriented_statistic),
                    fmt_f64(r.p_value),
                    r.scaling.label(),
                    r.table_source
                );
                s
            }
            Format::Json => json_document(cfg, json!({ "report": report })),
        };
        write_file(out, &body)?;
        files.push(out.clone());
    }
    let stdout = format!(
        "p={} n={} {} edge: lambda={:.6} statistic={:.6} p-value={:.6}\n",
        report.p,
        report.n,
        report.edge.label(),
        report.lambda_extreme,
        report.statistic,
        report.p_value
    );
    Ok((report, Outcome::ok(files, stdout)))
}

pub fn green_config(cfg: &RunConfig) -> Result<GreenComparisonConfig> {
    let mp = nonasymptotic_params(cfg.p, cfg.n)?;
    Ok(GreenComparisonConfig {
        p: cfg.p,
        n: cfg.n,
        e: cfg.energy.unwrap_or(mp.lambda_plus),
        epsilon: cfg.epsilon,
        test_fn: cfg.test_fn.clone(),
        arm_v: GreenArm { dist: cfg.dist, seed: cfg.seed },
        arm_w: GreenArm { dist: cfg.dist_w, seed: cfg.seed_w.unwrap_or(cfg.seed.wrapping_add(1)) },
        replicas: cfg.replicas,
    })
}

pub fn cmd_green_compare(cfg: &RunConfig) -> Result<Outcome> {
    let gc = green_config(cfg)?;
    let r = run_green_comparison(&gc)?;
    let summary = json!({
        "energy": gc.e,
        "eta": gc.eta(),
        "mean_v": r.mean_v,
        "mean_w": r.mean_w,
        "pooled_se": r.pooled_se,
        "diff": r.diff,
    });
    let path = cfg.output_path("green_compare");
    let mut files = vec![];
    match cfg.format {
        Format::Csv => {
            let mut s = cfg.preamble();
            s.push_str("replica,value_v,value_w\n");
            for (k, (a, b)) in r.values_v.iter().zip(&r.values_w).enumerate() {
                let _ = writeln!(s, "{k},{},{}", fmt_f64(*a), fmt_f64(*b));
            }
            write_file(&path, &s)?;
            files.push(path.clone());
            let sp = summary_path(&path);
            write_file(&sp, &json_document(cfg, json!({ "summary": summary })))?;
            files.push(sp);
        }
        Format::Json => {
            let body = json!({ "values_v": r.values_v, "values_w": r.values_w, "summary": summary });
            write_file(&path, &json_document(cfg, body))?;
            files.push(path);
        }
    }
    let stdout =
        format!("mean_v={:.6} mean_w={:.6} diff={:.6} pooled_se={:.6}\n", r.mean_v, r.mean_w, r.diff, r.pooled_se);
    Ok(Outcome::ok(files, stdout))
}

pub fn cmd_delocalize(cfg: &RunConfig) -> Result<Outcome> {
    let r = run_delocalization(&cfg.experiment())?;
    let path = cfg.output_path("delocalize");
    let summary = json!({ "max": r.max, "bound": r.bound, "within_bound": r.max <= r.bound });
    let mut files = vec![];
    match cfg.format {
        Format::Csv => {
            let mut s = cfg.preamble();
            s.push_str("replica,sup_norm\n");
            for (k, v) in r.per_replica.iter().enumerate() {
                let _ = writeln!(s, "{k},{}", fmt_f64(*v));
            }
            write_file(&path, &s)?;
            files.push(path.clone());
            let sp = summary_path(&path);
            write_file(&sp, &json_document(cfg, json!({ "summary": summary })))?;
            files.push(sp);
        }
        Format::Json => {
            write_file(&path, &json_document(cfg, json!({ "per_replica": r.per_replica, "summary": summary })))?;
            files.push(path);
        }
    }
    Ok(Outcome::ok(files, format!("max component {:.6} (bound {:.6})\n", r.max, r.bound)))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = cli.command.split();
    let result = (|| {
        let file_text = match &flags.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let cfg = parse_config(command, &flags, file_text.as_deref())?;
        execute(&cfg)
    })();
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
