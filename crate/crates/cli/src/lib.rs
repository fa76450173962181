//! `fragscope` command line: argument parsing, dispatch, and report writing.
//!
//! Every command writes a pretty-printed JSON report and, where a table makes
//! sense, a CSV file into `--out`. Files are written to a temporary name in
//! the same directory and renamed into place.

use std::fs::{self, Permissions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use fragscope_core::bridge_planner::{self, BridgeError, BridgeTemplate};
use fragscope_core::embedding_metrics::{
    temperature_sweep, Aggregation, EstimatorConfig, MetricError, MetricReport, Partition,
    DEFAULT_TEMPERATURES,
};
use fragscope_core::factor_model::{
    c_diversity, c_interleave, is_fully_disjoint, mixture_information, prop1_predicted_nmi,
    prop2_nmi_upper_bound, verify_propositions, Factor, FactorError, MixtureModel, OverlapFamily,
    VerificationConfig, VerificationReport,
};
use fragscope_core::io::{self as fio, IoError};
use fragscope_core::shortcut_sim::{
    self, Knob, SimConfig, SimError, SweepReport, DEFAULT_DELTA, DEFAULT_LAMBDA,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;
pub const EXIT_COMPUTE: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } | IoError::Io(_) => CliError::Io(e.to_string()),
            IoError::Parse(_) => CliError::Parse(e.to_string()),
            IoError::Metric(m) => m.into(),
            IoError::Factor(f) => f.into(),
            IoError::Bridge(b) => b.into(),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::KernelUnderflow { .. } => CliError::Compute(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Singular => CliError::Compute(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fragscope",
    version,
    about = "Sub-dataset fragmentation and shortcut analysis"
)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "FRAGSCOPE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel diversity, disparity, and their ratio for an embedding corpus.
    Metrics(MetricsArgs),
    /// Mutual information and fragmentation constants of a factor mixture.
    Mi(MiArgs),
    /// Randomized check of the closed-form NMI results.
    Props(PropsArgs),
    /// Sweep one simulator knob and evaluate the fitted policies.
    Simulate(SimulateArgs),
    /// Smallest bridge mass that brings the NMI under a target.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Exact,
    Subsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Arithmetic,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorArg {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverlapArg {
    Arbitrary,
    Symmetric,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// EMBF or CSV embeddings; rows must have unit norm.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// CSV with header `index,subdataset`; all rows form one group if omitted.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Comma-separated temperatures; 0.5,1,2,5,10,20,50 if omitted.
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "exact")]
    pub estimator: EstimatorArg,
    /// Sampled pairs per expectation (subsample only).
    #[arg(long, default_value_t = 20_000)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How per-group diversities combine in the ratio.
    #[arg(long, value_enum, default_value = "arithmetic")]
    pub aggregate: AggregateArg,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MiArgs {
    /// Mixture JSON: `{"components": [{"u": .., "v": ..}], "bridge": ..}`.
    #[arg(long)]
    pub mixture: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PropsArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub max_support: usize,
    /// Mass model for shared symbols in the overlapping trials.
    #[arg(long, value_enum, default_value = "arbitrary")]
    pub overlap: OverlapArg,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of viewpoint_radius, viewpoint_center_distance,
    /// positions_per_subdataset, layout, per_task_viewpoints.
    #[arg(long)]
    pub knob: String,
    /// Knob values; the knob's default grid if omitted.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Overrides the seed of the base configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON base configuration; unspecified fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Mixture JSON: `{"components": [{"u": .., "v": ..}], "bridge": ..}`.
    #[arg(long)]
    pub mixture: PathBuf,
    #[arg(long, value_enum)]
    pub factor: FactorArg,
    /// Bridge symbols; taken from the document's bridge object, or a single
    /// fresh symbol, when omitted.
    #[arg(long, value_delimiter = ',')]
    pub symbols: Option<Vec<String>>,
    /// NMI to reach, in [0, 1).
    #[arg(long)]
    pub target: f64,
    /// Ascending epsilon grid in (0, 1); 0.1,0.2,..,0.9 if omitted.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs one parsed invocation and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Compute(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Metrics(a) => metrics(a),
        Command::Mi(a) => mi(a),
        Command::Props(a) => props(a),
        Command::Simulate(a) => simulate(a),
        Command::Plan(a) => plan(a),
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Write-then-rename inside `dir`.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut builder = tempfile::Builder::new();
    builder.prefix(".fragscope-").suffix(".tmp");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io_err(e.error))?;
    Ok(target)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Compute(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Compute(format!("cannot format {name}: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Compute(format!("cannot format {name}: {e}")))?;
    write_atomic(dir, name, &bytes)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn metrics(a: &MetricsArgs) -> Result<Vec<PathBuf>, CliError> {
    let e = fio::load_embeddings(&a.embeddings)?;
    let p = match &a.partition {
        Some(path) => fio::load_partition(path, e.rows())?,
        None => Partition::single(e.rows(), "all")?,
    };
    let temps = a
        .temps
        .clone()
        .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
    let cfg = match a.estimator {
        EstimatorArg::Exact => EstimatorConfig::exact(),
        EstimatorArg::Subsample => EstimatorConfig::subsample(a.budget, a.seed),
    };
    let agg = match a.aggregate {
        AggregateArg::Arithmetic => Aggregation::Arithmetic,
        AggregateArg::Geometric => Aggregation::Geometric,
    };
    let report = temperature_sweep(&e, &p, &temps, &cfg, agg)?;
    prepare_out(&a.out)?;
    Ok(vec![
        write_json(&a.out, "metrics.json", &report)?,
        write_csv(
            &a.out,
            "metrics.csv",
            &["temperature", "score", "group", "value"],
            metric_rows(&report),
        )?,
    ])
}

/// Long format: one row per (temperature, score, group).
fn metric_rows(r: &MetricReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, t) in r.temperatures.iter().enumerate() {
        for (g, label) in r.groups.iter().enumerate() {
            rows.push(vec![
                t.to_string(),
                "diversity".into(),
                label.clone(),
                r.diversity[g][k].to_string(),
            ]);
        }
        for (name, series) in [("disparity", &r.disparity), ("ratio", &r.ratio)] {
            if let Some(s) = series {
                rows.push(vec![
                    t.to_string(),
                    name.into(),
                    String::new(),
                    s[k].to_string(),
                ]);
            }
        }
    }
    rows
}

#[derive(Debug, Serialize)]
struct MixtureSummary {
    components: usize,
    h_u: f64,
    h_v: f64,
    mutual_information: f64,
    nmi: f64,
    nmi_degenerate: bool,
    c_diversity: f64,
    /// Two components only.
    c_interleave: Option<f64>,
    /// Two components with disjoint supports only.
    disjoint_prediction: Option<f64>,
    /// Two components only.
    interleave_bound: Option<f64>,
}

fn summarize(mix: &MixtureModel) -> Result<MixtureSummary, CliError> {
    let info = mixture_information(mix);
    let pair = mix.len() == 2;
    let disjoint = pair && is_fully_disjoint(mix)?;
    Ok(MixtureSummary {
        components: mix.len(),
        h_u: info.h_u,
        h_v: info.h_v,
        mutual_information: info.mutual_information,
        nmi: info.nmi.value,
        nmi_degenerate: info.nmi.degenerate,
        c_diversity: c_diversity(mix),
        c_interleave: pair.then(|| c_interleave(mix)).transpose()?,
        disjoint_prediction: disjoint.then(|| prop1_predicted_nmi(mix)).transpose()?,
        interleave_bound: pair.then(|| prop2_nmi_upper_bound(mix)).transpose()?,
    })
}

#[derive(Debug, Serialize)]
struct MiReport {
    baseline: MixtureSummary,
    bridge: Option<fragscope_core::BridgeSpec>,
    bridged: Option<MixtureSummary>,
}

fn mi(a: &MiArgs) -> Result<Vec<PathBuf>, CliError> {
    let doc = fio::load_mixture(&a.mixture)?;
    let bridged = match &doc.bridge {
        Some(spec) => Some(summarize(&bridge_planner::apply_bridge(
            &doc.mixture,
            spec,
        )?)?),
        None => None,
    };
    let report = MiReport {
        baseline: summarize(&doc.mixture)?,
        bridge: doc.bridge.clone(),
        bridged,
    };
    prepare_out(&a.out)?;
    Ok(vec![write_json(&a.out, "mi.json", &report)?])
}

fn props(a: &PropsArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = VerificationConfig {
        trials: a.trials,
        seed: a.seed,
        max_support: a.max_support,
        overlap: match a.overlap {
            OverlapArg::Arbitrary => OverlapFamily::Arbitrary,
            OverlapArg::Symmetric => OverlapFamily::Symmetric,
        },
        ..VerificationConfig::default()
    };
    let report = verify_propositions(&cfg)?;
    prepare_out(&a.out)?;
    Ok(vec![
        write_json(&a.out, "props.json", &report)?,
        write_csv(
            &a.out,
            "props.csv",
            &[
                "family",
                "trial",
                "nmi",
                "c_diversity",
                "c_interleave",
                "predicted",
                "residual",
            ],
            trial_rows(&report),
        )?,
    ])
}

fn trial_rows(r: &VerificationReport) -> Vec<Vec<String>> {
    [("disjoint", &r.disjoint), ("overlapping", &r.overlapping)]
        .into_iter()
        .flat_map(|(family, trials)| {
            trials.iter().enumerate().map(move |(i, t)| {
                vec![
                    family.to_string(),
                    i.to_string(),
                    t.nmi.to_string(),
                    t.c_diversity.to_string(),
                    t.c_interleave.to_string(),
                    t.predicted.to_string(),
                    t.residual.to_string(),
                ]
            })
        })
        .collect()
}

fn load_sim_config(path: &Path) -> Result<SimConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let knob: Knob = a.knob.parse().map_err(CliError::Usage)?;
    let mut base = match &a.config {
        Some(path) => load_sim_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = a.seed {
        base.seed = seed;
    }
    let values = match &a.values {
        Some(raw) => knob.parse_values(raw)?,
        None => knob.default_values(),
    };
    let report = shortcut_sim::sweep(&base, knob, &values, a.lambda, a.delta)?;
    prepare_out(&a.out)?;
    Ok(vec![
        write_json(&a.out, "sweep.json", &report)?,
        write_csv(
            &a.out,
            "sweep.csv",
            &[
                "knob_value",
                "ood_success",
                "shortcut_degree",
                "weight_ratio",
                "seed",
            ],
            sweep_rows(&report),
        )?,
    ])
}

fn sweep_rows(r: &SweepReport) -> Vec<Vec<String>> {
    r.rows
        .iter()
        .map(|row| {
            vec![
                row.knob_value.to_string(),
                row.ood_success.to_string(),
                row.shortcut_degree.to_string(),
                row.weight_ratio.to_string(),
                row.seed.to_string(),
            ]
        })
        .collect()
}

fn plan(a: &PlanArgs) -> Result<Vec<PathBuf>, CliError> {
    let doc = fio::load_mixture(&a.mixture)?;
    let factor = match a.factor {
        FactorArg::U => Factor::U,
        FactorArg::V => Factor::V,
    };
    let symbols = a
        .symbols
        .clone()
        .or_else(|| doc.bridge.as_ref().map(|b| b.symbols.clone()))
        .unwrap_or_else(|| vec!["bridge".to_string()]);
    let template = BridgeTemplate::new(factor, symbols)?;
    let grid = a.grid.clone().unwrap_or_else(bridge_planner::default_grid);
    let plan = bridge_planner::plan_bridge(&doc.mixture, &template, a.target, &grid)?;
    prepare_out(&a.out)?;
    let rows = plan
        .grid
        .iter()
        .map(|p| vec![p.epsilon.to_string(), p.nmi.to_string(), opt(p.bound)])
        .collect();
    Ok(vec![
        write_json(&a.out, "plan.json", &plan)?,
        write_csv(&a.out, "plan.csv", &["epsilon", "nmi", "bound"], rows)?,
    ])
}
