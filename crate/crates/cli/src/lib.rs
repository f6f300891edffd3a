//! `slicewise` command line: batch discovery, rule evaluation, recall
//! sweeps, map layouts and the HTTP server.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors, 1 for
//! runtime failures.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use slicewise::dataset::{load_table, FeatureMatrix, OutcomeVector, Schema};
use slicewise::discovery::DiscoveryEngine;
use slicewise::map::{build_layout, embed, MapOptions};
use slicewise::oracle::{run_sweep, summarize_sweep, write_sweep_csv, SweepGrid};
use slicewise::ranking::{OutcomeMetrics, RankingSpec};
use slicewise::rules::{evaluate_mask, parse_rule};
use slicewise::synth::{planted_table, PlantedGroup, PlantedTable};
use slicewise::{Config, Error, Metrics, Spec, Subgroup};
use slicewise_server::ServerConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DATA_ROOT_ENV: &str = "SLICEWISE_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "slicewise",
    version,
    about = "Find and inspect data subgroups where a model misbehaves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run sampled beam search and write ranked subgroups as JSON.
    Discover(DiscoverArgs),
    /// Print metrics of one rule on both splits and the whole table.
    EvaluateRule(EvaluateArgs),
    /// Compare discovery against exhaustive search over a grid of settings.
    OracleSweep(SweepArgs),
    /// Write the bubble map layout as JSON.
    Map(MapArgs),
    /// Start the HTTP server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV table, or a matrix exported as JSON when --schema is omitted.
    #[arg(long)]
    pub data: PathBuf,
    /// Column roles and types (JSON or TOML).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Directory that relative --data and --schema paths resolve against.
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Outcome to rank by (repeatable). Defaults to the first outcome column.
    #[arg(long = "outcome")]
    pub outcomes: Vec<String>,
    /// JSON array of ranking specs; replaces the --outcome defaults.
    #[arg(long)]
    pub specs: Option<PathBuf>,
    /// Number of sampled source rows.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Minimum subgroup size as a fraction of the discovery split.
    #[arg(long, default_value_t = 0.01, value_parser = fraction)]
    pub min_size: f64,
    /// Beam width.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub beam: u64,
    /// Maximum number of predicates per rule.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub depth: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rules kept per ranking function.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub results_per_spec: u64,
    /// Worker threads; 0 uses every core. Does not change results.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output file; JSON goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rows of the summary table.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub rule: String,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, required_unless_present = "planted")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// Synthetic table with five planted groups, as ROWSxFEATURES.
    #[arg(long, conflicts_with_all = ["data", "schema"], value_parser = dims)]
    pub planted: Option<(usize, usize)>,
    #[arg(long = "outcome")]
    pub outcomes: Vec<String>,
    #[arg(long)]
    pub specs: Option<PathBuf>,
    /// Sample counts to try.
    #[arg(long = "n", value_delimiter = ',', default_value = "10,25,50,100,200", value_parser = clap::value_parser!(u64).range(1..))]
    pub n_samples: Vec<u64>,
    /// Minimum sizes to try.
    #[arg(long = "min-size", value_delimiter = ',', default_value = "0.01,0.05", value_parser = fraction)]
    pub min_sizes: Vec<f64>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub beam: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub depth: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Subgroup to overlay (repeatable, at most 8).
    #[arg(long = "rule")]
    pub rules: Vec<String>,
    /// Outcome that colours the bubbles. Defaults to the first outcome.
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Merge distance as a fraction of the layout diagonal.
    #[arg(long, default_value_t = 1.0 / 60.0, value_parser = fraction)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SLICEWISE_ADDR", default_value = "127.0.0.1:7878")]
    pub addr: SocketAddr,
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// Session snapshots are kept here; none when omitted.
    #[arg(long, env = "SLICEWISE_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
    /// Built web client to serve at `/`.
    #[arg(long, env = "SLICEWISE_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxFEATURES, got {s:?}"))?;
    let r: usize = r.parse().map_err(|e| format!("rows: {e}"))?;
    let c: usize = c.parse().map_err(|e| format!("features: {e}"))?;
    if r == 0 || c == 0 {
        return Err("rows and features must be positive".into());
    }
    Ok((r, c))
}

/// A validation failure detected by the command line layer.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<Invalid>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::RuleSyntax { .. }
            | Error::UnknownFeature { .. }
            | Error::UnknownValue { .. }
            | Error::DuplicateFeature(_)
            | Error::UnknownOutcome(_)
            | Error::UndefinedScore(_)
            | Error::EmptySource(_)
            | Error::SearchSpaceTooLarge { .. },
        ) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            exit_code(&e)
        }
    }
}

/// Joins the error chain, dropping causes already spelled out by their
/// parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Discover(a) => cmd_discover(&a),
        Command::EvaluateRule(a) => cmd_evaluate(&a),
        Command::OracleSweep(a) => cmd_sweep(&a),
        Command::Map(a) => cmd_map(&a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn resolve(root: Option<&Path>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

pub fn load(
    data: &Path,
    schema: Option<&Path>,
    root: Option<&Path>,
) -> anyhow::Result<FeatureMatrix> {
    let data = resolve(root, data);
    match schema {
        Some(s) => {
            let s = resolve(root, s);
            let schema =
                Schema::from_path(&s).with_context(|| format!("reading schema {}", s.display()))?;
            load_table(&data, &schema).with_context(|| format!("loading {}", data.display()))
        }
        None => {
            FeatureMatrix::import_json(&data).with_context(|| format!("loading {}", data.display()))
        }
    }
}

fn load_args(d: &DataArgs) -> anyhow::Result<FeatureMatrix> {
    load(&d.data, d.schema.as_deref(), d.data_root.as_deref())
}

fn default_spec(m: &FeatureMatrix, outcome: &str) -> anyhow::Result<Spec> {
    Ok(match m.outcome(outcome)? {
        OutcomeVector::Binary(_) => RankingSpec::rate_high(outcome),
        _ => RankingSpec::mean_difference(outcome),
    })
}

fn first_outcome(m: &FeatureMatrix) -> anyhow::Result<String> {
    m.outcomes()
        .keys()
        .next()
        .cloned()
        .ok_or_else(|| Invalid("the table has no outcome column".into()).into())
}

/// Ranking specs from `--specs`, else one outcome-driven spec per
/// `--outcome` (first outcome column when none is given).
pub fn build_specs(
    m: &FeatureMatrix,
    outcomes: &[String],
    file: Option<&Path>,
) -> anyhow::Result<Vec<Spec>> {
    if let Some(f) = file {
        if !outcomes.is_empty() {
            return Err(Invalid("--specs and --outcome are mutually exclusive".into()).into());
        }
        let text =
            std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        return serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("{}: {e}", f.display())).into());
    }
    if outcomes.is_empty() {
        return Ok(vec![default_spec(m, &first_outcome(m)?)?]);
    }
    outcomes.iter().map(|o| default_spec(m, o)).collect()
}

pub fn build_config(m: &FeatureMatrix, s: &SearchArgs) -> anyhow::Result<Config> {
    let mut c = Config::new(build_specs(m, &s.outcomes, s.specs.as_deref())?);
    c.n_samples = s.n as usize;
    c.min_size = s.min_size;
    c.beam_width = s.beam as usize;
    c.max_length = s.depth as usize;
    c.seed = s.seed;
    c.results_per_spec = s.results_per_spec as usize;
    c.threads = s.threads;
    c.validate(m)?;
    Ok(c)
}

/// Contents of a `discover` artifact.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct DiscoverOutput {
    pub config: String,
    pub seed: u64,
    pub specs: Vec<Spec>,
    pub results: Vec<Subgroup>,
}

fn write_artifact(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(bytes)?;
            o.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(v)?)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{:.1}%", 100.0 * x))
}

fn cmd_discover(a: &DiscoverArgs) -> anyhow::Result<()> {
    let m = load_args(&a.data)?;
    let config = build_config(&m, &a.search)?;
    // The echo line goes to stderr when stdout carries the JSON.
    let echo = config.echo();
    if a.out.is_some() {
        println!("{echo}");
    } else {
        eprintln!("{echo}");
    }
    let engine = DiscoveryEngine::new(m)?;
    let results = engine.discover(&config)?;
    let output = DiscoverOutput {
        config: echo,
        seed: config.seed,
        specs: config.specs.clone(),
        results,
    };
    write_artifact(a.out.as_deref(), &to_json(&output)?)?;
    if a.out.is_some() {
        print_ranked(&output, a.top);
    }
    Ok(())
}

fn print_ranked(o: &DiscoverOutput, top: usize) {
    println!("{} subgroups", o.results.len());
    println!(
        "{:>4}  {:>7}  {:>7}  {:>7}  rule",
        "rank", "size", "frac", "score"
    );
    for (i, r) in o.results.iter().take(top).enumerate() {
        let e = r.evaluation();
        println!(
            "{:>4}  {:>7}  {:>7}  {:>7.3}  {}",
            i,
            e.size,
            pct(e.size_fraction),
            r.scores.total,
            r.rule.to_text()
        );
    }
}

/// Metrics of one rule as written by `evaluate-rule --out`.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct EvaluateOutput {
    pub rule: String,
    pub evaluation: Metrics,
    pub discovery: Metrics,
    pub all: RowSummary,
}

/// Size and per-outcome mean over every row of the table.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct RowSummary {
    pub size: usize,
    pub size_fraction: f64,
    /// Outcome name, mean inside the rule, mean over the whole table.
    pub outcomes: Vec<(String, Option<f64>, f64)>,
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let m = load_args(&a.data)?;
    let rule = parse_rule(&a.rule, &m)?;
    let mask = evaluate_mask(&rule, &m)?;
    let rows: Vec<usize> = mask.rows().collect();
    let all_rows: Vec<usize> = (0..m.n_rows()).collect();
    let summary = RowSummary {
        size: rows.len(),
        size_fraction: rows.len() as f64 / m.n_rows().max(1) as f64,
        outcomes: m
            .outcomes()
            .iter()
            .map(|(name, o)| {
                let inside = (!rows.is_empty()).then(|| mean(o, &rows));
                (name.clone(), inside, mean(o, &all_rows))
            })
            .collect(),
    };
    let engine = DiscoveryEngine::new(m)?;
    let r: Subgroup = engine.evaluate_rule(&rule)?;
    let output = EvaluateOutput {
        rule: rule.to_text(),
        evaluation: r.metrics.evaluation,
        discovery: r.metrics.discovery,
        all: summary,
    };
    print_metrics(&engine, &output);
    if let Some(p) = &a.out {
        write_artifact(Some(p), &to_json(&output)?)?;
    }
    Ok(())
}

fn mean(o: &OutcomeVector, rows: &[usize]) -> f64 {
    rows.iter().map(|&r| o.value(r)).sum::<f64>() / rows.len().max(1) as f64
}

fn print_metrics(engine: &DiscoveryEngine, o: &EvaluateOutput) {
    let m = engine.matrix();
    println!("rule: {}", o.rule);
    let mut header = format!("{:<11} {:>8} {:>7}", "rows", "size", "frac");
    for name in m.outcomes().keys() {
        header.push_str(&format!(
            " {:>14} {:>14}",
            format!("{name}"),
            format!("{name} (base)")
        ));
    }
    println!("{header}");
    let split_rows = [
        ("evaluation", &o.evaluation, m.split().evaluation_rows()),
        ("discovery", &o.discovery, m.split().discovery_rows()),
    ];
    for (label, metrics, rows) in split_rows {
        let mut line = format!(
            "{:<11} {:>8} {:>7}",
            label,
            metrics.size,
            pct(metrics.size_fraction)
        );
        for (name, ov) in m.outcomes() {
            let inside = match metrics.outcomes.get(name) {
                Some(OutcomeMetrics::Binary { rate, .. }) => pct(*rate),
                Some(OutcomeMetrics::Continuous { mean, .. }) => {
                    mean.map_or("-".into(), |v| format!("{v:.4}"))
                }
                None => "-".into(),
            };
            line.push_str(&format!(
                " {:>14} {:>14}",
                inside,
                fmt_outcome(ov, mean(ov, rows))
            ));
        }
        println!("{line}");
    }
    let mut line = format!(
        "{:<11} {:>8} {:>7}",
        "all",
        o.all.size,
        pct(Some(o.all.size_fraction))
    );
    for ((_, inside, base), ov) in o.all.outcomes.iter().zip(m.outcomes().values()) {
        let inside = inside.map_or("-".into(), |v| fmt_outcome(ov, v));
        line.push_str(&format!(" {:>14} {:>14}", inside, fmt_outcome(ov, *base)));
    }
    println!("{line}");
}

fn fmt_outcome(o: &OutcomeVector, v: f64) -> String {
    if o.is_binary() {
        pct(Some(v))
    } else {
        format!("{v:.4}")
    }
}

/// Synthetic benchmark table: five planted high-rate groups of mixed length
/// over a `y` outcome with base rate 0.1.
pub fn planted_benchmark(rows: usize, features: usize, seed: u64) -> PlantedTable {
    let groups = [
        (1, 0.06, 0.45),
        (2, 0.08, 0.6),
        (2, 0.1, 0.5),
        (3, 0.07, 0.75),
        (3, 0.09, 0.55),
    ]
    .into_iter()
    .map(|(length, size, rate)| PlantedGroup { length, size, rate })
    .collect();
    PlantedTable::new(rows, features, groups, seed)
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let m = match (a.planted, &a.data) {
        (Some((rows, features)), _) => planted_table(&planted_benchmark(rows, features, a.seed))?.0,
        (None, Some(d)) => load(d, a.schema.as_deref(), a.data_root.as_deref())?,
        (None, None) => return Err(Invalid("--data or --planted is required".into()).into()),
    };
    let mut base = Config::new(build_specs(&m, &a.outcomes, a.specs.as_deref())?);
    base.beam_width = a.beam as usize;
    base.max_length = a.depth as usize;
    base.seed = a.seed;
    base.threads = a.threads;
    base.validate(&m)?;
    let grid = SweepGrid {
        n_samples: a.n_samples.iter().map(|&n| n as usize).collect(),
        p_min: a.min_sizes.clone(),
    };
    let rows = run_sweep(&m, &grid, a.trials as usize, &base)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    match &a.out {
        Some(p) => std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    let mut log = String::from("     n   p_min  trials   runtime_s        recall@50\n");
    for c in summarize_sweep(&rows) {
        log.push_str(&format!(
            "{:>6}  {:>6}  {:>6}  {:>6.3}±{:<5.3}  {:>6.3}±{:<5.3}\n",
            c.n_samples,
            c.p_min,
            c.trials,
            c.runtime_mean,
            c.runtime_std,
            c.recall_mean,
            c.recall_std
        ));
    }
    if a.out.is_some() {
        print!("{log}");
    } else {
        eprint!("{log}");
    }
    Ok(())
}

fn cmd_map(a: &MapArgs) -> anyhow::Result<()> {
    let m = load_args(&a.data)?;
    let rules = a
        .rules
        .iter()
        .map(|t| parse_rule(t, &m))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = match &a.outcome {
        Some(o) => {
            m.outcome(o)?;
            o.clone()
        }
        None => first_outcome(&m)?,
    };
    let options = MapOptions {
        threshold: a.threshold,
        ..MapOptions::default()
    };
    let e = embed(&m, a.seed)?;
    let layout = build_layout(&m, &e, &outcome, &rules, &options)?;
    write_artifact(a.out.as_deref(), &to_json(&layout)?)
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let config = ServerConfig {
        data_root: a.data_root,
        state_dir: a.state_dir,
        static_dir: a.static_dir,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(slicewise_server::serve(a.addr, config))
        .with_context(|| format!("serving on {}", a.addr))
}
