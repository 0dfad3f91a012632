//! Command-line front end: argument parsing, run configuration files, and
//! report emission.
//!
//! Every command writes a JSON document (and a CSV table where one makes
//! sense) into `--out`. Exit status is 0 on success, 1 for usage errors, and
//! 2 for data errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    bin_stats, confidence_profile, default_gamma_grid, gamma_sweep, group_conditional_confidence, mean_entropy,
    topk_accuracy, variance_profile, SweepConfig,
};
use crate::calibrate::{
    apply_calibrator, fit_bcts, fit_histogram_binning, fit_histogram_binning_auto, fit_temperature, Calibrator,
    DEFAULT_HB_BIN_CHOICES,
};
use crate::data::Dataset;
use crate::distance::DistanceSpec;
use crate::error::Error;
use crate::estimator::{gece, lensed_points, BinningSpec, MetricResult};
use crate::io::{
    fmt17, load_group_map, load_predictions, resolve_distance, resolve_lens, write_file, write_predictions, Format,
};
use crate::lens::{make_grouping, LensSpec};
use crate::select::{Comparator, Projection, SelectorSpec};
use crate::stats::{mean, std_dev};
use crate::synth::{generate, Generator, GeneratorSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses a spec string, reporting failures as usage errors that name the flag.
fn spec<T, F>(flag: &str, text: &str, parse: F) -> CliResult<T>
where
    F: FnOnce(&str) -> crate::Result<T>,
{
    parse(text).map_err(|e| CliError::Usage(format!("--{flag} {text}: {e}")))
}

#[derive(Parser, Debug)]
#[command(
    name = "gece",
    version,
    about = "Context-specific calibration error metrics and post-hoc calibrators"
)]
struct Cli {
    /// JSON object of flag defaults, e.g. {"lens": "topk:5", "seed": 3}. Flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a calibration error metric.
    Eval(EvalArgs),
    /// Bootstrap sweep of the adaptive binning fraction gamma.
    Sweep(SweepArgs),
    /// Variance profile and descriptive output statistics.
    Profile(ProfileArgs),
    /// Fit a calibrator on validation data, optionally apply and re-evaluate.
    Calibrate(CalibrateArgs),
    /// Apply a fitted calibrator to a prediction file.
    Apply(ApplyArgs),
    /// Generate a synthetic prediction file.
    Synth(SynthArgs),
    /// Aggregate several result files into mean and standard deviation.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct InputArgs {
    /// Prediction file (.jsonl or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Override the format inferred from the extension: jsonl or csv.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct MetricArgs {
    /// full, topk:K, group:<map.csv>, class:C
    #[arg(long, default_value = "topk:1")]
    lens: String,
    /// all, label=C, label-in=A,B, maxprob>=T, p<T, p[C]>=T; comma-joined for AND
    #[arg(long, default_value = "all")]
    selector: String,
    /// tvd, l2, interval:L:H, weighted:<matrix.csv>
    #[arg(long, default_value = "tvd")]
    distance: String,
    /// uniform:B, uniform:B:LO:HI, adaptive:GAMMA
    #[arg(long, default_value = "uniform:15")]
    binning: String,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    metric: MetricArgs,
    /// Likert categories NAME:L:H,...; one interval-distance evaluation per category on binary outputs.
    #[arg(long)]
    likert: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "full")]
    lens: String,
    #[arg(long, default_value = "all")]
    selector: String,
    #[arg(long, default_value = "tvd")]
    distance: String,
    /// Comma-separated, strictly descending. Defaults to 1, 1/2, ..., 1/256.
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long, default_value_t = crate::analysis::DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = crate::analysis::DEFAULT_STABILITY_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ProfileArgs {
    #[command(flatten)]
    input: InputArgs,
    /// variance, confidence, entropy, topk-accuracy, group-confidence, or bins
    #[arg(long)]
    kind: String,
    #[arg(long, default_value = "full")]
    lens: String,
    #[arg(long, default_value = "all")]
    selector: String,
    #[arg(long, default_value = "tvd")]
    distance: String,
    /// Binning for `bins`.
    #[arg(long, default_value = "adaptive:0.1")]
    binning: String,
    #[arg(long, default_value_t = crate::analysis::BASELINE_GAMMA)]
    gamma: f64,
    #[arg(long, default_value = "0.1,0.25,0.5,0.75,1")]
    fractions: String,
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Ranks for confidence and top-k accuracy, e.g. 1,2,5. Defaults to every rank.
    #[arg(long)]
    ks: Option<String>,
    /// Group map CSV for group-confidence.
    #[arg(long)]
    group_map: Option<PathBuf>,
    #[arg(long)]
    group: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    /// Validation predictions the calibrator is fit on.
    #[arg(long)]
    val: PathBuf,
    /// Test predictions to calibrate and re-evaluate.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// ts, bcts, hb (bin count picked from 10/15/25/50), or hb:N
    #[arg(long)]
    method: String,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ApplyArgs {
    #[arg(long)]
    calibrator: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Calibrated prediction file (.jsonl or .csv).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// calibrated:ALPHA:K:N, two-point:N, sharpened:ALPHA:K:N:INV_TEMP, constant:P:RATE:N
    #[arg(long)]
    generator: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Flag defaults loaded from a JSON run-configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub values: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        match v {
            Value::Object(m) => Ok(Self {
                values: m.into_iter().collect(),
            }),
            _ => Err(CliError::Usage(format!(
                "{}: config must be a JSON object",
                path.display()
            ))),
        }
    }

    /// Appends `--key value` for every key not already given on the command line.
    pub fn merge_into(&self, argv: &mut Vec<String>) -> CliResult<()> {
        let mut extra = Vec::new();
        for (key, value) in &self.values {
            let flag = format!("--{}", key.replace('_', "-"));
            let given = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
            if given {
                continue;
            }
            let scalars = match value {
                Value::Array(items) => items.clone(),
                other => vec![other.clone()],
            };
            extra.push(flag);
            for s in scalars {
                extra.push(match s {
                    Value::String(s) => s,
                    Value::Number(_) | Value::Bool(_) => s.to_string(),
                    _ => return Err(CliError::Usage(format!("config key {key}: unsupported value"))),
                });
            }
        }
        argv.extend(extra);
        Ok(())
    }
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Runs one command line (`argv[0]` is the program name) and returns the exit status.
pub fn run_command(argv: &[String]) -> i32 {
    match run(argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn run(argv: &[String]) -> CliResult<()> {
    let mut argv = argv.to_vec();
    if let Some(path) = config_path(&argv) {
        RunConfig::load(&path)?.merge_into(&mut argv)?;
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Profile(a) => profile(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Apply(a) => apply(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
    }
}

fn format_flag(text: &Option<String>) -> CliResult<Option<Format>> {
    text.as_deref().map(|f| spec("format", f, str::parse)).transpose()
}

fn load(input: &InputArgs) -> CliResult<Dataset> {
    Ok(load_predictions(&input.input, format_flag(&input.format)?)?)
}

fn require_seed(seed: Option<u64>, command: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{command} is stochastic and requires --seed")))
}

struct Components {
    lens: LensSpec,
    selector: SelectorSpec,
    distance: DistanceSpec,
}

fn components(lens: &str, selector: &str, distance: &str, k: usize) -> CliResult<Components> {
    Ok(Components {
        lens: spec("lens", lens, |t| resolve_lens(t, k))?,
        selector: spec("selector", selector, |t| {
            let s: SelectorSpec = t.parse()?;
            s.validate(k)?;
            Ok(s)
        })?,
        distance: spec("distance", distance, resolve_distance)?,
    })
}

fn document(command: &str, config: &impl Serialize, body: Value) -> Value {
    json!({
        "tool": "gece",
        "version": TOOL_VERSION,
        "command": command,
        "config": serde_json::to_value(config).unwrap(),
        "result": body,
    })
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v).unwrap();
    text.push('\n');
    Ok(write_file(path, &text)?)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    Ok(write_file(path, &text)?)
}

#[derive(Debug, Clone, PartialEq)]
struct LikertCategory {
    name: String,
    low: f64,
    high: f64,
}

fn parse_likert(text: &str) -> CliResult<Vec<LikertCategory>> {
    let text = if text == "default" {
        "low:0:0.33,med:0.33:0.66,high:0.66:1.0"
    } else {
        text
    };
    let bad = || CliError::Usage(format!("--likert {text}: expected NAME:L:H,..."));
    let cats = text
        .split(',')
        .map(|c| {
            let parts: Vec<&str> = c.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let low: f64 = parts[1].parse().map_err(|_| bad())?;
            let high: f64 = parts[2].parse().map_err(|_| bad())?;
            DistanceSpec::interval(low, high).map_err(|e| CliError::Usage(format!("--likert {text}: {e}")))?;
            Ok(LikertCategory {
                name: parts[0].to_string(),
                low,
                high,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if cats.is_empty() {
        return Err(bad());
    }
    Ok(cats)
}

/// Selector for outputs inside `[low, high)`, closed on the right when `high` is 1.
fn band_selector(low: f64, high: f64) -> SelectorSpec {
    let upper = if high >= 1.0 { Comparator::Le } else { Comparator::Lt };
    SelectorSpec::And(vec![
        SelectorSpec::OutputCompare {
            projection: Projection::ScalarBinary,
            comparator: Comparator::Ge,
            threshold: low,
        },
        SelectorSpec::OutputCompare {
            projection: Projection::ScalarBinary,
            comparator: upper,
            threshold: high,
        },
    ])
}

/// One interval-distance metric per Likert category on binary outputs, with
/// per-category occupancy. Empty categories report a null result.
pub fn likert_metrics(
    dataset: &Dataset,
    selector: &SelectorSpec,
    binning: &BinningSpec,
    categories: &[(String, f64, f64)],
) -> crate::Result<Vec<(String, usize, Option<MetricResult>)>> {
    if dataset.k() != 2 {
        return Err(Error::InvalidParameter(format!(
            "Likert evaluation needs binary outputs, got {} classes",
            dataset.k()
        )));
    }
    let lens = LensSpec::ClassConditional(1);
    categories
        .iter()
        .map(|(name, low, high)| {
            let dist = DistanceSpec::interval(*low, *high)?;
            let sel = match selector {
                SelectorSpec::All => band_selector(*low, *high),
                other => SelectorSpec::And(vec![other.clone(), band_selector(*low, *high)]),
            };
            let count = sel.matching_indices(dataset)?.len();
            let result = if count == 0 {
                None
            } else {
                Some(gece(dataset, &lens, &sel, &dist, binning)?)
            };
            Ok((name.clone(), count, result))
        })
        .collect()
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let data = load(&a.input)?;
    let binning: BinningSpec = spec("binning", &a.metric.binning, str::parse)?;
    let mut metrics = Vec::new();
    let mut rows = Vec::new();
    if let Some(likert) = &a.likert {
        let cats: Vec<(String, f64, f64)> = parse_likert(likert)?
            .into_iter()
            .map(|c| (c.name, c.low, c.high))
            .collect();
        let selector: SelectorSpec = spec("selector", &a.metric.selector, str::parse)?;
        for (name, count, result) in likert_metrics(&data, &selector, &binning, &cats)? {
            println!(
                "{name:>8}  n={count:<7} error={}",
                result.as_ref().map_or("-".into(), |r| format!("{:.4}", r.value))
            );
            if let Some(r) = &result {
                push_bin_rows(&mut rows, &format!("likert:{name}"), r);
            }
            metrics.push(json!({ "name": format!("likert:{name}"), "occupancy": count, "result": result }));
        }
    } else {
        let c = components(&a.metric.lens, &a.metric.selector, &a.metric.distance, data.k())?;
        let r = gece(&data, &c.lens, &c.selector, &c.distance, &binning)?;
        println!("gece = {:.4}  (n={}, bins={})", r.value, r.n_selected, r.bins.len());
        push_bin_rows(&mut rows, "gece", &r);
        metrics.push(json!({ "name": "gece", "result": r }));
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    write_json(
        &a.out.join("metrics.json"),
        &document("eval", &a, json!({ "metrics": metrics })),
    )?;
    write_csv(
        &a.out.join("metrics.csv"),
        &["metric", "bin", "count", "mean_output", "mean_target", "distance"],
        &rows,
    )
}

fn push_bin_rows(rows: &mut Vec<Vec<String>>, name: &str, r: &MetricResult) {
    let vec17 = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(";");
    for (i, b) in r.bins.iter().enumerate() {
        rows.push(vec![
            name.to_string(),
            i.to_string(),
            b.count.to_string(),
            vec17(&b.mean_output),
            vec17(&b.mean_target),
            fmt17(b.distance),
        ]);
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("--{flag} {text}: bad entry `{t}`")))
        })
        .collect()
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let seed = require_seed(a.seed, "sweep")?;
    let data = load(&a.input)?;
    let c = components(&a.lens, &a.selector, &a.distance, data.k())?;
    let gammas = match &a.gammas {
        Some(t) => parse_list("gammas", t)?,
        None => default_gamma_grid(),
    };
    let cfg = SweepConfig {
        gammas,
        n_resamples: a.resamples,
        seed,
        stability_epsilon: a.epsilon,
    };
    let r = gamma_sweep(&data, &c.lens, &c.selector, &c.distance, &cfg)?;
    println!("{:>12} {:>8} {:>8}", "gamma", "mean", "std");
    for i in 0..r.gammas.len() {
        println!("{:>12.6} {:>8.4} {:>8.4}", r.gammas[i], r.mean_ece[i], r.std_ece[i]);
    }
    println!(
        "recommended gamma = {}{}",
        r.recommended_gamma,
        if r.plateau_found { "" } else { " (baseline fallback)" }
    );
    let rows: Vec<Vec<String>> = (0..r.gammas.len())
        .map(|i| vec![fmt17(r.gammas[i]), fmt17(r.mean_ece[i]), fmt17(r.std_ece[i])])
        .collect();
    write_json(
        &a.out.join("sweep.json"),
        &document("sweep", &a, serde_json::to_value(&r).unwrap()),
    )?;
    write_csv(&a.out.join("sweep.csv"), &["gamma", "mean_ece", "std_ece"], &rows)
}

fn ranks(ks: &Option<String>, k: usize) -> CliResult<Vec<usize>> {
    match ks {
        Some(t) => parse_list("ks", t),
        None => Ok((1..=k).collect()),
    }
}

fn profile(a: ProfileArgs) -> CliResult<()> {
    let data = load(&a.input)?;
    let (body, header, rows): (Value, Vec<&str>, Vec<Vec<String>>) = match a.kind.as_str() {
        "variance" => {
            let seed = require_seed(a.seed, "profile --kind variance")?;
            let c = components(&a.lens, &a.selector, &a.distance, data.k())?;
            let fractions: Vec<f64> = parse_list("fractions", &a.fractions)?;
            let p = variance_profile(
                &data,
                &c.lens,
                &c.selector,
                &c.distance,
                a.gamma,
                &fractions,
                a.resamples,
                seed,
            )?;
            let rows = (0..p.fractions.len())
                .map(|i| vec![fmt17(p.fractions[i]), fmt17(p.mean_ece[i]), fmt17(p.std_ece[i])])
                .collect();
            (
                serde_json::to_value(&p).unwrap(),
                vec!["fraction", "mean_ece", "std_ece"],
                rows,
            )
        }
        "confidence" | "topk-accuracy" => {
            let ks = ranks(&a.ks, data.k())?;
            let values = if a.kind == "confidence" {
                confidence_profile(&data, &ks)?
            } else {
                topk_accuracy(&data, &ks)?
            };
            let rows = ks
                .iter()
                .zip(&values)
                .map(|(k, v)| vec![k.to_string(), fmt17(*v)])
                .collect();
            (json!({ "ks": ks, "values": values }), vec!["k", "value"], rows)
        }
        "entropy" => {
            let h = mean_entropy(&data)?;
            (json!({ "mean_entropy": h }), vec!["mean_entropy"], vec![vec![fmt17(h)]])
        }
        "group-confidence" => {
            let path = a
                .group_map
                .as_ref()
                .ok_or_else(|| CliError::Usage("group-confidence needs --group-map".into()))?;
            let group = a
                .group
                .ok_or_else(|| CliError::Usage("group-confidence needs --group".into()))?;
            let lens = make_grouping(&load_group_map(path)?, data.k())?;
            let values = group_conditional_confidence(&data, &lens, group)?;
            let rows = values
                .iter()
                .enumerate()
                .map(|(j, v)| vec![j.to_string(), fmt17(*v)])
                .collect();
            (
                json!({ "group": group, "values": values }),
                vec!["group", "mean_confidence"],
                rows,
            )
        }
        "bins" => {
            let c = components(&a.lens, &a.selector, &a.distance, data.k())?;
            let binning: BinningSpec = spec("binning", &a.binning, str::parse)?;
            let pairs = lensed_points(&data, &c.lens, &c.selector, &c.distance)?;
            let s = bin_stats(&binning.apply(&pairs)?)?;
            (
                serde_json::to_value(s).unwrap(),
                vec!["median", "min", "max"],
                vec![vec![fmt17(s.median), s.min.to_string(), s.max.to_string()]],
            )
        }
        other => return Err(CliError::Usage(format!("--kind {other}: unknown profile kind"))),
    };
    for r in &rows {
        println!("{}", r.join("  "));
    }
    write_json(&a.out.join("profile.json"), &document("profile", &a, body))?;
    write_csv(&a.out.join("profile.csv"), &header, &rows)
}

fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let format = format_flag(&a.format)?;
    let val = load_predictions(&a.val, format)?;
    let (cal, fit) = match a.method.as_str() {
        "ts" => fit_temperature(&val)?,
        "bcts" => fit_bcts(&val)?,
        "hb" => fit_histogram_binning_auto(&val, &DEFAULT_HB_BIN_CHOICES)?,
        m => match m.strip_prefix("hb:").map(str::parse::<usize>) {
            Some(Ok(n)) => fit_histogram_binning(&val, n)?,
            _ => return Err(CliError::Usage(format!("--method {m}: expected ts, bcts, hb, or hb:N"))),
        },
    };
    println!(
        "{}: validation NLL {:.4} -> {:.4}",
        fit.method, fit.initial_nll, fit.final_nll
    );
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    write_json(&a.out.join("calibrator.json"), &cal.to_json())?;
    let mut body = json!({ "fit": fit, "calibrator": cal.to_json() });
    if let Some(test_path) = &a.input {
        let test = load_predictions(test_path, format)?;
        let c = components(&a.metric.lens, &a.metric.selector, &a.metric.distance, test.k())?;
        let binning: BinningSpec = spec("binning", &a.metric.binning, str::parse)?;
        let before = gece(&test, &c.lens, &c.selector, &c.distance, &binning)?;
        let calibrated = apply_calibrator(&cal, &test)?;
        let after = gece(&calibrated, &c.lens, &c.selector, &c.distance, &binning)?;
        println!("gece before {:.4}, after {:.4}", before.value, after.value);
        write_predictions(&calibrated, &a.out.join("calibrated.jsonl"), Some(Format::Jsonl))?;
        body["before"] = serde_json::to_value(&before).unwrap();
        body["after"] = serde_json::to_value(&after).unwrap();
        body["metrics"] = json!([
            { "name": "gece:before", "result": before },
            { "name": "gece:after", "result": after },
        ]);
    }
    write_json(&a.out.join("calibrate.json"), &document("calibrate", &a, body))
}

fn apply(a: ApplyArgs) -> CliResult<()> {
    let text =
        fs::read_to_string(&a.calibrator).map_err(|e| CliError::Data(format!("{}: {e}", a.calibrator.display())))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.calibrator.display())))?;
    let cal = Calibrator::from_json(&doc)?;
    let data = load(&a.input)?;
    let out = apply_calibrator(&cal, &data)?;
    write_predictions(&out, &a.output, None)?;
    println!("wrote {} calibrated records to {}", out.len(), a.output.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let seed = require_seed(a.seed, "synth")?;
    let generator: Generator = spec("generator", &a.generator, str::parse)?;
    let data = generate(&GeneratorSpec { generator, seed })?;
    write_predictions(&data, &a.output, None)?;
    println!("wrote {} records to {}", data.len(), a.output.display());
    Ok(())
}

/// Metric values keyed by name, in first-seen order, from one result file.
fn metric_values(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(v) = doc.get("value").and_then(Value::as_f64) {
        return Ok(vec![("gece".into(), v)]);
    }
    let metrics = doc
        .pointer("/result/metrics")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Data(format!("{}: no metrics found", path.display())))?;
    Ok(metrics
        .iter()
        .filter_map(|m| {
            let name = m.get("name")?.as_str()?.to_string();
            let value = m.pointer("/result/value")?.as_f64()?;
            Some((name, value))
        })
        .collect())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for path in &a.inputs {
        for (name, v) in metric_values(path)? {
            if !values.contains_key(&name) {
                order.push(name.clone());
            }
            values.entry(name).or_default().push(v);
        }
    }
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for name in &order {
        let v = &values[name];
        let (m, s) = (mean(v), std_dev(v));
        println!("{name:>16}  {m:.4} ± {s:.4}  (n={})", v.len());
        rows.push(vec![name.clone(), v.len().to_string(), fmt17(m), fmt17(s)]);
        entries.push(json!({ "name": name, "n": v.len(), "mean": m, "std": s, "values": v }));
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    write_json(
        &a.out.join("report.json"),
        &document("report", &a, json!({ "metrics": entries })),
    )?;
    write_csv(&a.out.join("report.csv"), &["metric", "n", "mean", "std"], &rows)
}
