//! Command-line front end over [`Monitoring`] and the synthetic generator.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or parameter error, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cdf::ApproxCdf;
use crate::error::{Error, Result};
use crate::ingest::{generate_synthetic, DatasetHandle, DatasetKind, SynthSpec};
use crate::monitor::{
    Comparator, DeleteSelector, LogRecord, MetricRecord, MonitorConfig, Monitoring,
    ProductionData, ReactionConfig, ReactionSpec, PARAM_BINS, PARAM_EPSILON, PARAM_GRID_POINTS,
};
use crate::store::FsStore;

pub const STORE_ENV: &str = "MON_STORE_ROOT";
pub const DATA_ENV: &str = "MON_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "driftwatch", version, about = "Drift and performance monitoring for deployed forecasting models")]
struct Cli {
    /// Monitoring store root.
    #[arg(long, global = true, env = STORE_ENV, value_name = "DIR")]
    store: Option<PathBuf>,
    /// Root that relative data paths resolve against.
    #[arg(long, global = true, env = DATA_ENV, value_name = "DIR")]
    data_root: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns for reading.
    Table,
    /// `record,field,value` rows; `value` is the JSON text of each leaf.
    Csv,
    /// The stored JSON document(s).
    Doc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register a model.
    RegisterModel {
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        description: String,
    },
    /// Create or replace a monitor.
    SetMonitor(SetMonitorArgs),
    GetMonitor {
        #[arg(long)]
        model: String,
        #[arg(long)]
        id: String,
    },
    /// Summarise training data into the monitor's baselines.
    SnapshotBaseline {
        #[arg(long)]
        model: String,
        #[arg(long)]
        monitor: String,
        /// Training file.
        #[arg(long)]
        data: PathBuf,
    },
    /// Compute and store metrics for one date.
    RunMonitor {
        #[arg(long)]
        model: String,
        #[arg(long)]
        monitor: String,
        #[arg(long)]
        date: NaiveDate,
        /// Inference file (features and predictions).
        #[arg(long)]
        data: PathBuf,
        /// Daily sales file, for performance monitors.
        #[arg(long)]
        sales: Option<PathBuf>,
        /// Use every row of --data instead of only rows dated --date.
        #[arg(long)]
        all_rows: bool,
    },
    GetMetrics {
        #[arg(long)]
        model: String,
        #[arg(long)]
        monitor: String,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Create or replace a reaction.
    SetReaction(SetReactionArgs),
    GetReaction {
        #[arg(long)]
        model: String,
        #[arg(long)]
        id: String,
    },
    /// Evaluate a reaction and write its logs.
    RunReaction {
        #[arg(long)]
        model: String,
        #[arg(long)]
        id: String,
        /// Latest metric date to consider; defaults to today.
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
    GetLogs {
        #[arg(long)]
        model: String,
        #[arg(long)]
        id: String,
        /// RFC 3339 timestamp or date (start of day).
        #[arg(long, value_parser = parse_from_ts)]
        from: Option<DateTime<Utc>>,
        /// RFC 3339 timestamp or date (end of day).
        #[arg(long, value_parser = parse_to_ts)]
        to: Option<DateTime<Utc>>,
    },
    /// Delete a monitor, metrics, a reaction, or logs.
    Delete(DeleteArgs),
    /// Write synthetic training, inference and sales files.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SetMonitorArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    id: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Comma-separated quantity labels (drift only).
    #[arg(long, value_delimiter = ',')]
    quantities: Vec<String>,
    /// CDF grid points `a`.
    #[arg(long)]
    grid_points: Option<u32>,
    /// Histogram bins `K`.
    #[arg(long)]
    bins: Option<u32>,
    /// Sketch rank error.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Drift,
    Performance,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReactionKindArg {
    Threshold,
    Report,
}

#[derive(Debug, Args)]
struct SetReactionArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    id: String,
    #[arg(long)]
    monitor: String,
    #[arg(long, value_enum)]
    kind: ReactionKindArg,
    #[arg(long, required_if_eq("kind", "threshold"))]
    metric: Option<String>,
    /// One of <, <=, >, >= (or lt, le, gt, ge).
    #[arg(long, required_if_eq("kind", "threshold"))]
    comparator: Option<String>,
    #[arg(long, required_if_eq("kind", "threshold"), allow_negative_numbers = true)]
    threshold: Option<f64>,
    /// Only check this quantity.
    #[arg(long)]
    quantity: Option<String>,
    #[arg(long, required_if_eq("kind", "report"))]
    from: Option<NaiveDate>,
    #[arg(long, required_if_eq("kind", "report"))]
    to: Option<NaiveDate>,
    #[arg(long, required_if_eq("kind", "report"))]
    sample_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DeleteObject {
    Monitor,
    Metrics,
    Reaction,
    Logs,
}

#[derive(Debug, Args)]
struct DeleteArgs {
    #[arg(value_enum)]
    object: DeleteObject,
    #[arg(long)]
    model: String,
    /// Monitor id (monitor, metrics) or reaction id (reaction, logs).
    #[arg(long)]
    id: String,
    /// Range start: a date for metrics, a timestamp or date for logs.
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory, relative to --data-root when set.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    features: Option<usize>,
    /// Location shift in baseline standard deviations.
    #[arg(long, allow_negative_numbers = true)]
    shift: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    training_date: Option<NaiveDate>,
    #[arg(long)]
    inference_date: Option<NaiveDate>,
}

fn parse_ts(s: &str, end_of_day: bool) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Ok(ts.with_timezone(&Utc));
    }
    let d: NaiveDate = s
        .parse()
        .map_err(|_| format!("`{s}` is neither an RFC 3339 timestamp nor a date"))?;
    let t = if end_of_day {
        NaiveTime::from_hms_opt(23, 59, 59).unwrap()
    } else {
        NaiveTime::MIN
    };
    Ok(d.and_time(t).and_utc())
}

fn parse_from_ts(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    parse_ts(s, false)
}

fn parse_to_ts(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    parse_ts(s, true)
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::Key(_) | Error::Unsupported { .. } => 2,
        Error::Io(_) | Error::Storage { .. } => 3,
        Error::Csv(e) if e.is_io_error() => 3,
        _ => 1,
    }
}

/// Run the CLI on `argv` (including the program name) and return the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli).and_then(|out| out.write(cli.format, stdout)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// A command result: the document form plus a table view.
struct Output {
    doc: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Output {
    fn document<T: Serialize>(value: &T) -> Result<Self> {
        let doc = serde_json::to_value(value)?;
        let rows = flatten(&doc)
            .into_iter()
            .map(|(path, v)| vec![path, scalar_text(&v)])
            .collect();
        Ok(Self {
            doc,
            header: vec!["field", "value"],
            rows,
        })
    }

    fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Doc => {
                let mut text = serde_json::to_string_pretty(&self.doc)?;
                text.push('\n');
                out.write_all(text.as_bytes())?;
            }
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
                w.write_record(["record", "field", "value"])?;
                let records: Vec<&Value> = match &self.doc {
                    Value::Array(items) => items.iter().collect(),
                    single => vec![single],
                };
                for (i, record) in records.into_iter().enumerate() {
                    let index = i.to_string();
                    for (path, leaf) in flatten(record) {
                        w.write_record([index.as_str(), path.as_str(), &serde_json::to_string(&leaf)?])?;
                    }
                }
                w.flush()?;
            }
            Format::Table => {
                let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
                for row in &self.rows {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.chars().count());
                    }
                }
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells
                        .iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:<w$}"))
                        .collect();
                    padded.join("  ").trim_end().to_string()
                };
                writeln!(out, "{}", line(self.header.clone()))?;
                for row in &self.rows {
                    writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
                }
            }
        }
        Ok(())
    }
}

/// Leaves of a JSON value keyed by JSON pointer. Empty containers count as leaves.
pub fn flatten(value: &Value) -> Vec<(String, Value)> {
    fn walk(v: &Value, path: String, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(map) if !map.is_empty() => {
                for (k, child) in map {
                    let k = k.replace('~', "~0").replace('/', "~1");
                    walk(child, format!("{path}/{k}"), out);
                }
            }
            Value::Array(items) if !items.is_empty() => {
                for (i, child) in items.iter().enumerate() {
                    walk(child, format!("{path}/{i}"), out);
                }
            }
            leaf => out.push((path, leaf.clone())),
        }
    }
    let mut out = Vec::new();
    walk(value, String::new(), &mut out);
    out
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn metrics_output(records: &[MetricRecord]) -> Result<Output> {
    let rows = records
        .iter()
        .flat_map(|r| {
            r.metrics.iter().map(move |(name, value)| {
                vec![
                    r.eval_date.to_string(),
                    r.monitor_id.clone(),
                    r.quantity_label().to_string(),
                    name.clone(),
                    value.to_string(),
                ]
            })
        })
        .collect();
    Ok(Output {
        doc: serde_json::to_value(records)?,
        header: vec!["eval_date", "monitor", "quantity", "metric", "value"],
        rows,
    })
}

fn logs_output(logs: &[LogRecord]) -> Result<Output> {
    let rows = logs
        .iter()
        .map(|l| {
            let summary = if let Some(series) = l.body.get("series").and_then(Value::as_array) {
                format!("report with {} series", series.len())
            } else {
                format!(
                    "{} {} = {} {} {} fired={}",
                    scalar_text(&l.body["quantity_label"]),
                    scalar_text(&l.body["metric_name"]),
                    l.body["value"],
                    scalar_text(&l.body["comparator"]),
                    l.body["threshold"],
                    l.body["fired"],
                )
            };
            vec![
                l.created_at.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                l.reaction_id.clone(),
                scalar_text(&serde_json::to_value(l.severity).unwrap_or_default()),
                summary,
            ]
        })
        .collect();
    Ok(Output {
        doc: serde_json::to_value(logs)?,
        header: vec!["created_at", "reaction", "severity", "summary"],
        rows,
    })
}

fn baselines_output(cdfs: &[ApproxCdf]) -> Result<Output> {
    let rows = cdfs
        .iter()
        .map(|c| {
            vec![
                c.label().to_string(),
                c.sample_count().to_string(),
                c.breakpoints().len().to_string(),
                c.min().to_string(),
                c.max().to_string(),
            ]
        })
        .collect();
    Ok(Output {
        doc: serde_json::to_value(cdfs)?,
        header: vec!["quantity", "n", "grid_points", "min", "max"],
        rows,
    })
}

fn resolve(data_root: Option<&Path>, path: &Path) -> PathBuf {
    match data_root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

fn parse_delete_date(s: &Option<String>) -> Result<Option<NaiveDate>> {
    s.as_deref()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("`{s}` is not a date")))
        })
        .transpose()
}

fn parse_delete_ts(s: &Option<String>, end_of_day: bool) -> Result<Option<DateTime<Utc>>> {
    s.as_deref()
        .map(|s| parse_ts(s, end_of_day).map_err(Error::InvalidParameter))
        .transpose()
}

fn execute(cli: &Cli) -> Result<Output> {
    let data_root = cli.data_root.as_deref();
    if let Command::Synth(args) = &cli.command {
        return synth(args, data_root);
    }
    let store_root = cli.store.as_ref().ok_or_else(|| {
        Error::InvalidParameter(format!("no store root; pass --store or set {STORE_ENV}"))
    })?;
    let svc = Monitoring::new(FsStore::open(store_root)?);
    let open = |path: &Path, kind| DatasetHandle::open(resolve(data_root, path), kind);

    match &cli.command {
        Command::RegisterModel { id, description } => Output::document(&svc.register_model(id, description)?),
        Command::SetMonitor(a) => {
            let mut cfg = match a.kind {
                KindArg::Drift => MonitorConfig::drift(&a.model, &a.id, a.quantities.iter().cloned()),
                KindArg::Performance => MonitorConfig {
                    quantities: a.quantities.clone(),
                    ..MonitorConfig::performance(&a.model, &a.id)
                },
            };
            for (name, value) in [
                (PARAM_GRID_POINTS, a.grid_points.map(f64::from)),
                (PARAM_BINS, a.bins.map(f64::from)),
                (PARAM_EPSILON, a.epsilon),
            ] {
                if let Some(v) = value {
                    cfg = cfg.with_parameter(name, v);
                }
            }
            Output::document(&svc.set_monitor(cfg)?)
        }
        Command::GetMonitor { model, id } => Output::document(&svc.get_monitor(model, id)?),
        Command::SnapshotBaseline { model, monitor, data } => {
            let training = open(data, DatasetKind::Training)?;
            baselines_output(&svc.snapshot_baseline(model, monitor, &training)?)
        }
        Command::RunMonitor {
            model,
            monitor,
            date,
            data,
            sales,
            all_rows,
        } => {
            let kind = if *all_rows {
                DatasetKind::Training
            } else {
                DatasetKind::DailyInference
            };
            let inference = open(data, kind)?;
            let production = match sales {
                Some(s) => ProductionData::with_sales(inference, open(s, DatasetKind::DailySales)?),
                None => ProductionData::inference(inference),
            };
            metrics_output(&svc.run_monitor(model, monitor, *date, &production)?)
        }
        Command::GetMetrics { model, monitor, from, to } => metrics_output(&svc.get_metrics(
            model,
            monitor,
            from.unwrap_or(NaiveDate::MIN),
            to.unwrap_or(NaiveDate::MAX),
        )?),
        Command::SetReaction(a) => {
            let spec = match a.kind {
                ReactionKindArg::Threshold => ReactionSpec::Threshold {
                    monitor_id: a.monitor.clone(),
                    metric_name: a.metric.clone().unwrap_or_default(),
                    comparator: a.comparator.as_deref().unwrap_or_default().parse::<Comparator>()?,
                    threshold: a.threshold.unwrap_or_default(),
                    quantity: a.quantity.clone(),
                },
                ReactionKindArg::Report => ReactionSpec::Report {
                    monitor_id: a.monitor.clone(),
                    date_from: a.from.unwrap_or_default(),
                    date_to: a.to.unwrap_or_default(),
                    sample_size: a.sample_size.unwrap_or_default(),
                },
            };
            Output::document(&svc.set_reaction(ReactionConfig {
                reaction_id: a.id.clone(),
                model_id: a.model.clone(),
                spec,
            })?)
        }
        Command::GetReaction { model, id } => Output::document(&svc.get_reaction(model, id)?),
        Command::RunReaction { model, id, as_of } => {
            let as_of = as_of.unwrap_or_else(|| Utc::now().date_naive());
            logs_output(&svc.run_reaction(model, id, as_of)?)
        }
        Command::GetLogs { model, id, from, to } => logs_output(&svc.get_logs(
            model,
            id,
            from.unwrap_or(DateTime::<Utc>::MIN_UTC),
            to.unwrap_or(DateTime::<Utc>::MAX_UTC),
        )?),
        Command::Delete(a) => {
            let (model_id, id) = (a.model.clone(), a.id.clone());
            let selector = match a.object {
                DeleteObject::Monitor | DeleteObject::Reaction if a.from.is_some() || a.to.is_some() => {
                    return Err(Error::InvalidParameter(
                        "--from/--to apply only to metrics and logs".into(),
                    ))
                }
                DeleteObject::Monitor => DeleteSelector::Monitor { model_id, monitor_id: id },
                DeleteObject::Reaction => DeleteSelector::Reaction { model_id, reaction_id: id },
                DeleteObject::Metrics => DeleteSelector::Metrics {
                    model_id,
                    monitor_id: id,
                    range: match (parse_delete_date(&a.from)?, parse_delete_date(&a.to)?) {
                        (None, None) => None,
                        (f, t) => Some((f.unwrap_or(NaiveDate::MIN), t.unwrap_or(NaiveDate::MAX))),
                    },
                },
                DeleteObject::Logs => DeleteSelector::Logs {
                    model_id,
                    reaction_id: id,
                    range: match (parse_delete_ts(&a.from, false)?, parse_delete_ts(&a.to, true)?) {
                        (None, None) => None,
                        (f, t) => Some((
                            f.unwrap_or(DateTime::<Utc>::MIN_UTC),
                            t.unwrap_or(DateTime::<Utc>::MAX_UTC),
                        )),
                    },
                },
            };
            Output::document(&json!({ "deleted": svc.delete(&selector)? }))
        }
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn synth(a: &SynthArgs, data_root: Option<&Path>) -> Result<Output> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_units: a.units.unwrap_or(d.n_units),
        density: a.density.unwrap_or(d.density),
        n_features: a.features.unwrap_or(d.n_features),
        location_shift: a.shift.unwrap_or(d.location_shift),
        scale_factor: a.scale.unwrap_or(d.scale_factor),
        seed: a.seed.unwrap_or(d.seed),
        training_date: a.training_date.unwrap_or(d.training_date),
        inference_date: a.inference_date.unwrap_or(d.inference_date),
    };
    let out = resolve(data_root, &a.out);
    let ds = generate_synthetic(&spec, &out)?;
    Output::document(&json!({
        "spec": spec,
        "training": ds.training.path(),
        "daily_inference": ds.daily_inference.path(),
        "daily_sales": ds.daily_sales.path(),
    }))
}
