//! The monitoring framework: models, monitors, metrics, reactions and logs,
//! persisted through a [`KvStore`].
//!
//! A monitor is a set of metrics computed over the same data. A drift
//! monitor stores a baseline [`ApproxCdf`] per quantity at training time and
//! compares production data against it; a performance monitor scores
//! forecasts once seven days of sales are in. Reactions post-process stored
//! metrics into logs. Metrics and logs are only ever produced by running
//! monitors and reactions, so neither can be set or run directly.
//!
//! Key layout:
//!
//! ```text
//! model/{model}
//! model/{model}/monitor/{monitor}
//! model/{model}/monitor/{monitor}/baseline/{quantity}
//! model/{model}/monitor/{monitor}/metrics/{eval_date}/{quantity}
//! model/{model}/reaction/{reaction}
//! model/{model}/reaction/{reaction}/log/{timestamp}-{seq}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SubsecRound, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::cdf::{ApproxCdf, DEFAULT_GRID_POINTS};
use crate::drift::{drift_evaluate, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::ingest::{assemble_velocity_pairs, DatasetHandle, DatasetKind};
use crate::performance::PerformanceMetrics;
use crate::sketch::QuantileSketch;
use crate::store::{is_valid_segment, KvStore, StoreKey};

pub const DEFAULT_EPSILON: f64 = 0.001;

pub const METRIC_KS_DISTANCE: &str = "ks_distance";
pub const METRIC_KS_P_VALUE: &str = "ks_p_value";
pub const METRIC_BC: &str = "bhattacharyya_coefficient";
pub const METRIC_MAE: &str = "mae";
pub const METRIC_WMAPE: &str = "wmape";

/// Quantity label used for performance-monitor records.
pub const PERFORMANCE_QUANTITY: &str = "velocity";

pub const PARAM_GRID_POINTS: &str = "a";
pub const PARAM_BINS: &str = "k";
pub const PARAM_EPSILON: &str = "epsilon";

/// Objects of the monitoring API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiObject {
    Monitor,
    Metrics,
    Reaction,
    Logs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Set,
    Get,
    Run,
    Delete,
}

impl ApiObject {
    pub const ALL: [ApiObject; 4] = [Self::Monitor, Self::Metrics, Self::Reaction, Self::Logs];

    fn name(self) -> &'static str {
        match self {
            Self::Monitor => "monitor",
            Self::Metrics => "metrics",
            Self::Reaction => "reaction",
            Self::Logs => "logs",
        }
    }
}

impl Verb {
    pub const ALL: [Verb; 4] = [Self::Set, Self::Get, Self::Run, Self::Delete];

    fn name(self) -> &'static str {
        match self {
            Self::Set => "set",
            Self::Get => "get",
            Self::Run => "run",
            Self::Delete => "delete",
        }
    }
}

/// Whether `verb` applies to `object`. Metrics and logs are outputs, so they
/// support only get and delete.
pub fn supports(verb: Verb, object: ApiObject) -> bool {
    match object {
        ApiObject::Monitor | ApiObject::Reaction => true,
        ApiObject::Metrics | ApiObject::Logs => matches!(verb, Verb::Get | Verb::Delete),
    }
}

pub fn check_supported(verb: Verb, object: ApiObject) -> Result<()> {
    if supports(verb, object) {
        Ok(())
    } else {
        Err(Error::Unsupported {
            verb: verb.name(),
            object: object.name(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistration {
    pub model_id: String,
    pub description: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    Drift,
    Performance,
}

impl FromStr for MonitorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drift" => Ok(Self::Drift),
            "performance" => Ok(Self::Performance),
            other => Err(Error::InvalidParameter(format!("unknown monitor kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub monitor_id: String,
    pub model_id: String,
    pub kind: MonitorKind,
    /// Feature names and/or `prediction`; empty for performance monitors.
    #[serde(default)]
    pub quantities: Vec<String>,
    /// `a` (CDF grid points), `k` (histogram bins), `epsilon` (sketch rank error).
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl MonitorConfig {
    pub fn drift(
        model_id: impl Into<String>,
        monitor_id: impl Into<String>,
        quantities: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            monitor_id: monitor_id.into(),
            model_id: model_id.into(),
            kind: MonitorKind::Drift,
            quantities: quantities.into_iter().map(Into::into).collect(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn performance(model_id: impl Into<String>, monitor_id: impl Into<String>) -> Self {
        Self {
            monitor_id: monitor_id.into(),
            model_id: model_id.into(),
            kind: MonitorKind::Performance,
            quantities: Vec::new(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_parameter(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    fn count_param(&self, name: &str, default: usize) -> usize {
        self.parameters.get(name).map_or(default, |v| *v as usize)
    }

    pub fn grid_points(&self) -> usize {
        self.count_param(PARAM_GRID_POINTS, DEFAULT_GRID_POINTS)
    }

    pub fn bins(&self) -> usize {
        self.count_param(PARAM_BINS, DEFAULT_BINS)
    }

    pub fn epsilon(&self) -> f64 {
        self.parameters.get(PARAM_EPSILON).copied().unwrap_or(DEFAULT_EPSILON)
    }

    fn validate(&self) -> Result<()> {
        check_id("model_id", &self.model_id)?;
        check_id("monitor_id", &self.monitor_id)?;
        for q in &self.quantities {
            check_id("quantity", q)?;
        }
        match self.kind {
            MonitorKind::Drift if self.quantities.is_empty() => {
                return Err(Error::InvalidParameter(
                    "a drift monitor needs at least one quantity".into(),
                ))
            }
            MonitorKind::Performance if !self.quantities.is_empty() => {
                return Err(Error::InvalidParameter(
                    "a performance monitor takes no quantities".into(),
                ))
            }
            _ => {}
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.quantities.iter().find(|q| !seen.insert(*q)) {
            return Err(Error::InvalidParameter(format!("quantity `{dup}` listed twice")));
        }
        for (name, &value) in &self.parameters {
            let ok = match name.as_str() {
                PARAM_GRID_POINTS | PARAM_BINS => value >= 1.0 && value.fract() == 0.0,
                PARAM_EPSILON => value > 0.0 && value <= 0.5,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown monitor parameter `{name}`"
                    )))
                }
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "monitor parameter `{name}` = {value} is out of range"
                )));
            }
        }
        if self.kind == MonitorKind::Drift && self.grid_points() < 2 {
            return Err(Error::InvalidParameter("grid size `a` must be at least 2".into()));
        }
        Ok(())
    }
}

/// Values computed by one monitor run for one quantity and date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model_id: String,
    pub monitor_id: String,
    pub eval_date: NaiveDate,
    pub metrics: BTreeMap<String, f64>,
    /// `quantity_label`, sample counts, `computed_at`, and similar run details.
    pub context: Map<String, Value>,
}

impl MetricRecord {
    pub fn quantity_label(&self) -> &str {
        self.context
            .get("quantity_label")
            .and_then(Value::as_str)
            .unwrap_or_default()
    }

    pub fn computed_at(&self) -> Option<&str> {
        self.context.get("computed_at").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Self::Lt => value < threshold,
            Self::Le => value <= threshold,
            Self::Gt => value > threshold,
            Self::Ge => value >= threshold,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lt => "<",
            Self::Le => "<=",
            Self::Gt => ">",
            Self::Ge => ">=",
        })
    }
}

impl FromStr for Comparator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "<" | "lt" => Ok(Self::Lt),
            "<=" | "≤" | "le" => Ok(Self::Le),
            ">" | "gt" => Ok(Self::Gt),
            ">=" | "≥" | "ge" => Ok(Self::Ge),
            other => Err(Error::InvalidParameter(format!("unknown comparator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionSpec {
    /// Compare the latest value of a metric with a threshold.
    Threshold {
        monitor_id: String,
        metric_name: String,
        comparator: Comparator,
        threshold: f64,
        /// Restrict to one quantity; otherwise every quantity of the latest date is checked.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantity: Option<String>,
    },
    /// Summarise metric time series over a date range.
    Report {
        monitor_id: String,
        date_from: NaiveDate,
        date_to: NaiveDate,
        sample_size: usize,
    },
}

impl ReactionSpec {
    pub fn monitor_id(&self) -> &str {
        match self {
            Self::Threshold { monitor_id, .. } | Self::Report { monitor_id, .. } => monitor_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionConfig {
    pub reaction_id: String,
    pub model_id: String,
    #[serde(flatten)]
    pub spec: ReactionSpec,
}

impl ReactionConfig {
    fn validate(&self) -> Result<()> {
        check_id("model_id", &self.model_id)?;
        check_id("reaction_id", &self.reaction_id)?;
        check_id("monitor_id", self.spec.monitor_id())?;
        match &self.spec {
            ReactionSpec::Threshold {
                metric_name,
                threshold,
                quantity,
                ..
            } => {
                if metric_name.is_empty() {
                    return Err(Error::InvalidParameter("metric_name is empty".into()));
                }
                if !threshold.is_finite() {
                    return Err(Error::InvalidParameter("threshold must be finite".into()));
                }
                if let Some(q) = quantity {
                    check_id("quantity", q)?;
                }
            }
            ReactionSpec::Report {
                date_from,
                date_to,
                sample_size,
                ..
            } => {
                if date_from > date_to {
                    return Err(Error::InvalidParameter(format!(
                        "date_from {date_from} is after date_to {date_to}"
                    )));
                }
                if *sample_size == 0 {
                    return Err(Error::InvalidParameter("sample_size must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Alert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub model_id: String,
    pub reaction_id: String,
    pub created_at: DateTime<Utc>,
    pub severity: Severity,
    pub body: Value,
}

/// What to delete.
#[derive(Debug, Clone, PartialEq)]
pub enum DeleteSelector {
    /// The monitor and its baselines; its metrics stay.
    Monitor { model_id: String, monitor_id: String },
    /// Metrics of a monitor, optionally limited to an inclusive date range.
    Metrics {
        model_id: String,
        monitor_id: String,
        range: Option<(NaiveDate, NaiveDate)>,
    },
    /// The reaction; its logs stay.
    Reaction { model_id: String, reaction_id: String },
    /// Logs of a reaction, optionally limited to an inclusive time range.
    Logs {
        model_id: String,
        reaction_id: String,
        range: Option<(DateTime<Utc>, DateTime<Utc>)>,
    },
}

/// Data a monitor run reads from the model data store.
#[derive(Debug, Clone)]
pub struct ProductionData {
    /// Inference rows (features and predictions). For a daily-inference
    /// file only rows dated on the evaluation date are used.
    pub inference: DatasetHandle,
    /// Daily sales, required by performance monitors.
    pub sales: Option<DatasetHandle>,
}

impl ProductionData {
    pub fn inference(inference: DatasetHandle) -> Self {
        Self {
            inference,
            sales: None,
        }
    }

    pub fn with_sales(inference: DatasetHandle, sales: DatasetHandle) -> Self {
        Self {
            inference,
            sales: Some(sales),
        }
    }
}

fn check_id(what: &str, id: &str) -> Result<()> {
    if is_valid_segment(id) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} `{id}` must match [A-Za-z0-9._-]+"
        )))
    }
}

fn check_date_range<T: PartialOrd + fmt::Display>(from: &T, to: &T) -> Result<()> {
    if from > to {
        Err(Error::InvalidParameter(format!("range start {from} is after end {to}")))
    } else {
        Ok(())
    }
}

/// Serialize a document with stable field order and a trailing newline.
pub fn to_document<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Keep at most `size` points by even striding; the first and last survive when `size >= 2`.
pub fn stride_sample<T: Clone>(points: &[T], size: usize) -> Vec<T> {
    if points.len() <= size {
        return points.to_vec();
    }
    match size {
        0 => Vec::new(),
        1 => vec![points[0].clone()],
        _ => (0..size)
            .map(|i| points[i * (points.len() - 1) / (size - 1)].clone())
            .collect(),
    }
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// The monitoring service over a metadata store.
pub struct Monitoring<S> {
    store: S,
    clock: Clock,
}

impl<S: KvStore> Monitoring<S> {
    pub fn new(store: S) -> Self {
        Self {
            store,
            clock: Box::new(Utc::now),
        }
    }

    /// Replace the wall clock, e.g. to pin timestamps in tests.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)().trunc_subsecs(0)
    }

    fn key(segments: &[&str]) -> Result<StoreKey> {
        StoreKey::new(segments.iter().copied())
    }

    fn model_key(model_id: &str) -> Result<StoreKey> {
        Self::key(&["model", model_id])
    }

    fn monitor_key(model_id: &str, monitor_id: &str) -> Result<StoreKey> {
        Self::key(&["model", model_id, "monitor", monitor_id])
    }

    fn baseline_prefix(model_id: &str, monitor_id: &str) -> Result<StoreKey> {
        Self::monitor_key(model_id, monitor_id)?.child("baseline")
    }

    fn metrics_prefix(model_id: &str, monitor_id: &str) -> Result<StoreKey> {
        Self::monitor_key(model_id, monitor_id)?.child("metrics")
    }

    fn reaction_key(model_id: &str, reaction_id: &str) -> Result<StoreKey> {
        Self::key(&["model", model_id, "reaction", reaction_id])
    }

    fn log_prefix(model_id: &str, reaction_id: &str) -> Result<StoreKey> {
        Self::reaction_key(model_id, reaction_id)?.child("log")
    }

    fn put_doc<T: Serialize>(&self, key: &StoreKey, value: &T) -> Result<()> {
        self.store.put(key, &to_document(value)?)
    }

    fn get_doc<T: DeserializeOwned>(&self, key: &StoreKey) -> Result<Option<T>> {
        match self.store.get(key)? {
            None => Ok(None),
            Some(doc) => serde_json::from_str(&doc.body)
                .map(Some)
                .map_err(|source| Error::Document {
                    key: key.to_string(),
                    source,
                }),
        }
    }

    fn require<T: DeserializeOwned>(&self, key: &StoreKey, what: &str) -> Result<T> {
        self.get_doc(key)?
            .ok_or_else(|| Error::NotFound(format!("{what} `{key}`")))
    }

    // ---- models ----

    /// Register a model; re-registering keeps the original creation time.
    pub fn register_model(&self, model_id: &str, description: &str) -> Result<ModelRegistration> {
        check_id("model_id", model_id)?;
        let key = Self::model_key(model_id)?;
        let created_at = match self.get_doc::<ModelRegistration>(&key)? {
            Some(existing) => existing.created_at,
            None => self.now(),
        };
        let reg = ModelRegistration {
            model_id: model_id.to_string(),
            description: description.to_string(),
            created_at,
        };
        self.put_doc(&key, &reg)?;
        Ok(reg)
    }

    pub fn get_model(&self, model_id: &str) -> Result<ModelRegistration> {
        check_id("model_id", model_id)?;
        self.require(&Self::model_key(model_id)?, "model")
    }

    // ---- monitors ----

    pub fn set_monitor(&self, cfg: MonitorConfig) -> Result<MonitorConfig> {
        cfg.validate()?;
        self.get_model(&cfg.model_id)?;
        self.put_doc(&Self::monitor_key(&cfg.model_id, &cfg.monitor_id)?, &cfg)?;
        Ok(cfg)
    }

    pub fn get_monitor(&self, model_id: &str, monitor_id: &str) -> Result<MonitorConfig> {
        check_id("model_id", model_id)?;
        check_id("monitor_id", monitor_id)?;
        self.require(&Self::monitor_key(model_id, monitor_id)?, "monitor")
    }

    fn drift_monitor(&self, model_id: &str, monitor_id: &str) -> Result<MonitorConfig> {
        let cfg = self.get_monitor(model_id, monitor_id)?;
        if cfg.kind != MonitorKind::Drift {
            return Err(Error::Precondition(format!(
                "monitor `{monitor_id}` is not a drift monitor"
            )));
        }
        Ok(cfg)
    }

    fn summarize(
        cfg: &MonitorConfig,
        data: &DatasetHandle,
        quantity: &str,
        date: Option<NaiveDate>,
    ) -> Result<ApproxCdf> {
        let column = match date {
            Some(d) if data.kind() == DatasetKind::DailyInference => data.read_column_on(quantity, d)?,
            _ => data.read_column(quantity)?,
        };
        if column.values.is_empty() {
            return Err(Error::NoData(format!(
                "column `{quantity}` of {} has no values{}",
                data.path().display(),
                date.map(|d| format!(" for {d}")).unwrap_or_default()
            )));
        }
        let mut sketch = QuantileSketch::new(cfg.epsilon())?;
        sketch.extend(column.values)?;
        let points = if sketch.count() == 1 { 1 } else { cfg.grid_points() };
        ApproxCdf::build(&sketch, points, quantity)
    }

    fn check_columns(data: &DatasetHandle, quantities: &[String]) -> Result<()> {
        for q in quantities {
            if !data.columns().iter().any(|c| c == q) {
                return Err(Error::Schema {
                    path: data.path().to_path_buf(),
                    column: q.clone(),
                });
            }
        }
        Ok(())
    }

    /// Summarise training data for every quantity of a drift monitor and
    /// store the results as its baselines.
    pub fn snapshot_baseline(
        &self,
        model_id: &str,
        monitor_id: &str,
        training: &DatasetHandle,
    ) -> Result<Vec<ApproxCdf>> {
        let cfg = self.drift_monitor(model_id, monitor_id)?;
        Self::check_columns(training, &cfg.quantities)?;
        let summaries = cfg
            .quantities
            .iter()
            .map(|q| Self::summarize(&cfg, training, q, None))
            .collect::<Result<Vec<_>>>()?;
        let prefix = Self::baseline_prefix(model_id, monitor_id)?;
        for cdf in &summaries {
            self.put_doc(&prefix.child(cdf.label())?, cdf)?;
        }
        Ok(summaries)
    }

    pub fn get_baseline(&self, model_id: &str, monitor_id: &str, quantity: &str) -> Result<ApproxCdf> {
        check_id("quantity", quantity)?;
        self.require(
            &Self::baseline_prefix(model_id, monitor_id)?.child(quantity)?,
            "baseline",
        )
    }

    fn metric_key(record: &MetricRecord) -> Result<StoreKey> {
        Self::metrics_prefix(&record.model_id, &record.monitor_id)?
            .child(record.eval_date.to_string())?
            .child(record.quantity_label())
    }

    /// Compute and store this monitor's metrics for `eval_date`.
    ///
    /// Nothing is written unless every record could be computed.
    pub fn run_monitor(
        &self,
        model_id: &str,
        monitor_id: &str,
        eval_date: NaiveDate,
        data: &ProductionData,
    ) -> Result<Vec<MetricRecord>> {
        let cfg = self.get_monitor(model_id, monitor_id)?;
        let computed_at = format_timestamp(self.now());
        let records = match cfg.kind {
            MonitorKind::Drift => self.drift_records(&cfg, eval_date, data, &computed_at)?,
            MonitorKind::Performance => {
                vec![Self::performance_record(&cfg, eval_date, data, &computed_at)?]
            }
        };
        for record in &records {
            self.put_doc(&Self::metric_key(record)?, record)?;
        }
        Ok(records)
    }

    fn drift_records(
        &self,
        cfg: &MonitorConfig,
        eval_date: NaiveDate,
        data: &ProductionData,
        computed_at: &str,
    ) -> Result<Vec<MetricRecord>> {
        let mut baselines = Vec::with_capacity(cfg.quantities.len());
        for q in &cfg.quantities {
            match self.get_baseline(&cfg.model_id, &cfg.monitor_id, q) {
                Ok(b) => baselines.push(b),
                Err(Error::NotFound(_)) => {
                    return Err(Error::Precondition(format!(
                        "no baseline for `{q}` on monitor `{}`; snapshot the baseline first",
                        cfg.monitor_id
                    )))
                }
                Err(e) => return Err(e),
            }
        }
        Self::check_columns(&data.inference, &cfg.quantities)?;
        baselines
            .iter()
            .map(|baseline| {
                let current = Self::summarize(cfg, &data.inference, baseline.label(), Some(eval_date))?;
                let m = drift_evaluate(baseline, &current, eval_date, cfg.bins())?;
                let metrics = BTreeMap::from([
                    (METRIC_KS_DISTANCE.to_string(), m.d_ks),
                    (METRIC_KS_P_VALUE.to_string(), m.p_value),
                    (METRIC_BC.to_string(), m.bc),
                ]);
                let mut context = Map::new();
                context.insert("quantity_label".into(), json!(m.quantity_label));
                context.insert("n_baseline".into(), json!(m.n_baseline));
                context.insert("n_current".into(), json!(m.n_current));
                context.insert("computed_at".into(), json!(computed_at));
                Ok(MetricRecord {
                    model_id: cfg.model_id.clone(),
                    monitor_id: cfg.monitor_id.clone(),
                    eval_date,
                    metrics,
                    context,
                })
            })
            .collect()
    }

    fn performance_record(
        cfg: &MonitorConfig,
        forecast_date: NaiveDate,
        data: &ProductionData,
        computed_at: &str,
    ) -> Result<MetricRecord> {
        let sales = data.sales.as_ref().ok_or_else(|| {
            Error::Precondition("a performance monitor needs daily sales data".into())
        })?;
        let assembly = assemble_velocity_pairs(&data.inference, sales, forecast_date)?;
        if assembly.pairs.is_empty() {
            return Err(Error::NoData(format!(
                "every prediction dated {forecast_date} is missing"
            )));
        }
        let perf = PerformanceMetrics::compute(forecast_date, &assembly.pairs, Utc::now())?;
        let metrics = BTreeMap::from([
            (METRIC_MAE.to_string(), perf.mae),
            (METRIC_WMAPE.to_string(), perf.wmape),
        ]);
        let mut context = Map::new();
        context.insert("quantity_label".into(), json!(PERFORMANCE_QUANTITY));
        context.insert("n".into(), json!(perf.n));
        context.insert("excluded".into(), json!(assembly.excluded));
        context.insert("coverage".into(), json!(assembly.coverage()));
        context.insert("forecast_date".into(), json!(forecast_date));
        context.insert("computed_at".into(), json!(computed_at));
        Ok(MetricRecord {
            model_id: cfg.model_id.clone(),
            monitor_id: cfg.monitor_id.clone(),
            eval_date: forecast_date,
            metrics,
            context,
        })
    }

    /// Stored metrics with `from <= eval_date <= to`, ordered by date then quantity.
    pub fn get_metrics(
        &self,
        model_id: &str,
        monitor_id: &str,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<MetricRecord>> {
        check_id("model_id", model_id)?;
        check_id("monitor_id", monitor_id)?;
        check_date_range(&from, &to)?;
        self.metric_keys_in(model_id, monitor_id, Some((from, to)))?
            .iter()
            .map(|k| self.require(k, "metric record"))
            .collect()
    }

    fn metric_keys_in(
        &self,
        model_id: &str,
        monitor_id: &str,
        range: Option<(NaiveDate, NaiveDate)>,
    ) -> Result<Vec<StoreKey>> {
        let prefix = Self::metrics_prefix(model_id, monitor_id)?;
        let depth = prefix.segments().len();
        let mut keys = Vec::new();
        for key in self.store.list(&prefix)? {
            let Some(date) = key
                .segments()
                .get(depth)
                .and_then(|s| s.parse::<NaiveDate>().ok())
            else {
                continue;
            };
            if range.is_none_or(|(from, to)| from <= date && date <= to) {
                keys.push(key);
            }
        }
        Ok(keys)
    }

    // ---- reactions ----

    pub fn set_reaction(&self, cfg: ReactionConfig) -> Result<ReactionConfig> {
        cfg.validate()?;
        self.get_model(&cfg.model_id)?;
        self.get_monitor(&cfg.model_id, cfg.spec.monitor_id())?;
        self.put_doc(&Self::reaction_key(&cfg.model_id, &cfg.reaction_id)?, &cfg)?;
        Ok(cfg)
    }

    pub fn get_reaction(&self, model_id: &str, reaction_id: &str) -> Result<ReactionConfig> {
        check_id("model_id", model_id)?;
        check_id("reaction_id", reaction_id)?;
        self.require(&Self::reaction_key(model_id, reaction_id)?, "reaction")
    }

    /// Evaluate a reaction against stored metrics and write its logs.
    pub fn run_reaction(&self, model_id: &str, reaction_id: &str, as_of: NaiveDate) -> Result<Vec<LogRecord>> {
        let cfg = self.get_reaction(model_id, reaction_id)?;
        let created_at = self.now();
        let logs = match &cfg.spec {
            ReactionSpec::Threshold {
                monitor_id,
                metric_name,
                comparator,
                threshold,
                quantity,
            } => {
                let keys = self.metric_keys_in(model_id, monitor_id, Some((NaiveDate::MIN, as_of)))?;
                let mut candidates: Vec<MetricRecord> = Vec::new();
                for key in &keys {
                    let record: MetricRecord = self.require(key, "metric record")?;
                    let wanted = quantity.as_deref().is_none_or(|q| record.quantity_label() == q);
                    if wanted && record.metrics.contains_key(metric_name) {
                        candidates.push(record);
                    }
                }
                let Some(latest) = candidates.iter().map(|r| r.eval_date).max() else {
                    return Err(Error::NoData(format!(
                        "no `{metric_name}` metrics on or before {as_of} for monitor `{monitor_id}`"
                    )));
                };
                candidates
                    .iter()
                    .filter(|r| r.eval_date == latest)
                    .map(|r| {
                        let value = r.metrics[metric_name];
                        let fired = comparator.holds(value, *threshold);
                        LogRecord {
                            model_id: model_id.to_string(),
                            reaction_id: reaction_id.to_string(),
                            created_at,
                            severity: if fired { Severity::Alert } else { Severity::Info },
                            body: json!({
                                "monitor_id": monitor_id,
                                "quantity_label": r.quantity_label(),
                                "eval_date": r.eval_date,
                                "metric_name": metric_name,
                                "value": value,
                                "comparator": comparator,
                                "threshold": threshold,
                                "fired": fired,
                            }),
                        }
                    })
                    .collect()
            }
            ReactionSpec::Report {
                monitor_id,
                date_from,
                date_to,
                sample_size,
            } => {
                let records = self.get_metrics(model_id, monitor_id, *date_from, *date_to)?;
                if records.is_empty() {
                    return Err(Error::NoData(format!(
                        "no metrics between {date_from} and {date_to} for monitor `{monitor_id}`"
                    )));
                }
                let mut series: BTreeMap<(String, String), Vec<(NaiveDate, f64)>> = BTreeMap::new();
                for r in &records {
                    for (name, value) in &r.metrics {
                        series
                            .entry((r.quantity_label().to_string(), name.clone()))
                            .or_default()
                            .push((r.eval_date, *value));
                    }
                }
                let series: Vec<Value> = series
                    .iter()
                    .map(|((quantity, metric), points)| {
                        let sampled: Vec<Value> = stride_sample(points, *sample_size)
                            .into_iter()
                            .map(|(d, v)| json!({ "date": d, "value": v }))
                            .collect();
                        json!({
                            "quantity_label": quantity,
                            "metric": metric,
                            "total_points": points.len(),
                            "points": sampled,
                        })
                    })
                    .collect();
                vec![LogRecord {
                    model_id: model_id.to_string(),
                    reaction_id: reaction_id.to_string(),
                    created_at,
                    severity: Severity::Info,
                    body: json!({
                        "monitor_id": monitor_id,
                        "date_from": date_from,
                        "date_to": date_to,
                        "sample_size": sample_size,
                        "series": series,
                    }),
                }]
            }
        };
        self.write_logs(model_id, reaction_id, &logs)?;
        Ok(logs)
    }

    fn write_logs(&self, model_id: &str, reaction_id: &str, logs: &[LogRecord]) -> Result<()> {
        let prefix = Self::log_prefix(model_id, reaction_id)?;
        let existing = self.store.list(&prefix)?;
        for log in logs {
            let stamp = log.created_at.format("%Y%m%dT%H%M%SZ").to_string();
            let mut seq = existing
                .iter()
                .filter(|k| k.segments().last().is_some_and(|s| s.starts_with(&stamp)))
                .count();
            let key = loop {
                let key = prefix.child(format!("{stamp}-{seq:04}"))?;
                if self.store.get(&key)?.is_none() {
                    break key;
                }
                seq += 1;
            };
            self.put_doc(&key, log)?;
        }
        Ok(())
    }

    /// Stored logs with `from <= created_at <= to`, oldest first.
    pub fn get_logs(
        &self,
        model_id: &str,
        reaction_id: &str,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<LogRecord>> {
        check_id("model_id", model_id)?;
        check_id("reaction_id", reaction_id)?;
        check_date_range(&from, &to)?;
        Ok(self
            .logs_with_keys(model_id, reaction_id)?
            .into_iter()
            .map(|(_, log)| log)
            .filter(|log| from <= log.created_at && log.created_at <= to)
            .collect())
    }

    fn logs_with_keys(&self, model_id: &str, reaction_id: &str) -> Result<Vec<(StoreKey, LogRecord)>> {
        self.store
            .list(&Self::log_prefix(model_id, reaction_id)?)?
            .into_iter()
            .map(|k| {
                let log = self.require(&k, "log")?;
                Ok((k, log))
            })
            .collect()
    }

    // ---- deletion ----

    /// Remove the selected documents and return how many were removed.
    pub fn delete(&self, selector: &DeleteSelector) -> Result<usize> {
        match selector {
            DeleteSelector::Monitor { model_id, monitor_id } => {
                check_id("model_id", model_id)?;
                check_id("monitor_id", monitor_id)?;
                let removed = usize::from(self.store.remove(&Self::monitor_key(model_id, monitor_id)?)?);
                Ok(removed + self.store.delete(&Self::baseline_prefix(model_id, monitor_id)?)?)
            }
            DeleteSelector::Metrics {
                model_id,
                monitor_id,
                range,
            } => {
                check_id("model_id", model_id)?;
                check_id("monitor_id", monitor_id)?;
                match range {
                    None => self.store.delete(&Self::metrics_prefix(model_id, monitor_id)?),
                    Some((from, to)) => {
                        check_date_range(from, to)?;
                        let keys = self.metric_keys_in(model_id, monitor_id, Some((*from, *to)))?;
                        for k in &keys {
                            self.store.remove(k)?;
                        }
                        Ok(keys.len())
                    }
                }
            }
            DeleteSelector::Reaction {
                model_id,
                reaction_id,
            } => {
                check_id("model_id", model_id)?;
                check_id("reaction_id", reaction_id)?;
                Ok(usize::from(self.store.remove(&Self::reaction_key(model_id, reaction_id)?)?))
            }
            DeleteSelector::Logs {
                model_id,
                reaction_id,
                range,
            } => {
                check_id("model_id", model_id)?;
                check_id("reaction_id", reaction_id)?;
                match range {
                    None => self.store.delete(&Self::log_prefix(model_id, reaction_id)?),
                    Some((from, to)) => {
                        check_date_range(from, to)?;
                        let mut removed = 0;
                        for (k, log) in self.logs_with_keys(model_id, reaction_id)? {
                            if *from <= log.created_at && log.created_at <= *to {
                                removed += usize::from(self.store.remove(&k)?);
                            }
                        }
                        Ok(removed)
                    }
                }
            }
        }
    }
}
