//! Model data: delimited-text readers and a synthetic supply-chain generator.
//!
//! File schemas (comma-separated, one header row, LF line endings):
//!
//! * training / daily inference: `unit_id,eval_date,prediction,f1,...,fk`
//! * daily sales: `unit_id,date,units`
//!
//! Sales are sparse: a unit-day without a row sold nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::{actual_velocity, VelocityPair, VELOCITY_WINDOW_DAYS};

pub const UNIT_ID: &str = "unit_id";
pub const EVAL_DATE: &str = "eval_date";
pub const PREDICTION: &str = "prediction";
pub const SALES_DATE: &str = "date";
pub const SALES_UNITS: &str = "units";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Training,
    DailyInference,
    DailySales,
}

impl DatasetKind {
    fn required_columns(self) -> &'static [&'static str] {
        match self {
            Self::Training | Self::DailyInference => &[UNIT_ID, EVAL_DATE, PREDICTION],
            Self::DailySales => &[UNIT_ID, SALES_DATE, SALES_UNITS],
        }
    }
}

/// An opened data file with a validated header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    path: PathBuf,
    kind: DatasetKind,
    columns: Vec<String>,
}

/// Values of one column plus how many blank cells were skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnValues {
    pub values: Vec<f64>,
    pub skipped_blank: usize,
}

impl DatasetHandle {
    pub fn open(path: impl Into<PathBuf>, kind: DatasetKind) -> Result<Self> {
        let path = path.into();
        let mut reader = csv::ReaderBuilder::new().from_path(&path)?;
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let handle = Self { path, kind, columns };
        for col in kind.required_columns() {
            handle.column_index(col)?;
        }
        Ok(handle)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Feature columns, i.e. everything that is not id, date, or prediction.
    pub fn feature_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .map(String::as_str)
            .filter(|c| ![UNIT_ID, EVAL_DATE, PREDICTION].contains(c))
            .collect()
    }

    fn column_index(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::Schema {
                path: self.path.clone(),
                column: column.to_string(),
            })
    }

    fn row_error(&self, record: &csv::StringRecord, message: String) -> Error {
        Error::Row {
            path: self.path.clone(),
            line: record.position().map_or(0, |p| p.line()),
            message,
        }
    }

    fn records(&self) -> Result<csv::StringRecordsIntoIter<File>> {
        Ok(csv::ReaderBuilder::new()
            .from_path(&self.path)?
            .into_records())
    }

    fn parse_real(&self, record: &csv::StringRecord, idx: usize) -> Result<Option<f64>> {
        let cell = record.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            return Ok(None);
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.row_error(
                record,
                format!("`{cell}` in column `{}` is not a finite number", self.columns[idx]),
            )),
        }
    }

    fn parse_date(&self, record: &csv::StringRecord, idx: usize) -> Result<NaiveDate> {
        let cell = record.get(idx).unwrap_or("").trim();
        cell.parse().map_err(|_| {
            self.row_error(record, format!("`{cell}` is not an ISO-8601 date"))
        })
    }

    /// Every value of `column` in file order.
    pub fn read_column(&self, column: &str) -> Result<ColumnValues> {
        self.read_column_filtered(column, None)
    }

    /// Values of `column` from rows whose `eval_date` equals `date`.
    pub fn read_column_on(&self, column: &str, date: NaiveDate) -> Result<ColumnValues> {
        self.read_column_filtered(column, Some(date))
    }

    fn read_column_filtered(&self, column: &str, date: Option<NaiveDate>) -> Result<ColumnValues> {
        let idx = self.column_index(column)?;
        let date_idx = match date {
            Some(_) => Some(self.column_index(EVAL_DATE)?),
            None => None,
        };
        let mut out = ColumnValues::default();
        for record in self.records()? {
            let record = record?;
            if let (Some(d), Some(di)) = (date, date_idx) {
                if self.parse_date(&record, di)? != d {
                    continue;
                }
            }
            match self.parse_real(&record, idx)? {
                Some(v) => out.values.push(v),
                None => out.skipped_blank += 1,
            }
        }
        Ok(out)
    }
}

/// Pairs for the performance monitor plus coverage accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityAssembly {
    pub pairs: Vec<VelocityPair>,
    /// Units listed for the date whose prediction cell was blank.
    pub excluded: usize,
}

impl VelocityAssembly {
    pub fn listed_units(&self) -> usize {
        self.pairs.len() + self.excluded
    }

    /// Fraction of listed units that carried a prediction.
    pub fn coverage(&self) -> f64 {
        if self.listed_units() == 0 {
            0.0
        } else {
            self.pairs.len() as f64 / self.listed_units() as f64
        }
    }
}

/// The seven dates starting at `start`.
pub fn velocity_window(start: NaiveDate) -> Vec<NaiveDate> {
    (0..VELOCITY_WINDOW_DAYS as u64)
        .map(|d| start + Days::new(d))
        .collect()
}

/// Join predictions made on `forecast_date` with the realised velocity over
/// the seven days starting that date.
pub fn assemble_velocity_pairs(
    predictions: &DatasetHandle,
    sales: &DatasetHandle,
    forecast_date: NaiveDate,
) -> Result<VelocityAssembly> {
    let window = velocity_window(forecast_date);
    let window_end = window[window.len() - 1];

    let unit_idx = sales.column_index(UNIT_ID)?;
    let date_idx = sales.column_index(SALES_DATE)?;
    let units_idx = sales.column_index(SALES_UNITS)?;
    let mut seen_dates = BTreeSet::new();
    let mut daily: HashMap<String, [f64; VELOCITY_WINDOW_DAYS]> = HashMap::new();
    for record in sales.records()? {
        let record = record?;
        let date = sales.parse_date(&record, date_idx)?;
        if date < forecast_date || date > window_end {
            continue;
        }
        let units = sales.parse_real(&record, units_idx)?.unwrap_or(0.0);
        if units < 0.0 {
            return Err(sales.row_error(&record, format!("negative sales {units}")));
        }
        seen_dates.insert(date);
        let day = (date - forecast_date).num_days() as usize;
        let unit = record.get(unit_idx).unwrap_or("").to_string();
        daily.entry(unit).or_insert([0.0; VELOCITY_WINDOW_DAYS])[day] += units;
    }
    if let Some(missing) = window.iter().find(|d| !seen_dates.contains(d)) {
        return Err(Error::InsufficientGroundTruth(format!(
            "no sales rows for {missing} in the window {forecast_date}..={window_end}"
        )));
    }

    let p_unit = predictions.column_index(UNIT_ID)?;
    let p_date = predictions.column_index(EVAL_DATE)?;
    let p_pred = predictions.column_index(PREDICTION)?;
    let mut seen_units = BTreeSet::new();
    let mut out = VelocityAssembly {
        pairs: Vec::new(),
        excluded: 0,
    };
    for record in predictions.records()? {
        let record = record?;
        if predictions.parse_date(&record, p_date)? != forecast_date {
            continue;
        }
        let unit = record.get(p_unit).unwrap_or("").to_string();
        if !seen_units.insert(unit.clone()) {
            return Err(predictions.row_error(&record, format!("duplicate unit `{unit}`")));
        }
        let Some(predicted) = predictions.parse_real(&record, p_pred)? else {
            out.excluded += 1;
            continue;
        };
        let sales = daily.get(&unit).copied().unwrap_or([0.0; VELOCITY_WINDOW_DAYS]);
        let actual = actual_velocity(&sales)?;
        out.pairs.push(
            VelocityPair::new(unit, predicted, actual)
                .map_err(|e| predictions.row_error(&record, e.to_string()))?,
        );
    }
    if out.listed_units() == 0 {
        return Err(Error::NoData(format!(
            "no predictions dated {forecast_date} in {}",
            predictions.path.display()
        )));
    }
    Ok(out)
}

/// Shape of a synthetic supply-chain data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// SKU-location combinations.
    pub n_units: usize,
    /// Fraction of units with any sales in the window, in (0, 1].
    pub density: f64,
    pub n_features: usize,
    /// Drift added to production features, in baseline standard deviations.
    pub location_shift: f64,
    /// Spread multiplier applied to production features around their baseline mean.
    pub scale_factor: f64,
    pub seed: u64,
    pub training_date: NaiveDate,
    pub inference_date: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_units: 10_000,
            density: 0.3,
            n_features: 6,
            location_shift: 0.0,
            scale_factor: 1.0,
            seed: 0,
            training_date: NaiveDate::from_ymd_opt(2022, 3, 7).expect("valid date"),
            inference_date: NaiveDate::from_ymd_opt(2022, 3, 20).expect("valid date"),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic spec: {m}")));
        if self.n_units == 0 {
            return bad("n_units must be positive");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if self.n_features == 0 {
            return bad("n_features must be positive");
        }
        if !self.location_shift.is_finite() {
            return bad("location_shift must be finite");
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return bad("scale_factor must be positive");
        }
        Ok(())
    }
}

/// Baseline distribution of a synthetic feature.
///
/// `f1` is log-normal (heavy right tail), `f2` an equal mixture of two unit
/// normals at -2 and +2, and every further feature a plain normal with its
/// own location and spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureFamily {
    LogNormal { mu: f64, sigma: f64 },
    Bimodal { separation: f64 },
    Normal { mean: f64, sd: f64 },
}

impl FeatureFamily {
    pub fn for_index(j: usize) -> Self {
        match j {
            0 => Self::LogNormal { mu: 0.0, sigma: 0.75 },
            1 => Self::Bimodal { separation: 2.0 },
            _ => Self::Normal {
                mean: 5.0 * (j - 1) as f64,
                sd: 1.0 + 0.5 * (j - 2) as f64,
            },
        }
    }

    pub fn mean(self) -> f64 {
        match self {
            Self::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            Self::Bimodal { .. } => 0.0,
            Self::Normal { mean, .. } => mean,
        }
    }

    pub fn sd(self) -> f64 {
        match self {
            Self::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * (2.0 * mu + s2).exp()).sqrt()
            }
            Self::Bimodal { separation } => (1.0 + separation * separation).sqrt(),
            Self::Normal { sd, .. } => sd,
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            Self::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            Self::Bimodal { separation } => {
                if rng.random::<bool>() {
                    z + separation
                } else {
                    z - separation
                }
            }
            Self::Normal { mean, sd } => mean + sd * z,
        }
    }
}

/// Handles to the three generated files.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub training: DatasetHandle,
    pub daily_inference: DatasetHandle,
    pub daily_sales: DatasetHandle,
}

pub const TRAINING_FILE: &str = "training.csv";
pub const INFERENCE_FILE: &str = "daily_inference.csv";
pub const SALES_FILE: &str = "daily_sales.csv";

struct UnitRow {
    features: Vec<f64>,
    prediction: f64,
    rate: f64,
}

fn unit_id(i: usize) -> String {
    format!("u{i:06}")
}

/// Draw unit rows; `drift` maps baseline draws to production values.
fn draw_rows(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    drift: impl Fn(FeatureFamily, f64) -> f64,
) -> Vec<UnitRow> {
    let families: Vec<FeatureFamily> = (0..spec.n_features).map(FeatureFamily::for_index).collect();
    let lead = families[0];
    (0..spec.n_units)
        .map(|_| {
            let features: Vec<f64> = families
                .iter()
                .map(|&f| drift(f, f.sample(rng)))
                .collect();
            let eps: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            // Predictions follow the lead feature, standardised by its baseline.
            let z = (features[0] - lead.mean()) / lead.sd();
            let rate = (2.0 + 0.8 * z + 0.3 * eps).max(0.0);
            UnitRow {
                features,
                prediction: (rate + 0.25 * eta).max(0.0),
                rate,
            }
        })
        .collect()
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn write_model_file(path: &Path, n_features: usize, date: NaiveDate, rows: &[UnitRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    let mut header = vec![UNIT_ID.to_string(), EVAL_DATE.to_string(), PREDICTION.to_string()];
    header.extend((1..=n_features).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    let date = date.to_string();
    for (i, row) in rows.iter().enumerate() {
        let mut record = vec![unit_id(i), date.clone(), row.prediction.to_string()];
        record.extend(row.features.iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `training.csv`, `daily_inference.csv` and `daily_sales.csv` into `out_dir`.
///
/// Output is a pure function of `spec`. Production features are drawn from
/// the same base stream regardless of the drift settings, so varying only
/// `location_shift` or `scale_factor` moves one fixed sample.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<SyntheticDataset> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;

    let training = draw_rows(spec, &mut stream(spec.seed, 1), |_, x| x);
    let production = draw_rows(spec, &mut stream(spec.seed, 2), |f, x| {
        f.mean() + (x - f.mean()) * spec.scale_factor + spec.location_shift * f.sd()
    });

    let training_path = out_dir.join(TRAINING_FILE);
    let inference_path = out_dir.join(INFERENCE_FILE);
    let sales_path = out_dir.join(SALES_FILE);
    write_model_file(&training_path, spec.n_features, spec.training_date, &training)?;
    write_model_file(&inference_path, spec.n_features, spec.inference_date, &production)?;

    let mut rng = stream(spec.seed, 3);
    let n_selling = ((spec.density * spec.n_units as f64).ceil() as usize).clamp(1, spec.n_units);
    let mut order: Vec<usize> = (0..spec.n_units).collect();
    order.shuffle(&mut rng);
    let mut selling = order[..n_selling].to_vec();
    selling.sort_unstable();

    let window = velocity_window(spec.inference_date);
    let mut by_day: BTreeMap<usize, Vec<(usize, u64)>> = BTreeMap::new();
    for &unit in &selling {
        let rate = production[unit].rate;
        let mut days = [0u64; VELOCITY_WINDOW_DAYS];
        if rate > 0.0 {
            let poisson = Poisson::new(rate).expect("positive rate");
            for d in &mut days {
                *d = poisson.sample(&mut rng) as u64;
            }
        }
        if days.iter().all(|&d| d == 0) {
            days[unit % VELOCITY_WINDOW_DAYS] = 1;
        }
        for (day, &units) in days.iter().enumerate() {
            if units > 0 {
                by_day.entry(day).or_default().push((unit, units));
            }
        }
    }
    // Every date of the window must be present in the file even if nothing sold.
    for day in 0..VELOCITY_WINDOW_DAYS {
        by_day.entry(day).or_insert_with(|| vec![(selling[0], 0)]);
    }

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&sales_path)?;
    w.write_record([UNIT_ID, SALES_DATE, SALES_UNITS])?;
    for (day, rows) in &by_day {
        let date = window[*day].to_string();
        for (unit, units) in rows {
            w.write_record([unit_id(*unit), date.clone(), units.to_string()])?;
        }
    }
    w.flush()?;

    Ok(SyntheticDataset {
        training: DatasetHandle::open(training_path, DatasetKind::Training)?,
        daily_inference: DatasetHandle::open(inference_path, DatasetKind::DailyInference)?,
        daily_sales: DatasetHandle::open(sales_path, DatasetKind::DailySales)?,
    })
}
