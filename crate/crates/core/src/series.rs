//! Labeled series, CSV ingestion/export, min-max scaling and hold-out splits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite univariate series with optional per-step binary anomaly labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    name: String,
    values: Vec<f64>,
    labels: Option<Vec<bool>>,
}

impl LabeledSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>, labels: Option<Vec<bool>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series must contain at least one value".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "series values",
                index,
            });
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::LengthMismatch {
                    what: "labels vs values",
                    left: l.len(),
                    right: values.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            values,
            labels,
        })
    }

    /// Unlabeled series.
    pub fn unlabeled(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(name, values, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Labels, or an error naming `what` needs them.
    pub fn require_labels(&self) -> Result<&[bool]> {
        self.labels()
            .ok_or_else(|| Error::InvalidSeries(format!("series '{}' has no labels", self.name)))
    }

    /// Number of timesteps labeled anomalous.
    pub fn anomaly_count(&self) -> usize {
        self.labels()
            .map(|l| l.iter().filter(|&&b| b).count())
            .unwrap_or(0)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Sub-series over `range`, preserving labels.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidSeries(format!(
                "slice {range:?} out of bounds for length {}",
                self.len()
            )));
        }
        Ok(Self {
            name: self.name.clone(),
            values: self.values[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        })
    }

    /// Replaces the values, keeping name and labels.
    pub(crate) fn map_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            name: self.name.clone(),
            values,
            labels: self.labels.clone(),
        }
    }
}

/// A CSV column reference, by zero-based index or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl From<usize> for Column {
    fn from(i: usize) -> Self {
        Column::Index(i)
    }
}

impl From<&str> for Column {
    fn from(s: &str) -> Self {
        Column::Name(s.to_string())
    }
}

/// Column mapping for CSV series files.
///
/// The default matches the A1 benchmark layout: a header row with
/// `timestamp,value,is_anomaly`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub has_header: bool,
    pub timestamp: Option<Column>,
    pub value: Column,
    pub label: Option<Column>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            has_header: true,
            timestamp: Some(Column::Name("timestamp".into())),
            value: Column::Name("value".into()),
            label: Some(Column::Name("is_anomaly".into())),
        }
    }
}

impl CsvSchema {
    /// Headerless `timestamp,value[,label]` by position.
    pub fn positional(with_label: bool) -> Self {
        Self {
            has_header: false,
            timestamp: Some(Column::Index(0)),
            value: Column::Index(1),
            label: with_label.then_some(Column::Index(2)),
        }
    }

    fn resolve(&self, column: &Column, headers: Option<&csv::StringRecord>) -> Result<usize> {
        match column {
            Column::Index(i) => Ok(*i),
            Column::Name(name) => {
                let headers = headers.ok_or_else(|| {
                    Error::InvalidConfig(format!("column '{name}' referenced by name but the file has no header"))
                })?;
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| Error::InvalidConfig(format!("column '{name}' not found in header")))
            }
        }
    }
}

/// Loads a labeled series from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, schema, name)
}

/// Reads a labeled series from any CSV source. Row numbers in errors are
/// 1-based line numbers of the input.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, name: impl Into<String>) -> Result<LabeledSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = if schema.has_header {
        Some(rdr.headers()?.clone())
    } else {
        None
    };
    let value_col = schema.resolve(&schema.value, headers.as_ref())?;
    let label_col = schema
        .label
        .as_ref()
        .map(|c| schema.resolve(c, headers.as_ref()))
        .transpose()?;

    let mut values = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, what: &str| {
            record.get(col).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing {what} column {col}"),
            })
        };

        let raw = field(value_col, "value")?;
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            row,
            message: format!("value '{raw}' is not a real number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("value '{raw}' is not finite"),
            });
        }
        values.push(v);

        if let (Some(col), Some(labels)) = (label_col, labels.as_mut()) {
            let raw = field(col, "label")?;
            let label = match raw.parse::<f64>() {
                Ok(x) if x == 0.0 => false,
                Ok(x) if x == 1.0 => true,
                _ => {
                    return Err(Error::Parse {
                        row,
                        message: format!("label '{raw}' is not 0 or 1"),
                    })
                }
            };
            labels.push(label);
        }
    }

    LabeledSeries::new(name, values, labels)
}

/// Writes `timestamp,value[,is_anomaly]` with a header row. The timestamp is
/// the zero-based step index.
pub fn write_csv<W: Write>(series: &LabeledSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    match series.labels() {
        Some(labels) => {
            w.write_record(["timestamp", "value", "is_anomaly"])?;
            for (t, (v, l)) in series.values().iter().zip(labels).enumerate() {
                w.write_record([t.to_string(), crate::fmt::float(*v), u8::from(*l).to_string()])?;
            }
        }
        None => {
            w.write_record(["timestamp", "value"])?;
            for (t, v) in series.values().iter().enumerate() {
                w.write_record([t.to_string(), crate::fmt::float(*v)])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Min and max of a reference segment, used to rescale a series to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    /// `(v - min) / (max - min)`; zero when the reference was constant.
    pub fn apply(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            (v - self.min) / range
        } else {
            0.0
        }
    }
}

/// Rescales values to [0, 1] using the whole series' range. A constant
/// series maps to all zeros.
pub fn minmax_normalize(series: &LabeledSeries) -> LabeledSeries {
    let scaler = MinMax::fit(series.values());
    series.map_values(series.values().iter().map(|&v| scaler.apply(v)).collect())
}

/// Which part of the series provides the min-max statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Leave values untouched.
    #[default]
    None,
    /// Statistics over the full series.
    Full,
    /// Statistics over the training segment only, applied to every segment.
    TrainOnly,
}

/// Fractions of the series given to training and validation; the test
/// segment receives the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.49,
            validation: 0.21,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.train > 0.0 && self.validation > 0.0 && self.train + self.validation < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "split fractions must be positive and leave room for a test segment (got {} / {})",
                self.train, self.validation
            )))
        }
    }

    /// Segment lengths `(train, validation, test)` for a series of length `len`.
    pub fn lengths(&self, len: usize) -> Result<SplitLengths> {
        self.validate()?;
        // The small bias keeps exact products such as 0.49 * 100 from
        // flooring to 48 through representation error.
        let floor = |frac: f64| (frac * len as f64 + 1e-9).floor() as usize;
        let train = floor(self.train);
        let validation = floor(self.validation);
        let test = len.saturating_sub(train + validation);
        if train == 0 || validation == 0 || test == 0 {
            return Err(Error::SeriesTooShort { len });
        }
        Ok(SplitLengths {
            train,
            validation,
            test,
        })
    }
}

/// Lengths of the three contiguous hold-out segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLengths {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitLengths {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    pub fn range(&self, segment: Segment) -> std::ops::Range<usize> {
        match segment {
            Segment::Train => 0..self.train,
            Segment::Validation => self.train..self.train + self.validation,
            Segment::Test => self.train + self.validation..self.total(),
        }
    }
}

/// One of the three hold-out segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Train,
    Validation,
    Test,
}

/// A series cut into contiguous train, validation and test segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub train: LabeledSeries,
    pub validation: LabeledSeries,
    pub test: LabeledSeries,
}

impl SplitSeries {
    pub fn lengths(&self) -> SplitLengths {
        SplitLengths {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }

    /// Rejoins the three segments.
    pub fn concat(&self) -> LabeledSeries {
        let parts = [&self.train, &self.validation, &self.test];
        let values = parts.iter().flat_map(|s| s.values().iter().copied()).collect();
        let labels = parts
            .iter()
            .map(|s| s.labels())
            .collect::<Option<Vec<_>>>()
            .map(|ls| ls.into_iter().flatten().copied().collect());
        LabeledSeries {
            name: self.train.name.clone(),
            values,
            labels,
        }
    }
}

/// Contiguous 49/21/30 hold-out split.
pub fn holdout_split(series: &LabeledSeries) -> Result<SplitSeries> {
    split_with(series, &SplitFractions::default())
}

pub fn split_with(series: &LabeledSeries, fractions: &SplitFractions) -> Result<SplitSeries> {
    let lengths = fractions.lengths(series.len())?;
    Ok(SplitSeries {
        train: series.slice(lengths.range(Segment::Train))?,
        validation: series.slice(lengths.range(Segment::Validation))?,
        test: series.slice(lengths.range(Segment::Test))?,
    })
}
