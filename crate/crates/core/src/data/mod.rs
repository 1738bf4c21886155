//! Experiment schema, tabular ingestion, scaling, outlier filtering and fold plans.
//!
//! A [`Dataset`] is a list of [`Sample`] rows under a [`FeatureSchema`]: eleven
//! input features (four catalyst properties, seven operating conditions) followed
//! by five reforming responses. Files are comma-separated UTF-8 with a header row
//! whose names must match [`FeatureSchema::canonical`] exactly; column order in the
//! file is free and an optional `source` column carries a citation key.

mod folds;
mod outliers;
mod scaling;

pub use folds::{kfold_split, FoldPlan};
pub use outliers::{quantile, remove_outliers, OutlierPolicy, RemovalEntry, RemovalReport};
pub use scaling::{denormalize, normalize, ColumnScale, ScalingSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use thiserror::Error;

pub const N_FEATURES: usize = 11;
pub const N_TARGETS: usize = 5;
pub const SOURCE_COLUMN: &str = "source";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing required column \"{0}\"")]
    MissingColumn(String),
    #[error("line {line}, column \"{column}\": cannot parse {value:?} as a number")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}, column \"{column}\": empty cell")]
    MissingValue { line: usize, column: String },
    #[error("dataset has no data rows")]
    EmptyBody,
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error("row {row}: expected {expected} values, got {actual}")]
    WidthMismatch {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("row {row}, column \"{column}\": value is not finite")]
    NonFinite { row: usize, column: String },
    #[error("row {row}, column \"{column}\": {value} outside [0, 100]")]
    PercentOutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("column \"{0}\" is constant and cannot be normalized")]
    ConstantColumn(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid outlier policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid fold request: {0}")]
    InvalidFolds(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    CatalystProperty,
    OperatingCondition,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::CatalystProperty => "catalyst-property",
            FeatureKind::OperatingCondition => "operating-condition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// One column of the schema. `kind` is set for features and absent for targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    /// Stable identifier used in wire formats and artifact file names.
    pub key: String,
    /// Header name, matched exactly when parsing.
    pub name: String,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeatureKind>,
    /// Observed bounds; filled in whenever a [`Dataset`] is built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl ColumnSpec {
    pub fn feature(key: &str, name: &str, unit: &str, kind: FeatureKind) -> Self {
        Self {
            key: key.into(),
            name: name.into(),
            unit: unit.into(),
            kind: Some(kind),
            bounds: None,
        }
    }

    pub fn target(key: &str, name: &str, unit: &str) -> Self {
        Self {
            key: key.into(),
            name: name.into(),
            unit: unit.into(),
            kind: None,
            bounds: None,
        }
    }

    /// Columns measured in percent (or mol%) must lie in `[0, 100]`.
    pub fn is_percentage(&self) -> bool {
        self.unit == "%" || self.unit == "mol%"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<ColumnSpec>,
    pub targets: Vec<ColumnSpec>,
}

impl FeatureSchema {
    /// Builds a schema with arbitrary column counts. Names and keys must be unique.
    pub fn new(features: Vec<ColumnSpec>, targets: Vec<ColumnSpec>) -> Result<Self> {
        if features.is_empty() || targets.is_empty() {
            return Err(DataError::InvalidSchema(
                "at least one feature and one target required".into(),
            ));
        }
        let mut names = HashSet::new();
        let mut keys = HashSet::new();
        for c in features.iter().chain(&targets) {
            if !names.insert(c.name.as_str()) || !keys.insert(c.key.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate column \"{}\"",
                    c.name
                )));
            }
            if c.name == SOURCE_COLUMN {
                return Err(DataError::InvalidSchema("\"source\" is reserved".into()));
            }
        }
        if features.iter().any(|c| c.kind.is_none()) {
            return Err(DataError::InvalidSchema("every feature needs a kind".into()));
        }
        Ok(Self { features, targets })
    }

    /// The eleven-feature, five-target reforming schema in canonical order.
    pub fn canonical() -> Self {
        use FeatureKind::*;
        let features = vec![
            ColumnSpec::feature("crystal_size", "Average crystal size (nm)", "nm", CatalystProperty),
            ColumnSpec::feature("crystallinity_index", "Crystallinity index (%)", "%", CatalystProperty),
            ColumnSpec::feature("bet_area", "BET surface area (m²/g)", "m²/g", CatalystProperty),
            ColumnSpec::feature("pore_volume", "Pore volume (cm³/g)", "cm³/g", CatalystProperty),
            ColumnSpec::feature("catalyst_loading", "Catalyst loading (g)", "g", OperatingCondition),
            ColumnSpec::feature("carrier_flow", "Carrier gas flow rate (mL/min)", "mL/min", OperatingCondition),
            ColumnSpec::feature("steam_to_carbon", "Steam-to-carbon molar ratio (-)", "-", OperatingCondition),
            ColumnSpec::feature("carrier_temperature", "Carrier gas initial temperature (°C)", "°C", OperatingCondition),
            ColumnSpec::feature("reaction_temperature", "Reaction temperature (°C)", "°C", OperatingCondition),
            ColumnSpec::feature("reaction_time", "Reaction time (min)", "min", OperatingCondition),
            ColumnSpec::feature("reactor_diameter", "Reactor inner diameter (mm)", "mm", OperatingCondition),
        ];
        let targets = vec![
            ColumnSpec::target("toluene_conversion", "Toluene conversion (%)", "%"),
            ColumnSpec::target("h2", "H₂ (mol%)", "mol%"),
            ColumnSpec::target("co", "CO (mol%)", "mol%"),
            ColumnSpec::target("co2", "CO₂ (mol%)", "mol%"),
            ColumnSpec::target("ch4", "CH₄ (mol%)", "mol%"),
        ];
        Self { features, targets }
    }

    /// True when the schema has the canonical 11 + 5 layout with four catalyst properties.
    pub fn is_canonical_layout(&self) -> bool {
        self.features.len() == N_FEATURES
            && self.targets.len() == N_TARGETS
            && self
                .features
                .iter()
                .filter(|c| c.kind == Some(FeatureKind::CatalystProperty))
                .count()
                == 4
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn n_columns(&self) -> usize {
        self.features.len() + self.targets.len()
    }

    /// Features then targets.
    pub fn columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.features.iter().chain(&self.targets)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns().map(|c| c.name.clone()).collect()
    }

    pub fn feature_index(&self, key_or_name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|c| c.key == key_or_name || c.name == key_or_name)
    }

    pub fn target_index(&self, key_or_name: &str) -> Option<usize> {
        self.targets
            .iter()
            .position(|c| c.key == key_or_name || c.name == key_or_name)
    }

    pub fn feature_bounds(&self) -> Option<Vec<Bounds>> {
        self.features.iter().map(|c| c.bounds).collect()
    }

    /// Hex digest over keys, names, units and kinds (bounds excluded).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (role, cols) in [("feature", &self.features), ("target", &self.targets)] {
            for c in cols.iter() {
                let kind = c.kind.map(FeatureKind::as_str).unwrap_or("-");
                hasher.update(format!("{role}\t{}\t{}\t{}\t{kind}\n", c.key, c.name, c.unit));
            }
        }
        let digest = hasher.finalize();
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Same columns in the same order, ignoring bounds.
    pub fn same_layout(&self, other: &FeatureSchema) -> bool {
        self.fingerprint() == other.fingerprint()
    }

    fn with_observed_bounds(mut self, rows: &[Sample]) -> Self {
        let nf = self.features.len();
        for (j, col) in self.features.iter_mut().chain(self.targets.iter_mut()).enumerate() {
            let values = rows.iter().map(|r| {
                if j < nf {
                    r.features[j]
                } else {
                    r.targets[j - nf]
                }
            });
            col.bounds = values.fold(None, |acc: Option<Bounds>, v| {
                Some(match acc {
                    None => Bounds::new(v, v),
                    Some(b) => Bounds::new(b.min.min(v), b.max.max(v)),
                })
            });
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Sample {
    pub fn new(features: Vec<f64>, targets: Vec<f64>) -> Self {
        Self {
            features,
            targets,
            source: None,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// Value of column `j` in features-then-targets order.
    pub fn value(&self, j: usize) -> f64 {
        let nf = self.features.len();
        if j < nf {
            self.features[j]
        } else {
            self.targets[j - nf]
        }
    }

    fn value_mut(&mut self, j: usize) -> &mut f64 {
        let nf = self.features.len();
        if j < nf {
            &mut self.features[j]
        } else {
            &mut self.targets[j - nf]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Sample>,
}

impl Dataset {
    /// Validates rows against the schema and records observed bounds in the schema.
    pub fn new(schema: FeatureSchema, rows: Vec<Sample>) -> Result<Self> {
        if rows.is_empty() {
            return Err(DataError::EmptyBody);
        }
        let nf = schema.n_features();
        let nt = schema.n_targets();
        for (i, row) in rows.iter().enumerate() {
            let actual = row.features.len() + row.targets.len();
            if row.features.len() != nf || row.targets.len() != nt {
                return Err(DataError::WidthMismatch {
                    row: i,
                    expected: nf + nt,
                    actual,
                });
            }
            for (j, col) in schema.columns().enumerate() {
                let v = row.value(j);
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row: i,
                        column: col.name.clone(),
                    });
                }
                if col.is_percentage() && !(0.0..=100.0).contains(&v) {
                    return Err(DataError::PercentOutOfRange {
                        row: i,
                        column: col.name.clone(),
                        value: v,
                    });
                }
            }
        }
        let schema = schema.with_observed_bounds(&rows);
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column `j` in features-then-targets order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(j)).collect()
    }

    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn target_column(&self, t: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.targets[t]).collect()
    }

    /// All 16 columns, column-major, with their names.
    pub fn columns(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let names = self.schema.column_names();
        let cols = (0..self.schema.n_columns()).map(|j| self.column(j)).collect();
        (names, cols)
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        Dataset::new(self.schema.clone(), rows)
    }

    /// Per-feature medians, used to pin the remaining inputs on response surfaces.
    pub fn feature_medians(&self) -> Vec<f64> {
        (0..self.schema.n_features())
            .map(|j| {
                let mut c = self.column(j);
                c.sort_by(f64::total_cmp);
                quantile(&c, 0.5)
            })
            .collect()
    }

    fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let mut rows = self.rows.clone();
        for row in rows.iter_mut() {
            for j in 0..self.schema.n_columns() {
                let v = row.value_mut(j);
                *v = f(j, *v);
            }
        }
        Dataset::new(self.schema.clone(), rows)
    }
}

/// Parses comma-separated text whose header names every schema column.
pub fn parse_dataset(text: &str, schema: &FeatureSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Malformed(e.to_string()))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let mut column_at = Vec::with_capacity(schema.n_columns());
    for col in schema.columns() {
        column_at.push(position(&col.name).ok_or_else(|| DataError::MissingColumn(col.name.clone()))?);
    }
    let source_at = position(SOURCE_COLUMN);
    for h in headers.iter() {
        if h != SOURCE_COLUMN && !schema.columns().any(|c| c.name == h) {
            log::warn!("ignoring unknown column \"{h}\"");
        }
    }

    let nf = schema.n_features();
    let names = schema.column_names();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Malformed(format!("line {line}: {e}")))?;
        let mut values = Vec::with_capacity(column_at.len());
        for (j, &at) in column_at.iter().enumerate() {
            let cell = record.get(at).unwrap_or("");
            if cell.is_empty() {
                return Err(DataError::MissingValue {
                    line,
                    column: names[j].clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                line,
                column: names[j].clone(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        let targets = values.split_off(nf);
        let mut sample = Sample::new(values, targets);
        if let Some(s) = source_at.and_then(|at| record.get(at)).filter(|s| !s.is_empty()) {
            sample.source = Some(s.to_string());
        }
        rows.push(sample);
    }
    Dataset::new(schema.clone(), rows)
}

/// Writes the dataset in the same format [`parse_dataset`] reads.
pub fn write_dataset(d: &Dataset) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let with_source = d.rows.iter().any(|r| r.source.is_some());
    let mut header = d.schema.column_names();
    if with_source {
        header.push(SOURCE_COLUMN.into());
    }
    // Writing into a Vec cannot fail.
    writer.write_record(&header).expect("in-memory write");
    for row in &d.rows {
        let mut record: Vec<String> = row
            .features
            .iter()
            .chain(&row.targets)
            .map(|v| v.to_string())
            .collect();
        if with_source {
            record.push(row.source.clone().unwrap_or_default());
        }
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
