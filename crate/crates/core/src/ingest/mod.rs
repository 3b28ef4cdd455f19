//! Cohort ingestion: CSV parsing against a column schema, categorical
//! encoding, unit conversion, nearest-neighbour imputation and z-scoring.
//!
//! The fixed stage order is convert → encode → impute → normalize, see
//! [`preprocess`].

mod encode;
mod impute;
mod matrix;
mod normalize;
mod parse;
mod units;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encode::dummy_encode;
pub use impute::knn_impute;
pub use matrix::{BiomarkerMatrix, Normalization};
pub use normalize::zscore_normalize;
pub use parse::{parse_csv, parse_csv_reader, ParseOptions};
pub use units::convert_units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Label,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_scale_to_mg: Option<f64>,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSchema {
            name: name.into(),
            kind,
            unit: None,
            unit_scale_to_mg: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>, scale_to_mg: f64) -> Self {
        self.unit = Some(unit.into());
        self.unit_scale_to_mg = Some(scale_to_mg);
        self
    }
}

/// Checks the schema-level invariants: unique names, exactly one label
/// column, and unit tags paired with scale factors.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut seen = HashSet::new();
    for col in schema {
        if !seen.insert(col.name.as_str()) {
            return Err(Error::Config(format!("duplicate schema column {:?}", col.name)));
        }
        if col.unit.is_some() != col.unit_scale_to_mg.is_some() {
            return Err(Error::InvalidScale(col.name.clone()));
        }
    }
    let labels = schema.iter().filter(|c| c.kind == ColumnKind::Label).count();
    if labels != 1 {
        return Err(Error::Config(format!(
            "schema must have exactly one label column, found {labels}"
        )));
    }
    Ok(())
}

pub fn read_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Vec<ColumnSchema> = serde_json::from_str(&text)?;
    validate_schema(&schema)?;
    Ok(schema)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn missing_count(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.iter().filter(|c| c.is_none()).count(),
            ColumnData::Categorical(v) => v.iter().filter(|c| c.is_none()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub schema: ColumnSchema,
    pub data: ColumnData,
    /// Set on 0/1 columns produced by dummy encoding; imputed values are
    /// rounded back onto {0, 1}.
    pub indicator: bool,
}

/// Typed cohort table. Feature columns only; the label is held separately
/// and excluded columns are dropped at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<Column>,
    pub label_name: String,
    pub labels: Vec<u8>,
    pub row_ids: Vec<String>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.schema.name == name)
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().map(|c| c.data.missing_count()).sum()
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::InvalidData("table has no rows".into()));
        }
        if self.row_ids.len() != n {
            return Err(Error::InvalidData("row id count differs from row count".into()));
        }
        for c in &self.columns {
            if c.data.len() != n {
                return Err(Error::InvalidData(format!(
                    "column {:?} has {} cells, expected {n}",
                    c.schema.name,
                    c.data.len()
                )));
            }
        }
        Ok(())
    }
}

/// Runs the full cleaning chain: convert units, dummy-encode, impute, z-score.
pub fn preprocess(table: RawTable, k_impute: usize) -> Result<BiomarkerMatrix> {
    let table = convert_units(table)?;
    let table = dummy_encode(table)?;
    let table = knn_impute(table, k_impute)?;
    zscore_normalize(table)
}
