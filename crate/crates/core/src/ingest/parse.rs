use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use super::{validate_schema, Column, ColumnData, ColumnKind, ColumnSchema, RawTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Cell values (after trimming) treated as missing.
    pub missing_tokens: Vec<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            missing_tokens: ["", "NA", "NaN", "null"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn parse_csv(path: &Path, schema: &[ColumnSchema], opts: &ParseOptions) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, schema, opts)
}

pub fn parse_csv_reader<R: Read>(
    reader: R,
    schema: &[ColumnSchema],
    opts: &ParseOptions,
) -> Result<RawTable> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut position = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if position.insert(h.clone(), i).is_some() {
            return Err(Error::DuplicateHeader(h.clone()));
        }
    }
    let header_set: HashSet<&str> = header.iter().map(String::as_str).collect();
    let schema_set: HashSet<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    if header_set != schema_set {
        let mut missing: Vec<_> = schema_set.difference(&header_set).copied().collect();
        let mut extra: Vec<_> = header_set.difference(&schema_set).copied().collect();
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(Error::SchemaMismatch(format!(
            "missing from header: {missing:?}; not in schema: {extra:?}"
        )));
    }

    let missing: HashSet<&str> = opts.missing_tokens.iter().map(String::as_str).collect();
    let is_missing = |s: &str| missing.contains(s.trim());

    let features: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| matches!(c.kind, ColumnKind::Continuous | ColumnKind::Categorical))
        .collect();
    let label = schema.iter().find(|c| c.kind == ColumnKind::Label).expect("validated");
    let id_column = schema.iter().find(|c| c.kind == ColumnKind::Excluded);

    let mut data: Vec<ColumnData> = features
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            _ => ColumnData::Numeric(Vec::new()),
        })
        .collect();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::MalformedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let raw_label = record[position[&label.name]].trim();
        if is_missing(raw_label) {
            return Err(Error::MissingLabel { row });
        }
        labels.push(match raw_label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::InvalidLabel {
                    row,
                    value: other.to_string(),
                })
            }
        });
        row_ids.push(match id_column {
            Some(c) => record[position[&c.name]].trim().to_string(),
            None => row.to_string(),
        });

        for (col, out) in features.iter().zip(data.iter_mut()) {
            let cell = record[position[&col.name]].trim();
            match out {
                ColumnData::Numeric(v) => {
                    if is_missing(cell) {
                        v.push(None);
                    } else {
                        let x: f64 = cell.parse().map_err(|_| Error::UnparseableCell {
                            row,
                            column: col.name.clone(),
                            value: cell.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::UnparseableCell {
                                row,
                                column: col.name.clone(),
                                value: cell.to_string(),
                            });
                        }
                        v.push(Some(x));
                    }
                }
                ColumnData::Categorical(v) => {
                    v.push(if is_missing(cell) { None } else { Some(cell.to_string()) });
                }
            }
        }
    }

    let table = RawTable {
        columns: features
            .into_iter()
            .zip(data)
            .map(|(schema, data)| Column {
                schema: schema.clone(),
                data,
                indicator: false,
            })
            .collect(),
        label_name: label.name.clone(),
        labels,
        row_ids,
    };
    table.check_shape()?;
    Ok(table)
}
