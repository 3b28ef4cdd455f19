use std::collections::BTreeSet;

use super::{Column, ColumnData, ColumnKind, ColumnSchema, RawTable};
use crate::error::{Error, Result};

/// Replaces each categorical column with `L - 1` indicator columns named
/// `<column>_is_<level>`. The lexicographically smallest observed level is
/// the baseline. A missing category yields missing indicators.
pub fn dummy_encode(table: RawTable) -> Result<RawTable> {
    let mut columns = Vec::with_capacity(table.columns.len());
    for col in table.columns {
        let values = match col.data {
            ColumnData::Categorical(values) => values,
            data => {
                columns.push(Column { data, ..col });
                continue;
            }
        };
        let levels: BTreeSet<&str> = values.iter().flatten().map(String::as_str).collect();
        if levels.len() < 2 {
            return Err(Error::DegenerateCategorical(col.schema.name.clone()));
        }
        for level in levels.iter().skip(1) {
            let indicator = values
                .iter()
                .map(|v| v.as_deref().map(|v| if v == *level { 1.0 } else { 0.0 }))
                .collect();
            columns.push(Column {
                schema: ColumnSchema::new(
                    format!("{}_is_{}", col.schema.name, level),
                    ColumnKind::Continuous,
                ),
                data: ColumnData::Numeric(indicator),
                indicator: true,
            });
        }
    }
    Ok(RawTable { columns, ..table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(levels: Vec<Option<&str>>) -> RawTable {
        let n = levels.len();
        RawTable {
            columns: vec![
                Column {
                    schema: ColumnSchema::new("x", ColumnKind::Continuous),
                    data: ColumnData::Numeric((0..n).map(|i| Some(i as f64)).collect()),
                    indicator: false,
                },
                Column {
                    schema: ColumnSchema::new("g", ColumnKind::Categorical),
                    data: ColumnData::Categorical(
                        levels.into_iter().map(|l| l.map(str::to_string)).collect(),
                    ),
                    indicator: false,
                },
            ],
            label_name: "y".into(),
            labels: vec![0; n],
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn three_levels_make_two_indicators() {
        let t = dummy_encode(table(vec![Some("a"), Some("b"), Some("c"), Some("b")])).unwrap();
        let names: Vec<_> = t.columns.iter().map(|c| c.schema.name.as_str()).collect();
        assert_eq!(names, vec!["x", "g_is_b", "g_is_c"]);
        assert_eq!(t.columns[1].data, ColumnData::Numeric(vec![Some(0.0), Some(1.0), Some(0.0), Some(1.0)]));
        assert_eq!(t.columns[2].data, ColumnData::Numeric(vec![Some(0.0), Some(0.0), Some(1.0), Some(0.0)]));
        assert!(t.columns[1].indicator);
    }

    #[test]
    fn two_levels_make_one_indicator() {
        let t = dummy_encode(table(vec![Some("x"), Some("y")])).unwrap();
        assert_eq!(t.n_columns(), 2);
        assert_eq!(t.columns[1].schema.name, "g_is_y");
        assert_eq!(t.columns[1].data, ColumnData::Numeric(vec![Some(0.0), Some(1.0)]));
    }

    #[test]
    fn missing_category_stays_missing() {
        let t = dummy_encode(table(vec![Some("x"), None, Some("y")])).unwrap();
        assert_eq!(t.columns[1].data, ColumnData::Numeric(vec![Some(0.0), None, Some(1.0)]));
    }

    #[test]
    fn single_level_is_degenerate() {
        let err = dummy_encode(table(vec![Some("x"), Some("x"), None])).unwrap_err();
        assert!(matches!(err, Error::DegenerateCategorical(_)));
    }

    #[test]
    fn numeric_table_unchanged() {
        let mut t = table(vec![Some("a")]);
        t.columns.truncate(1);
        let before = t.clone();
        assert_eq!(dummy_encode(t).unwrap(), before);
    }
}
