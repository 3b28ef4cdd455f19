use super::{ColumnData, RawTable};
use crate::error::{Error, Result};

/// Multiplies every unit-tagged numeric column by its scale to mg and clears the tag.
pub fn convert_units(mut table: RawTable) -> Result<RawTable> {
    for col in &mut table.columns {
        if col.schema.unit.is_none() {
            continue;
        }
        let scale = match col.schema.unit_scale_to_mg {
            Some(s) if s.is_finite() && s > 0.0 => s,
            _ => return Err(Error::InvalidScale(col.schema.name.clone())),
        };
        match &mut col.data {
            ColumnData::Numeric(values) => {
                for v in values.iter_mut().flatten() {
                    *v *= scale;
                }
            }
            ColumnData::Categorical(_) => {
                return Err(Error::InvalidScale(col.schema.name.clone()));
            }
        }
        col.schema.unit = None;
        col.schema.unit_scale_to_mg = None;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, ColumnKind, ColumnSchema};

    fn table(schema: ColumnSchema, values: Vec<Option<f64>>) -> RawTable {
        let n = values.len();
        RawTable {
            columns: vec![Column {
                schema,
                data: ColumnData::Numeric(values),
                indicator: false,
            }],
            label_name: "y".into(),
            labels: vec![0; n],
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn micrograms_to_milligrams() {
        let s = ColumnSchema::new("a", ColumnKind::Continuous).with_unit("ug", 1e-3);
        let t = convert_units(table(s, vec![Some(500.0), None])).unwrap();
        assert_eq!(t.columns[0].data, ColumnData::Numeric(vec![Some(0.5), None]));
        assert!(t.columns[0].schema.unit.is_none());
    }

    #[test]
    fn untagged_unchanged() {
        let t = table(ColumnSchema::new("a", ColumnKind::Continuous), vec![Some(3.0)]);
        assert_eq!(convert_units(t.clone()).unwrap(), t);
    }

    #[test]
    fn zero_scale_rejected() {
        let s = ColumnSchema::new("a", ColumnKind::Continuous).with_unit("ug", 0.0);
        let err = convert_units(table(s, vec![Some(1.0)])).unwrap_err();
        assert!(err.to_string().contains("invalid scale"));
    }

    #[test]
    fn tag_without_scale_rejected() {
        let mut s = ColumnSchema::new("a", ColumnKind::Continuous);
        s.unit = Some("IU".into());
        assert!(matches!(
            convert_units(table(s, vec![Some(1.0)])),
            Err(Error::InvalidScale(_))
        ));
    }
}
