use rayon::prelude::*;

use super::{ColumnData, RawTable};
use crate::error::{Error, Result};

/// Fills missing cells with the mean of the `k` nearest donor rows.
///
/// Donors for a column are the rows observing it. Distance between two rows
/// is the mean squared difference over the coordinates both rows observe, so
/// rows with different overlap sizes stay comparable. Ties go to the lower
/// row index. Distances use only originally observed values, so columns can
/// be filled independently.
pub fn knn_impute(table: RawTable, k: usize) -> Result<RawTable> {
    if k == 0 {
        return Err(Error::Config("k for imputation must be positive".into()));
    }
    let cols: Vec<&Vec<Option<f64>>> = table
        .columns
        .iter()
        .map(|c| match &c.data {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical(_) => Err(Error::InvalidData(format!(
                "column {:?} must be encoded before imputation",
                c.schema.name
            ))),
        })
        .collect::<Result<_>>()?;
    if table.missing_count() == 0 {
        return Ok(table);
    }
    for (c, col) in table.columns.iter().zip(&cols) {
        if col.iter().all(Option::is_none) {
            return Err(Error::UnimputableColumn(c.schema.name.clone()));
        }
    }

    let filled: Vec<Vec<Option<f64>>> = cols
        .par_iter()
        .enumerate()
        .map(|(c, col)| fill_column(&cols, col, k, table.columns[c].indicator))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let mut table = table;
    for (column, values) in table.columns.iter_mut().zip(filled) {
        column.data = ColumnData::Numeric(values);
    }
    Ok(table)
}

fn row_distance(cols: &[&Vec<Option<f64>>], a: usize, b: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for col in cols {
        if let (Some(x), Some(y)) = (col[a], col[b]) {
            sum += (x - y) * (x - y);
            shared += 1;
        }
    }
    (shared > 0).then(|| sum / shared as f64)
}

fn fill_column(
    cols: &[&Vec<Option<f64>>],
    col: &[Option<f64>],
    k: usize,
    indicator: bool,
) -> Result<Vec<Option<f64>>> {
    let donors: Vec<usize> = (0..col.len()).filter(|&r| col[r].is_some()).collect();
    let mut out = col.to_vec();
    for row in 0..col.len() {
        if col[row].is_some() {
            continue;
        }
        let mut ranked: Vec<(f64, usize)> = donors
            .iter()
            .filter_map(|&d| row_distance(cols, row, d).map(|dist| (dist, d)))
            .collect();
        if ranked.is_empty() {
            return Err(Error::IsolatedSample(row));
        }
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = k.min(ranked.len());
        let mean = ranked[..take]
            .iter()
            .map(|&(_, d)| col[d].expect("donor observes column"))
            .sum::<f64>()
            / take as f64;
        out[row] = Some(if indicator {
            if mean >= 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            mean
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, ColumnKind, ColumnSchema};
    use proptest::prelude::*;

    fn table(cols: Vec<Vec<Option<f64>>>) -> RawTable {
        let n = cols[0].len();
        RawTable {
            columns: cols
                .into_iter()
                .enumerate()
                .map(|(i, v)| Column {
                    schema: ColumnSchema::new(format!("c{i}"), ColumnKind::Continuous),
                    data: ColumnData::Numeric(v),
                    indicator: false,
                })
                .collect(),
            label_name: "y".into(),
            labels: vec![0; n],
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    fn numeric(t: &RawTable, c: usize) -> Vec<Option<f64>> {
        match &t.columns[c].data {
            ColumnData::Numeric(v) => v.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn hand_example_effective_k() {
        // s1=(1,2) s2=(3,4) s3=(2,?): both donors at squared distance 1.
        let t = table(vec![
            vec![Some(1.0), Some(3.0), Some(2.0)],
            vec![Some(2.0), Some(4.0), None],
        ]);
        let out = knn_impute(t, 5).unwrap();
        assert_eq!(numeric(&out, 1)[2], Some(3.0));
    }

    #[test]
    fn nearest_donor_wins_with_k1() {
        let t = table(vec![
            vec![Some(0.0), Some(10.0), Some(9.0)],
            vec![Some(1.0), Some(7.0), None],
        ]);
        let out = knn_impute(t, 1).unwrap();
        assert_eq!(numeric(&out, 1)[2], Some(7.0));
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let t = table(vec![
            vec![Some(0.0), Some(2.0), Some(1.0)],
            vec![Some(5.0), Some(9.0), None],
        ]);
        let out = knn_impute(t, 1).unwrap();
        assert_eq!(numeric(&out, 1)[2], Some(5.0));
    }

    #[test]
    fn entirely_missing_column() {
        let t = table(vec![vec![Some(1.0), Some(2.0)], vec![None, None]]);
        assert!(matches!(knn_impute(t, 5), Err(Error::UnimputableColumn(_))));
    }

    #[test]
    fn isolated_sample() {
        // row 1 observes only c2, which the sole donor of c0 lacks
        let t = table(vec![
            vec![Some(1.0), None],
            vec![Some(2.0), None],
            vec![None, Some(3.0)],
        ]);
        assert!(matches!(knn_impute(t, 5), Err(Error::IsolatedSample(1))));
    }

    #[test]
    fn indicator_rounds() {
        let mut t = table(vec![
            vec![Some(0.0), Some(0.1), Some(0.2), Some(0.05)],
            vec![Some(1.0), Some(1.0), Some(0.0), None],
        ]);
        t.columns[1].indicator = true;
        let out = knn_impute(t, 3).unwrap();
        assert_eq!(numeric(&out, 1)[3], Some(1.0));
    }

    fn arb_table() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
        (2usize..5, 3usize..12).prop_flat_map(|(p, n)| {
            prop::collection::vec(
                prop::collection::vec(
                    prop_oneof![4 => (-50.0f64..50.0).prop_map(Some), 1 => Just(None)],
                    n,
                ),
                p,
            )
        })
    }

    proptest! {
        #[test]
        fn imputed_values_within_observed_range(cols in arb_table(), k in 1usize..6) {
            let t = table(cols.clone());
            if let Ok(out) = knn_impute(t, k) {
                for (c, col) in cols.iter().enumerate() {
                    let obs: Vec<f64> = col.iter().flatten().copied().collect();
                    let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    for v in numeric(&out, c) {
                        let v = v.unwrap();
                        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn complete_table_is_untouched(cols in prop::collection::vec(prop::collection::vec((-5.0f64..5.0).prop_map(Some), 6), 3)) {
            let t = table(cols);
            prop_assert_eq!(knn_impute(t.clone(), 5).unwrap(), t);
        }
    }
}
