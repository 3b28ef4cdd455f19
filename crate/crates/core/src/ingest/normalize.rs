use ndarray::Array2;

use super::{BiomarkerMatrix, ColumnData, Normalization, RawTable};
use crate::error::{Error, Result};

/// Relative spread below which a column counts as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Z-scores every column with the population (1/n) standard deviation.
/// Constant columns become all zeros and are flagged in the returned
/// [`Normalization`].
pub fn zscore_normalize(table: RawTable) -> Result<BiomarkerMatrix> {
    table.check_shape()?;
    let n = table.n_rows();
    let p = table.n_columns();
    if p == 0 {
        return Err(Error::InvalidData("no feature columns".into()));
    }
    let mut values = Array2::<f64>::zeros((n, p));
    let mut means = Vec::with_capacity(p);
    let mut stds = Vec::with_capacity(p);
    let mut flags = Vec::with_capacity(p);

    for (j, col) in table.columns.iter().enumerate() {
        let cells = match &col.data {
            ColumnData::Numeric(v) => v,
            ColumnData::Categorical(_) => {
                return Err(Error::InvalidData(format!(
                    "column {:?} is categorical; encode before normalizing",
                    col.schema.name
                )))
            }
        };
        let x: Vec<f64> = cells
            .iter()
            .map(|c| {
                c.ok_or_else(|| {
                    Error::InvalidData(format!("column {:?} has missing cells", col.schema.name))
                })
            })
            .collect::<Result<_>>()?;
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        let constant = !(std > CONSTANT_TOL * mean.abs().max(1.0));
        for (i, v) in x.iter().enumerate() {
            values[[i, j]] = if constant { 0.0 } else { (v - mean) / std };
        }
        means.push(mean);
        stds.push(std);
        flags.push(constant);
    }

    let m = BiomarkerMatrix {
        feature_names: table.columns.iter().map(|c| c.schema.name.clone()).collect(),
        values,
        labels: table.labels,
        label_name: table.label_name,
        normalization: Some(Normalization { means, stds, flags }),
    };
    m.validate()?;
    Ok(m)
}
