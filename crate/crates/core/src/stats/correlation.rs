use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

/// Pearson correlation written as a ratio of raw sums:
///
/// ```text
/// w = (Σ xy − (1/n) Σx Σy) / sqrt(Var(x) Var(y)),   Var(x) = (1/n)(n Σx² − (Σx)²)
/// ```
///
/// Both vectors are shifted by their means first. The expression is
/// shift-invariant, and the shift keeps the sums from cancelling when the
/// inputs carry a large common offset.
pub fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!("lengths {n} and {}", y.len())));
    }
    if n < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples".into()));
    }
    let nf = n as f64;
    let mx = x.sum() / nf;
    let my = y.sum() / nf;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        let a = a - mx;
        let b = b - my;
        sx += a;
        sy += b;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let var_x = (nf * sxx - sx * sx) / nf;
    let var_y = (nf * syy - sy * sy) / nf;
    let scale_x = x.iter().fold(0.0_f64, |m, v| m.max((v - mx).abs()));
    let scale_y = y.iter().fold(0.0_f64, |m, v| m.max((v - my).abs()));
    if !(var_x > 1e-24 * scale_x * scale_x * nf) || !(var_y > 1e-24 * scale_y * scale_y * nf) {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    let w = (sxy - sx * sy / nf) / (var_x * var_y).sqrt();
    Ok(w.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub r: Array2<f64>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.names.len();
        if self.r.dim() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "{p} names for a {:?} matrix",
                self.r.dim()
            )));
        }
        for i in 0..p {
            if (self.r[[i, i]] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidData(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..p {
                let v = self.r[[i, j]];
                if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidData(format!("entry ({i},{j}) = {v} outside [-1, 1]")));
                }
                if (v - self.r[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidData(format!("entry ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// CSV with a header row and a leading name column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.r.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<CorrelationMatrix> {
        let mut rdr = csv::Reader::from_path(path)?;
        let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let p = names.len();
        let mut r = Array2::<f64>::zeros((p, p));
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if i >= p || rec.len() != p + 1 {
                return Err(Error::MalformedRow {
                    row: i,
                    expected: p + 1,
                    found: rec.len(),
                });
            }
            if rec[0] != names[i] {
                return Err(Error::SchemaMismatch(format!(
                    "row {i} is {:?}, column is {:?}",
                    &rec[0], names[i]
                )));
            }
            for j in 0..p {
                r[[i, j]] = rec[j + 1].trim().parse().map_err(|_| Error::UnparseableCell {
                    row: i,
                    column: names[j].clone(),
                    value: rec[j + 1].to_string(),
                })?;
            }
            rows += 1;
        }
        if rows != p {
            return Err(Error::DimensionMismatch(format!("{rows} rows for {p} columns")));
        }
        let m = CorrelationMatrix { names, r };
        m.validate()?;
        Ok(m)
    }
}

/// Pairwise correlations over the named subset, in subset order.
pub fn correlation_matrix(matrix: &BiomarkerMatrix, subset: &[String]) -> Result<CorrelationMatrix> {
    if subset.is_empty() {
        return Err(Error::InvalidData("empty feature subset".into()));
    }
    let idx: Vec<usize> = subset
        .iter()
        .map(|n| {
            matrix
                .feature_index(n)
                .ok_or_else(|| Error::InvalidData(format!("unknown feature {n:?}")))
        })
        .collect::<Result<_>>()?;
    let p = idx.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| ((a + 1)..p).map(move |b| (a, b))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            pearson(matrix.column(idx[a]), matrix.column(idx[b])).map_err(|e| match e {
                Error::UndefinedCorrelation(_) => Error::UndefinedCorrelation(format!(
                    "constant column among {:?} / {:?}",
                    subset[a], subset[b]
                )),
                e => e,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    if p == 1 {
        // still reject a lone constant column
        let c = matrix.column(idx[0]);
        let first = c[0];
        if c.iter().all(|&v| v == first) {
            return Err(Error::UndefinedCorrelation(format!("constant column {:?}", subset[0])));
        }
    }
    let mut r = Array2::<f64>::eye(p);
    for (&(a, b), v) in pairs.iter().zip(values) {
        r[[a, b]] = v;
        r[[b, a]] = v;
    }
    Ok(CorrelationMatrix {
        names: subset.to_vec(),
        r,
    })
}
