use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column statistics recorded by z-scoring so values can be mapped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `true` for constant columns, which normalize to all zeros.
    pub flags: Vec<bool>,
}

/// Complete numeric cohort: `n` samples by `p` named features plus binary labels
/// (1 = case, 0 = control).
#[derive(Debug, Clone, PartialEq)]
pub struct BiomarkerMatrix {
    pub feature_names: Vec<String>,
    pub values: Array2<f64>,
    pub labels: Vec<u8>,
    pub label_name: String,
    pub normalization: Option<Normalization>,
}

impl BiomarkerMatrix {
    pub fn new(feature_names: Vec<String>, values: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        let m = BiomarkerMatrix {
            feature_names,
            values,
            labels,
            label_name: "label".to_string(),
            normalization: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.values.dim();
        if p == 0 || p != self.feature_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {p} columns",
                self.feature_names.len()
            )));
        }
        if n != self.labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {n} rows",
                self.labels.len()
            )));
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidData("labels must be 0 or 1".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("matrix contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Rows at `idx`, in that order. Normalization metadata is kept.
    pub fn select_rows(&self, idx: &[usize]) -> BiomarkerMatrix {
        BiomarkerMatrix {
            feature_names: self.feature_names.clone(),
            values: self.values.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_name: self.label_name.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Rows whose label equals `label`.
    pub fn group(&self, label: u8) -> BiomarkerMatrix {
        let idx: Vec<usize> = (0..self.n_samples()).filter(|&i| self.labels[i] == label).collect();
        self.select_rows(&idx)
    }

    /// Columns named in `names`, in that order.
    pub fn select_features(&self, names: &[String]) -> Result<BiomarkerMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| Error::InvalidData(format!("unknown feature {n:?}")))
            })
            .collect::<Result<_>>()?;
        let normalization = self.normalization.as_ref().map(|nz| Normalization {
            means: idx.iter().map(|&j| nz.means[j]).collect(),
            stds: idx.iter().map(|&j| nz.stds[j]).collect(),
            flags: idx.iter().map(|&j| nz.flags[j]).collect(),
        });
        Ok(BiomarkerMatrix {
            feature_names: names.to_vec(),
            values: self.values.select(Axis(1), &idx),
            labels: self.labels.clone(),
            label_name: self.label_name.clone(),
            normalization,
        })
    }

    /// Names of columns flagged constant during normalization.
    pub fn constant_features(&self) -> Vec<String> {
        match &self.normalization {
            Some(nz) => self
                .feature_names
                .iter()
                .zip(&nz.flags)
                .filter(|(_, &f)| f)
                .map(|(n, _)| n.clone())
                .collect(),
            None => Vec::new(),
        }
    }

    /// Writes the snapshot CSV (features then label as the last column) and,
    /// when present, the normalization sidecar as JSON.
    pub fn write_snapshot(&self, csv_path: &Path, sidecar_path: Option<&Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header = self.feature_names.clone();
        header.push(self.label_name.clone());
        w.write_record(&header)?;
        for (row, label) in self.values.outer_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        if let (Some(path), Some(nz)) = (sidecar_path, &self.normalization) {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            f.write_all(serde_json::to_string_pretty(nz)?.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn read_snapshot(csv_path: &Path, sidecar_path: Option<&Path>) -> Result<BiomarkerMatrix> {
        let mut r = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(Error::SchemaMismatch("snapshot needs features and a label column".into()));
        }
        let p = header.len() - 1;
        let mut flat = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::MalformedRow {
                    row,
                    expected: header.len(),
                    found: rec.len(),
                });
            }
            for j in 0..p {
                flat.push(rec[j].parse::<f64>().map_err(|_| Error::UnparseableCell {
                    row,
                    column: header[j].clone(),
                    value: rec[j].to_string(),
                })?);
            }
            labels.push(match rec[p].trim() {
                "0" => 0,
                "1" => 1,
                v => {
                    return Err(Error::InvalidLabel {
                        row,
                        value: v.to_string(),
                    })
                }
            });
        }
        let n = labels.len();
        let values = Array2::from_shape_vec((n, p), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let normalization = match sidecar_path {
            Some(path) if path.exists() => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Some(serde_json::from_str(&text)?)
            }
            _ => None,
        };
        let m = BiomarkerMatrix {
            feature_names: header[..p].to_vec(),
            values,
            labels,
            label_name: header[p].clone(),
            normalization,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into()],
            array![[0.1, -1.0 / 3.0], [1e-17, 2.5]],
            vec![1, 0],
        )
        .unwrap();
        m.normalization = Some(Normalization {
            means: vec![1.0, 2.0],
            stds: vec![0.5, 0.0],
            flags: vec![false, true],
        });
        let csv = dir.path().join("m.csv");
        let side = dir.path().join("m.json");
        m.write_snapshot(&csv, Some(&side)).unwrap();
        let back = BiomarkerMatrix::read_snapshot(&csv, Some(&side)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.constant_features(), vec!["b".to_string()]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BiomarkerMatrix::new(vec!["a".into()], array![[1.0, 2.0]], vec![0]).is_err());
        assert!(BiomarkerMatrix::new(vec!["a".into()], array![[1.0]], vec![0, 1]).is_err());
        assert!(BiomarkerMatrix::new(vec!["a".into()], array![[f64::NAN]], vec![0]).is_err());
    }

    #[test]
    fn groups_and_subsets() {
        let m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into()],
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            vec![1, 0, 1],
        )
        .unwrap();
        assert_eq!(m.group(1).values, array![[1.0, 2.0], [5.0, 6.0]]);
        let s = m.select_features(&["b".into()]).unwrap();
        assert_eq!(s.values, array![[2.0], [4.0], [6.0]]);
        assert!(m.select_features(&["zzz".into()]).is_err());
    }
}
