use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::evaluation::compute_metrics;
use crate::ingest::BiomarkerMatrix;

/// Named hyperparameter axes. Points are enumerated axis-major: the first
/// axis varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterGrid {
    pub axes: Vec<(String, Vec<f64>)>,
}

impl HyperparameterGrid {
    pub fn new(axes: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let g = HyperparameterGrid { axes };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((name, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("grid axis {name:?} is empty")));
        }
        Ok(())
    }

    pub fn single(point: &BTreeMap<String, f64>) -> Self {
        HyperparameterGrid {
            axes: point.iter().map(|(k, v)| (k.clone(), vec![*v])).collect(),
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        let axes: Vec<(&str, Vec<f64>)> = match kind {
            ModelKind::ElasticNetLogistic => vec![
                ("lambda", vec![0.001, 0.01, 0.1]),
                ("l1_ratio", vec![0.2, 0.5, 0.8]),
            ],
            ModelKind::GradientBoostedTrees => vec![
                ("rounds", vec![50.0, 100.0]),
                ("max_depth", vec![2.0, 3.0]),
                ("learning_rate", vec![0.1, 0.3]),
            ],
            ModelKind::ShallowMlp => vec![
                ("hidden_units", vec![16.0, 32.0]),
                ("step", vec![0.01, 0.1]),
                ("epochs", vec![500.0]),
            ],
        };
        HyperparameterGrid {
            axes: axes.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn points(&self) -> Vec<BTreeMap<String, f64>> {
        let mut out = vec![BTreeMap::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|point| {
                    values.iter().map(move |v| {
                        let mut p = point.clone();
                        p.insert(name.clone(), *v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// Fold index per row. Each class is shuffled with `seed` and dealt
/// round-robin, so every fold receives both classes when each class has at
/// least `folds` members.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config("at least two folds are required".into()));
    }
    if labels.len() < folds {
        return Err(Error::Unstratifiable(format!("{} rows for {folds} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::Unstratifiable(format!(
                "class {class} has {} rows, fewer than {folds} folds; some fold would hold a single class",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub best: ModelConfig,
    /// Mean validation micro-F1 for each point, in enumeration order.
    pub scores: Vec<(BTreeMap<String, f64>, f64)>,
}

/// Stratified k-fold grid search. Picks the point with the highest mean
/// validation micro-F1; ties keep the earliest point.
pub fn grid_search_cv(
    matrix: &BiomarkerMatrix,
    kind: ModelKind,
    grid: &HyperparameterGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchReport> {
    grid.validate()?;
    let assignment = stratified_folds(&matrix.labels, folds, seed)?;
    let splits: Vec<(BiomarkerMatrix, BiomarkerMatrix)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] != f).collect();
            let valid: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == f).collect();
            (matrix.select_rows(&train), matrix.select_rows(&valid))
        })
        .collect();
    let points = grid.points();

    let scores: Vec<f64> = points
        .par_iter()
        .map(|point| {
            let cfg = ModelConfig::new(kind, point.clone(), seed);
            let mut total = 0.0;
            for (train_m, valid_m) in &splits {
                let model = train(train_m, &cfg)?;
                let prob = model.predict_proba(valid_m.values.view())?;
                total += compute_metrics(&valid_m.labels, &prob, 0.5)?.micro_f1;
            }
            Ok(total / folds as f64)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(GridSearchReport {
        best: ModelConfig::new(kind, points[best].clone(), seed),
        scores: points.into_iter().zip(scores).collect(),
    })
}
