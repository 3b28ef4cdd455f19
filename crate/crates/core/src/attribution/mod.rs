//! Shapley attribution of trained models, pooled importance scores and the
//! top-N biomarker pool with confound exclusion.

mod shapley;

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;
use crate::models::{ModelKind, Predictor};

pub use shapley::{exact_shapley, sampled_shapley, ShapleyValues, MAX_EXACT_FEATURES};

pub const DEFAULT_BACKGROUND_SIZE: usize = 100;
pub const DEFAULT_TOP_N: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Estimator {
    Exact,
    Sampled { n_coalitions: usize },
}

impl Estimator {
    pub fn explain(&self, model: &dyn Predictor, x: &[f64], background: ArrayView2<'_, f64>, seed: u64) -> Result<ShapleyValues> {
        match *self {
            Estimator::Exact => exact_shapley(model, x, background),
            Estimator::Sampled { n_coalitions } => sampled_shapley(model, x, background, n_coalitions, seed),
        }
    }
}

/// Shapley values of one model on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub feature_names: Vec<String>,
    /// `T × p`
    pub values: Array2<f64>,
    pub base_value: f64,
    pub model_kind: ModelKind,
    pub bootstrap_index: usize,
}

/// Up to `size` distinct training rows, chosen with `seed`, in their
/// original order.
pub fn sample_background(train: &BiomarkerMatrix, size: usize, seed: u64) -> Result<Array2<f64>> {
    if size == 0 {
        return Err(Error::Config("background_size must be positive".into()));
    }
    let n = train.n_samples();
    let mut idx: Vec<usize> = if size >= n {
        (0..n).collect()
    } else {
        sample(&mut ChaCha8Rng::seed_from_u64(seed), n, size).into_vec()
    };
    idx.sort_unstable();
    Ok(train.values.select(ndarray::Axis(0), &idx))
}

/// Attributes every row of `test`. Rows are explained concurrently; row
/// `t` of a sampled estimate uses seed `seed + t`.
pub fn explain_rows(
    model: &dyn Predictor,
    feature_names: &[String],
    test: ArrayView2<'_, f64>,
    background: ArrayView2<'_, f64>,
    estimator: Estimator,
    seed: u64,
    model_kind: ModelKind,
    bootstrap_index: usize,
) -> Result<AttributionMatrix> {
    if test.ncols() != feature_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            test.ncols()
        )));
    }
    let rows: Vec<ShapleyValues> = (0..test.nrows())
        .into_par_iter()
        .map(|t| {
            let x = test.row(t).to_vec();
            estimator.explain(model, &x, background, seed.wrapping_add(t as u64))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let p = feature_names.len();
    let mut values = Array2::zeros((rows.len(), p));
    for (t, r) in rows.iter().enumerate() {
        for j in 0..p {
            values[[t, j]] = r.phi[j];
        }
    }
    let base_value = match rows.first() {
        Some(r) => r.base,
        None => {
            let n = background.nrows().max(1) as f64;
            background.outer_iter().map(|b| model.predict_row(&b.to_vec())).sum::<f64>() / n
        }
    };
    Ok(AttributionMatrix {
        feature_names: feature_names.to_vec(),
        values,
        base_value,
        model_kind,
        bootstrap_index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateCounts {
    /// Total number of explained rows over all runs.
    pub t_total: usize,
    /// Distinct bootstrap iterations.
    pub b: usize,
    /// Distinct model kinds.
    pub k: usize,
}

/// Mean absolute attribution per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceAggregate {
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    pub counts: AggregateCounts,
    pub models: Vec<ModelKind>,
}

impl ImportanceAggregate {
    /// Label used in file names and pool reports.
    pub fn label(&self) -> String {
        self.models.iter().map(|m| m.as_str()).collect::<Vec<_>>().join("+")
    }

    /// Feature indices by score descending; ties keep the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rank", "feature", "score"])?;
        for (rank, j) in self.ranking().into_iter().enumerate() {
            w.write_record([(rank + 1).to_string(), self.feature_names[j].clone(), self.scores[j].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `S_i = (1 / total count) Σ |s_i|` over every explained row of every run.
/// Runs are reduced in `(model, iteration)` order, so the result does not
/// depend on how they were collected.
pub fn aggregate_importance(runs: &[AttributionMatrix]) -> Result<ImportanceAggregate> {
    let first = runs.first().ok_or_else(|| Error::InvalidData("no attribution runs to aggregate".into()))?;
    let names = &first.feature_names;
    for r in runs {
        if &r.feature_names != names || r.values.ncols() != names.len() {
            return Err(Error::DimensionMismatch(format!(
                "attribution run for {} iteration {} has a different feature order",
                r.model_kind, r.bootstrap_index
            )));
        }
    }
    let mut ordered: Vec<&AttributionMatrix> = runs.iter().collect();
    ordered.sort_by_key(|r| (r.model_kind, r.bootstrap_index));
    let t_total: usize = ordered.iter().map(|r| r.values.nrows()).sum();
    if t_total == 0 {
        return Err(Error::InvalidData("attribution runs contain no rows".into()));
    }
    let mut sums = vec![0.0; names.len()];
    for r in &ordered {
        for row in r.values.outer_iter() {
            for (s, v) in sums.iter_mut().zip(row.iter()) {
                *s += v.abs();
            }
        }
    }
    let models: BTreeSet<ModelKind> = ordered.iter().map(|r| r.model_kind).collect();
    let iterations: BTreeSet<usize> = ordered.iter().map(|r| r.bootstrap_index).collect();
    Ok(ImportanceAggregate {
        feature_names: names.clone(),
        scores: sums.into_iter().map(|s| s / t_total as f64).collect(),
        counts: AggregateCounts {
            t_total,
            b: iterations.len(),
            k: models.len(),
        },
        models: models.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub top_n: usize,
    /// Regular expressions; a literal name fragment works as-is.
    pub exclusion_patterns: Vec<String>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            top_n: DEFAULT_TOP_N,
            exclusion_patterns: Vec::new(),
        }
    }
}

impl SelectionConfig {
    pub fn compile_patterns(&self) -> Result<Vec<Regex>> {
        self.exclusion_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| Error::Config(format!("bad exclusion pattern {p:?}: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopSet {
    pub model: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSelection {
    pub pool: Vec<String>,
    pub per_model_top: Vec<TopSet>,
    pub excluded: Vec<String>,
}

/// Union of each model's top features minus the excluded names, ordered by
/// the best score any model gave them.
pub fn select_pool(per_model: &[ImportanceAggregate], cfg: &SelectionConfig) -> Result<PoolSelection> {
    let first = per_model.first().ok_or_else(|| Error::InvalidData("no importance tables to pool".into()))?;
    let names = &first.feature_names;
    let p = names.len();
    if per_model.iter().any(|a| &a.feature_names != names) {
        return Err(Error::DimensionMismatch("importance tables disagree on feature order".into()));
    }
    if cfg.top_n == 0 || cfg.top_n > p {
        return Err(Error::Config(format!("top_n must lie in 1..={p}, got {}", cfg.top_n)));
    }
    let patterns = cfg.compile_patterns()?;
    let mut chosen = vec![false; p];
    let mut per_model_top = Vec::with_capacity(per_model.len());
    for agg in per_model {
        let top: Vec<usize> = agg.ranking().into_iter().take(cfg.top_n).collect();
        for &j in &top {
            chosen[j] = true;
        }
        per_model_top.push(TopSet {
            model: agg.label(),
            features: top.iter().map(|&j| names[j].clone()).collect(),
        });
    }
    let best = |j: usize| per_model.iter().map(|a| a.scores[j]).fold(f64::NEG_INFINITY, f64::max);
    let mut union: Vec<usize> = (0..p).filter(|&j| chosen[j]).collect();
    union.sort_by(|&a, &b| best(b).total_cmp(&best(a)).then(a.cmp(&b)));
    let (excluded, kept): (Vec<usize>, Vec<usize>) =
        union.into_iter().partition(|&j| patterns.iter().any(|re| re.is_match(&names[j])));
    if kept.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(PoolSelection {
        pool: kept.iter().map(|&j| names[j].clone()).collect(),
        per_model_top,
        excluded: excluded.iter().map(|&j| names[j].clone()).collect(),
    })
}
