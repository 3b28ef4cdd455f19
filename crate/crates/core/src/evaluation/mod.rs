//! Stratified splitting, the bootstrap harness and classification metrics.

mod metrics;
mod split;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{explain_rows, sample_background, AttributionMatrix, Estimator};
use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;
use crate::models::{grid_search_cv, train, HyperparameterGrid, ModelConfig, ModelKind};

pub use metrics::{compute_metrics, roc_auc, Confusion, MetricReport, RocCurve};
pub use split::{allocate_test_counts, stratified_split, SplitSpec};

/// One model family and the grid searched for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub kind: ModelKind,
    pub grid: HyperparameterGrid,
}

impl ModelPlan {
    pub fn with_default_grid(kind: ModelKind) -> Self {
        ModelPlan {
            kind,
            grid: HyperparameterGrid::default_for(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionOptions {
    pub background_size: usize,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BootstrapOptions {
    /// Search hyperparameters once, on the first iteration's training rows,
    /// and reuse the winners in every iteration.
    pub hoist_grid_search: bool,
    /// Explain the test rows of every fitted model when set.
    pub attribution: Option<AttributionOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub model: ModelKind,
    pub config: ModelConfig,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// Sorted by `(iteration, model)`.
    pub metrics: Vec<IterationMetrics>,
    pub attributions: Vec<AttributionMatrix>,
}

impl BootstrapOutcome {
    pub fn metric_samples(&self, model: ModelKind, metric: &str) -> Vec<f64> {
        self.metrics
            .iter()
            .filter(|m| m.model == model)
            .filter_map(|m| m.report.get(metric))
            .collect()
    }

    pub fn attributions_for(&self, model: ModelKind) -> Vec<AttributionMatrix> {
        self.attributions.iter().filter(|a| a.model_kind == model).cloned().collect()
    }
}

fn run_iteration(
    matrix: &BiomarkerMatrix,
    plans: &[ModelPlan],
    spec: &SplitSpec,
    opts: &BootstrapOptions,
    hoisted: Option<&[ModelConfig]>,
    iteration: usize,
) -> Result<(Vec<IterationMetrics>, Vec<AttributionMatrix>)> {
    let seed = spec.iteration_seed(iteration);
    let (train_idx, test_idx) = stratified_split(&matrix.labels, spec, iteration)?;
    let train_m = matrix.select_rows(&train_idx);
    let test_m = matrix.select_rows(&test_idx);
    let mut metrics = Vec::with_capacity(plans.len());
    let mut attributions = Vec::new();
    for (k, plan) in plans.iter().enumerate() {
        let config = match hoisted {
            Some(configs) => ModelConfig {
                seed,
                ..configs[k].clone()
            },
            None => grid_search_cv(&train_m, plan.kind, &plan.grid, spec.folds, seed)?.best,
        };
        let model = train(&train_m, &config)?;
        let prob = model.predict_proba(test_m.values.view())?;
        let report = compute_metrics(&test_m.labels, &prob, 0.5)?;
        if let Some(a) = &opts.attribution {
            let background = sample_background(&train_m, a.background_size, seed)?;
            attributions.push(explain_rows(
                &model,
                &matrix.feature_names,
                test_m.values.view(),
                background.view(),
                a.estimator,
                seed,
                plan.kind,
                iteration,
            )?);
        }
        metrics.push(IterationMetrics {
            iteration,
            model: plan.kind,
            config,
            report,
        });
    }
    Ok((metrics, attributions))
}

/// Repeated stratified resplitting. Every iteration derives its seed from
/// `spec.base_seed + iteration`, so iterations run concurrently without
/// changing any result.
pub fn bootstrap_run(
    matrix: &BiomarkerMatrix,
    plans: &[ModelPlan],
    spec: &SplitSpec,
    opts: &BootstrapOptions,
) -> Result<BootstrapOutcome> {
    spec.validate()?;
    if plans.is_empty() {
        return Err(Error::Config("no model kinds to evaluate".into()));
    }
    let hoisted = if opts.hoist_grid_search {
        let (train_idx, _) = stratified_split(&matrix.labels, spec, 0).map_err(|e| e.in_stage("bootstrap", Some(0)))?;
        let train_m = matrix.select_rows(&train_idx);
        let configs = plans
            .iter()
            .map(|p| grid_search_cv(&train_m, p.kind, &p.grid, spec.folds, spec.iteration_seed(0)).map(|r| r.best))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("grid_search", None))?;
        Some(configs)
    } else {
        None
    };

    let per_iteration: Vec<_> = (0..spec.bootstrap_iterations)
        .into_par_iter()
        .map(|it| {
            run_iteration(matrix, plans, spec, opts, hoisted.as_deref(), it).map_err(|e| e.in_stage("bootstrap", Some(it)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    let mut attributions = Vec::new();
    for (m, a) in per_iteration {
        metrics.extend(m);
        attributions.extend(a);
    }
    Ok(BootstrapOutcome { metrics, attributions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(samples: &[f64]) -> Option<Spread> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    Some(Spread {
        n: s.len(),
        median: quantile(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    })
}

/// Median and interquartile range of every metric, per model.
pub fn summarize(outcome: &BootstrapOutcome) -> BTreeMap<String, BTreeMap<String, Spread>> {
    let kinds: std::collections::BTreeSet<ModelKind> = outcome.metrics.iter().map(|m| m.model).collect();
    kinds
        .into_iter()
        .map(|k| {
            let per_metric = MetricReport::NAMES
                .iter()
                .filter_map(|name| spread(&outcome.metric_samples(k, name)).map(|s| (name.to_string(), s)))
                .collect();
            (k.as_str().to_string(), per_metric)
        })
        .collect()
}

pub fn write_metrics_csv(outcome: &BootstrapOutcome, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration", "model"];
    header.extend(MetricReport::NAMES);
    header.extend(["tn", "fp", "fn", "tp"]);
    w.write_record(&header)?;
    for m in &outcome.metrics {
        let mut row = vec![m.iteration.to_string(), m.model.as_str().to_string()];
        row.extend(
            MetricReport::NAMES
                .iter()
                .map(|n| m.report.get(n).map(|v| v.to_string()).unwrap_or_default()),
        );
        let [[tn, fp], [fn_, tp]] = m.report.confusion;
        row.extend([tn, fp, fn_, tp].map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_json(outcome: &BootstrapOutcome, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&summarize(outcome))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
