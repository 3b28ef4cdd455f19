//! Three binary classifiers behind one probability contract, plus
//! stratified grid-search cross-validation.

mod cv;
mod gbt;
mod logistic;
mod mlp;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

pub use cv::{grid_search_cv, stratified_folds, GridSearchReport, HyperparameterGrid};
pub use gbt::{train_gbt, GbtParams, Tree, TreeNode, DEFAULT_REG_LAMBDA};
pub use logistic::{train_logistic_elastic_net, LogisticParams, MAX_SWEEPS};
pub use mlp::{train_mlp, MlpParams, MOMENTUM};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ElasticNetLogistic,
    GradientBoostedTrees,
    ShallowMlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::ElasticNetLogistic,
        ModelKind::GradientBoostedTrees,
        ModelKind::ShallowMlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ElasticNetLogistic => "elastic_net_logistic",
            ModelKind::GradientBoostedTrees => "gradient_boosted_trees",
            ModelKind::ShallowMlp => "shallow_mlp",
        }
    }

    /// Hyperparameters every config of this kind must carry, with the
    /// values used when none are given.
    pub fn default_hyperparameters(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::ElasticNetLogistic => &[("lambda", 0.01), ("l1_ratio", 0.5)],
            ModelKind::GradientBoostedTrees => &[
                ("rounds", 100.0),
                ("max_depth", 3.0),
                ("learning_rate", 0.1),
                ("reg_lambda", DEFAULT_REG_LAMBDA),
            ],
            ModelKind::ShallowMlp => &[("hidden_units", 16.0), ("step", 0.1), ("epochs", 500.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elastic_net_logistic" | "logistic" | "lr" => Ok(ModelKind::ElasticNetLogistic),
            "gradient_boosted_trees" | "gbt" | "xgb" => Ok(ModelKind::GradientBoostedTrees),
            "shallow_mlp" | "mlp" => Ok(ModelKind::ShallowMlp),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ModelConfig {
    /// Config with defaults filled in for any hyperparameter not supplied.
    pub fn new(kind: ModelKind, overrides: BTreeMap<String, f64>, seed: u64) -> Self {
        let mut hyperparameters = kind.default_hyperparameters();
        hyperparameters.extend(overrides);
        ModelConfig {
            kind,
            hyperparameters,
            seed,
        }
    }

    pub fn defaults(kind: ModelKind, seed: u64) -> Self {
        Self::new(kind, BTreeMap::new(), seed)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.hyperparameters
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("{} needs hyperparameter {name:?}", self.kind)))
    }

    fn get_count(&self, name: &str) -> Result<usize> {
        let v = self.get(name)?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParameters {
    Logistic(LogisticParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
}

/// Anything that maps one feature row to P(case).
pub trait Predictor: Sync {
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict_row(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub parameters: ModelParameters,
    pub feature_names: Vec<String>,
    pub training_report: TrainingReport,
}

impl Predictor for TrainedModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.parameters {
            ModelParameters::Logistic(p) => p.predict_row(x),
            ModelParameters::Gbt(p) => p.predict_row(x),
            ModelParameters::Mlp(p) => p.predict_row(x),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// P(case) for each row; P(control) is the complement.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut row = vec![0.0; x.ncols()];
        Ok(x.outer_iter()
            .map(|r| {
                for (dst, src) in row.iter_mut().zip(r.iter()) {
                    *dst = *src;
                }
                self.predict_row(&row)
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported model schema version {}",
                file.schema_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains the model family named by `config.kind`.
pub fn train(matrix: &BiomarkerMatrix, config: &ModelConfig) -> Result<TrainedModel> {
    match config.kind {
        ModelKind::ElasticNetLogistic => train_logistic_elastic_net(
            matrix,
            config.get("lambda")?,
            config.get("l1_ratio")?,
            config.seed,
        ),
        ModelKind::GradientBoostedTrees => {
            let mut model = train_gbt(
                matrix,
                config.get_count("rounds")?,
                config.get_count("max_depth")?,
                config.get("learning_rate")?,
                config.get("reg_lambda").unwrap_or(DEFAULT_REG_LAMBDA),
                config.seed,
            )?;
            model.config = config.clone();
            Ok(model)
        }
        ModelKind::ShallowMlp => {
            let mut model = train_mlp(
                matrix,
                config.get_count("hidden_units")?,
                config.get_count("epochs")?,
                config.get("step")?,
                config.seed,
            )?;
            model.config = config.clone();
            Ok(model)
        }
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of margin `t` against label `y`, computed stably.
pub(crate) fn logistic_loss(t: f64, y: f64) -> f64 {
    let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    softplus - y * t
}

pub(crate) fn require_both_classes(matrix: &BiomarkerMatrix) -> Result<()> {
    if matrix.has_both_classes() {
        Ok(())
    } else {
        Err(Error::SingleClass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kind_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn width_mismatch() {
        let m = TrainedModel {
            config: ModelConfig::defaults(ModelKind::ElasticNetLogistic, 0),
            parameters: ModelParameters::Logistic(LogisticParams {
                intercept: 0.0,
                coefficients: vec![0.0, 0.0],
            }),
            feature_names: vec!["a".into(), "b".into()],
            training_report: TrainingReport {
                converged: true,
                iterations: 0,
                final_loss: 0.0,
            },
        };
        assert!(m.predict_proba(array![[1.0]].view()).is_err());
        assert_eq!(m.predict_proba(array![[1.0, -3.0], [0.0, 9.0]].view()).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn json_round_trip_all_kinds() {
        let m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into()],
            array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [0.9, 0.2], [0.1, 0.7], [0.3, 0.9]],
            vec![0, 1, 1, 1, 0, 0],
        )
        .unwrap();
        for kind in ModelKind::ALL {
            let mut cfg = ModelConfig::defaults(kind, 5);
            if kind == ModelKind::ShallowMlp {
                cfg.hyperparameters.insert("epochs".into(), 20.0);
            }
            let model = train(&m, &cfg).unwrap();
            let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back.predict_proba(m.values.view()).unwrap(), model.predict_proba(m.values.view()).unwrap());
            assert_eq!(back.config, cfg);
        }
    }

    #[test]
    fn rejects_future_schema() {
        let text = r#"{"schema_version": 99}"#;
        assert!(TrainedModel::from_json(text).is_err());
    }
}
