use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logistic_loss, require_both_classes, sigmoid, ModelConfig, ModelKind, ModelParameters, TrainedModel, TrainingReport};
use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

pub const MOMENTUM: f64 = 0.9;

/// One hidden rectifier layer feeding a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `hidden × inputs`
    pub hidden_weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub output_weights: Array1<f64>,
    pub output_bias: f64,
}

impl MlpParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        MlpParams {
            hidden_weights: Array2::zeros((hidden, inputs)),
            hidden_bias: Array1::zeros(hidden),
            output_weights: Array1::zeros(hidden),
            output_bias: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let r1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let r2 = (6.0 / (hidden + 1) as f64).sqrt();
        let mut p = Self::zeros(inputs, hidden);
        p.hidden_weights.mapv_inplace(|_| rng.gen_range(-r1..r1));
        p.output_weights.mapv_inplace(|_| rng.gen_range(-r2..r2));
        p
    }

    pub fn n_params(&self) -> usize {
        self.hidden_weights.len() + self.hidden_bias.len() + self.output_weights.len() + 1
    }

    pub fn margin(&self, x: ArrayView1<'_, f64>) -> f64 {
        let pre = self.hidden_weights.dot(&x) + &self.hidden_bias;
        pre.iter().zip(&self.output_weights).map(|(a, w)| a.max(0.0) * w).sum::<f64>() + self.output_bias
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(ArrayView1::from(x)))
    }

    /// Mean logistic loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> (f64, MlpParams) {
        let n = x.nrows() as f64;
        let pre = x.dot(&self.hidden_weights.t()) + &self.hidden_bias;
        let act = pre.mapv(|v| v.max(0.0));
        let out = act.dot(&self.output_weights) + self.output_bias;
        let loss = out.iter().zip(y).map(|(&o, &t)| logistic_loss(o, t)).sum::<f64>() / n;
        let d_out: Array1<f64> = out.iter().zip(y).map(|(&o, &t)| (sigmoid(o) - t) / n).collect();
        let mut d_pre = d_out.view().insert_axis(Axis(1)).dot(&self.output_weights.view().insert_axis(Axis(0)));
        d_pre.zip_mut_with(&pre, |d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let grad = MlpParams {
            hidden_weights: d_pre.t().dot(&x),
            hidden_bias: d_pre.sum_axis(Axis(0)),
            output_weights: act.t().dot(&d_out),
            output_bias: d_out.sum(),
        };
        (loss, grad)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.hidden_weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.output_weights.iter())
            .copied()
            .chain(std::iter::once(self.output_bias))
            .collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> MlpParams {
        let (h, p) = self.hidden_weights.dim();
        let mut it = flat.iter().copied();
        let hidden_weights = Array2::from_shape_vec((h, p), it.by_ref().take(h * p).collect()).expect("shape");
        let hidden_bias = it.by_ref().take(h).collect();
        let output_weights = it.by_ref().take(h).collect();
        MlpParams {
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias: it.next().expect("flat length"),
        }
    }
}

/// Full-batch gradient descent with classical momentum on the mean
/// logistic loss. Fails with [`Error::Divergence`] as soon as the loss is
/// non-finite.
pub fn train_mlp(
    matrix: &BiomarkerMatrix,
    hidden_units: usize,
    epochs: usize,
    step: f64,
    seed: u64,
) -> Result<TrainedModel> {
    if hidden_units == 0 {
        return Err(Error::Config("hidden_units must be positive".into()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    require_both_classes(matrix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::init(matrix.n_features(), hidden_units, &mut rng);
    let y = matrix.labels_f64();
    let x = matrix.values.view();
    let mut velocity = vec![0.0; params.n_params()];
    let mut flat = params.to_flat();

    for epoch in 0..epochs {
        let (loss, grad) = params.loss_and_gradient(x, &y);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        for ((v, w), g) in velocity.iter_mut().zip(flat.iter_mut()).zip(grad.to_flat()) {
            *v = MOMENTUM * *v - step * g;
            *w += *v;
        }
        params = params.from_flat(&flat);
    }
    let (final_loss, _) = params.loss_and_gradient(x, &y);
    if !final_loss.is_finite() {
        return Err(Error::Divergence { epoch: epochs });
    }

    Ok(TrainedModel {
        config: ModelConfig::new(
            ModelKind::ShallowMlp,
            [
                ("hidden_units".to_string(), hidden_units as f64),
                ("epochs".to_string(), epochs as f64),
                ("step".to_string(), step),
            ]
            .into(),
            seed,
        ),
        parameters: ModelParameters::Mlp(params),
        feature_names: matrix.feature_names.clone(),
        training_report: TrainingReport {
            converged: true,
            iterations: epochs,
            final_loss,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn toy() -> (Array2<f64>, Vec<f64>) {
        (
            array![
                [0.5, -1.2, 0.3],
                [-0.7, 0.4, 1.1],
                [1.3, 0.9, -0.6],
                [-1.1, -0.2, 0.8],
                [0.2, 1.7, -1.4]
            ],
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
        )
    }

    #[test]
    fn constant_network() {
        let mut p = MlpParams::zeros(3, 4);
        p.output_bias = 0.7;
        for x in [[1.0, 2.0, 3.0], [-5.0, 0.0, 9.0]] {
            assert_eq!(p.predict_row(&x), sigmoid(0.7));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut p = MlpParams::init(3, 6, &mut rng);
        p.hidden_bias.mapv_inplace(|_| StandardNormal.sample(&mut rng));
        p.output_bias = 0.3;
        let (_, grad) = p.loss_and_gradient(x.view(), &y);
        let analytic = grad.to_flat();
        let base = p.to_flat();
        let eps = 1e-5;
        for k in 0..base.len() {
            let mut up = base.clone();
            up[k] += eps;
            let mut down = base.clone();
            down[k] -= eps;
            let fu = p.from_flat(&up).loss_and_gradient(x.view(), &y).0;
            let fd = p.from_flat(&down).loss_and_gradient(x.view(), &y).0;
            let numeric = (fu - fd) / (2.0 * eps);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-7);
            assert!((analytic[k] - numeric).abs() / denom < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init(4, 3, &mut rng);
        assert_eq!(p.from_flat(&p.to_flat()), p);
        assert_eq!(p.n_params(), 4 * 3 + 3 + 3 + 1);
    }

    #[test]
    fn same_seed_identical() {
        let (x, y) = toy();
        let m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            x,
            y.iter().map(|&v| v as u8).collect(),
        )
        .unwrap();
        let a = train_mlp(&m, 8, 50, 0.05, 3).unwrap();
        let b = train_mlp(&m, 8, 50, 0.05, 3).unwrap();
        assert_eq!(a.parameters, b.parameters);
        let c = train_mlp(&m, 8, 50, 0.05, 4).unwrap();
        assert_ne!(a.parameters, c.parameters);
    }

    #[test]
    fn divergence_reported() {
        let (x, y) = toy();
        let x = x * 1e150;
        let m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            x,
            y.iter().map(|&v| v as u8).collect(),
        )
        .unwrap();
        match train_mlp(&m, 4, 200, 10.0, 0) {
            Err(Error::Divergence { epoch }) => assert!(epoch < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
