use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{logistic_loss, require_both_classes, sigmoid, ModelConfig, ModelKind, ModelParameters, TrainedModel, TrainingReport};
use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

/// Total coordinate sweeps allowed across all outer iterations.
pub const MAX_SWEEPS: usize = 10_000;
const COEF_TOL: f64 = 1e-6;
const INNER_TOL: f64 = 1e-8;
const MIN_WEIGHT: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticParams {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

struct Problem<'a> {
    x: &'a Array2<f64>,
    y: Vec<f64>,
    lambda: f64,
    l1_ratio: f64,
}

impl Problem<'_> {
    fn objective(&self, b0: f64, w: &Array1<f64>) -> f64 {
        let eta = self.x.dot(w);
        let n = self.y.len() as f64;
        let loss: f64 = eta.iter().zip(&self.y).map(|(e, y)| logistic_loss(e + b0, *y)).sum::<f64>() / n;
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        let l2: f64 = w.iter().map(|v| v * v).sum();
        loss + self.lambda * (self.l1_ratio * l1 + 0.5 * (1.0 - self.l1_ratio) * l2)
    }
}

/// Elastic-net penalized logistic regression.
///
/// Minimizes `mean logistic loss + λ (α ‖w‖₁ + (1 − α)/2 ‖w‖₂²)` with an
/// unpenalized intercept. Each outer step forms the weighted least-squares
/// approximation at the current fit and solves it by cyclic coordinate
/// descent with soft-thresholding; the resulting direction is accepted
/// with step halving until the true objective does not increase.
pub fn train_logistic_elastic_net(
    matrix: &BiomarkerMatrix,
    lambda: f64,
    l1_ratio: f64,
    seed: u64,
) -> Result<TrainedModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::Config(format!("l1_ratio must lie in [0, 1], got {l1_ratio}")));
    }
    require_both_classes(matrix)?;
    let x = &matrix.values;
    let (n, p) = x.dim();
    let nf = n as f64;
    let prob = Problem {
        x,
        y: matrix.labels_f64(),
        lambda,
        l1_ratio,
    };
    let l1 = lambda * l1_ratio;
    let l2 = lambda * (1.0 - l1_ratio);

    let prior = prob.y.iter().sum::<f64>() / nf;
    let mut b0 = (prior / (1.0 - prior)).ln();
    let mut w = Array1::<f64>::zeros(p);
    let mut f_old = prob.objective(b0, &w);
    let mut sweeps = 0usize;
    let mut outer = 0usize;
    let mut converged = false;

    while sweeps < MAX_SWEEPS {
        outer += 1;
        let eta: Vec<f64> = x.dot(&w).iter().map(|e| e + b0).collect();
        let pr: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let wt: Vec<f64> = pr.iter().map(|&q| (q * (1.0 - q)).max(MIN_WEIGHT)).collect();
        // residual of the working response against the current quadratic fit
        let mut r: Vec<f64> = (0..n).map(|i| (prob.y[i] - pr[i]) / wt[i]).collect();
        let wsum: f64 = wt.iter().sum();
        let curv: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| wt[i] * x[[i, j]] * x[[i, j]]).sum::<f64>() / nf)
            .collect();

        let mut nb0 = b0;
        let mut nw = w.clone();
        loop {
            sweeps += 1;
            let mut max_delta = 0.0_f64;
            let d0 = (0..n).map(|i| wt[i] * r[i]).sum::<f64>() / wsum;
            if d0 != 0.0 {
                nb0 += d0;
                for ri in r.iter_mut() {
                    *ri -= d0;
                }
                max_delta = max_delta.max(d0.abs());
            }
            for j in 0..p {
                if curv[j] == 0.0 {
                    continue;
                }
                let rho = (0..n).map(|i| wt[i] * x[[i, j]] * r[i]).sum::<f64>() / nf + curv[j] * nw[j];
                let new = soft_threshold(rho, l1) / (curv[j] + l2);
                let d = new - nw[j];
                if d != 0.0 {
                    for i in 0..n {
                        r[i] -= d * x[[i, j]];
                    }
                    nw[j] = new;
                    max_delta = max_delta.max(d.abs());
                }
            }
            if max_delta < INNER_TOL || sweeps >= MAX_SWEEPS {
                break;
            }
        }

        let dir_b0 = nb0 - b0;
        let dir_w = &nw - &w;
        let mut t = 1.0;
        let mut f_new = prob.objective(b0 + dir_b0, &(&w + &dir_w));
        while f_new > f_old + 1e-15 * f_old.abs() && t > 1e-10 {
            t *= 0.5;
            f_new = prob.objective(b0 + t * dir_b0, &(&w + &(&dir_w * t)));
        }
        if f_new > f_old + 1e-15 * f_old.abs() {
            converged = true;
            break;
        }
        let step = dir_w.iter().fold((t * dir_b0).abs(), |m, v| m.max((t * v).abs()));
        b0 += t * dir_b0;
        w = &w + &(&dir_w * t);
        f_old = f_new;
        if step < COEF_TOL {
            converged = true;
            break;
        }
    }
    if !f_old.is_finite() {
        return Err(Error::Numeric("elastic-net objective became non-finite".into()));
    }

    Ok(TrainedModel {
        config: ModelConfig::new(
            ModelKind::ElasticNetLogistic,
            [("lambda".to_string(), lambda), ("l1_ratio".to_string(), l1_ratio)].into(),
            seed,
        ),
        parameters: ModelParameters::Logistic(LogisticParams {
            intercept: b0,
            coefficients: w.to_vec(),
        }),
        feature_names: matrix.feature_names.clone(),
        training_report: TrainingReport {
            converged,
            iterations: outer,
            final_loss: f_old,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn params(m: &TrainedModel) -> &LogisticParams {
        match &m.parameters {
            ModelParameters::Logistic(p) => p,
            _ => unreachable!(),
        }
    }

    fn noisy_cohort(n: usize, seed: u64) -> BiomarkerMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, 3));
        let mut labels = Vec::new();
        for i in 0..n {
            for j in 0..3 {
                values[[i, j]] = StandardNormal.sample(&mut rng);
            }
            let t = 1.5 * values[[i, 0]] - 1.0 * values[[i, 1]];
            labels.push((rng.gen::<f64>() < sigmoid(t)) as u8);
        }
        BiomarkerMatrix::new(vec!["a".into(), "b".into(), "noise".into()], values, labels).unwrap()
    }

    /// Gradient of the mean logistic loss at the fitted parameters.
    fn loss_gradient(m: &BiomarkerMatrix, p: &LogisticParams) -> (f64, Vec<f64>) {
        let n = m.n_samples() as f64;
        let mut g0 = 0.0;
        let mut g = vec![0.0; m.n_features()];
        for (i, row) in m.values.outer_iter().enumerate() {
            let r = p.predict_row(row.as_slice().unwrap()) - m.labels[i] as f64;
            g0 += r / n;
            for j in 0..g.len() {
                g[j] += r * row[j] / n;
            }
        }
        (g0, g)
    }

    #[test]
    fn huge_lambda_gives_prior() {
        let m = noisy_cohort(200, 1);
        let model = train_logistic_elastic_net(&m, 1e6, 0.5, 0).unwrap();
        let p = params(&model);
        assert!(p.coefficients.iter().all(|&c| c == 0.0));
        let prior = m.labels.iter().map(|&l| l as f64).sum::<f64>() / 200.0;
        assert!((p.intercept - (prior / (1.0 - prior)).ln()).abs() < 1e-9);
    }

    #[test]
    fn separable_without_penalty() {
        let values = Array2::from_shape_vec(
            (8, 2),
            vec![-2.0, 1.0, -1.5, -0.5, -1.0, 2.0, -0.3, 0.1, 0.4, -1.0, 1.0, 0.3, 1.2, -2.0, 2.5, 1.0],
        )
        .unwrap();
        let m = BiomarkerMatrix::new(vec!["a".into(), "b".into()], values, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let model = train_logistic_elastic_net(&m, 0.0, 0.5, 0).unwrap();
        let probs = model.predict_proba(m.values.view()).unwrap();
        for (p, &y) in probs.iter().zip(&m.labels) {
            assert_eq!((*p >= 0.5) as u8, y);
        }
    }

    #[test]
    fn lasso_kkt() {
        let m = noisy_cohort(400, 7);
        let lambda = 0.05;
        let model = train_logistic_elastic_net(&m, lambda, 1.0, 0).unwrap();
        assert!(model.training_report.converged, "{:?}", model.training_report);
        let p = params(&model);
        let (g0, g) = loss_gradient(&m, p);
        assert!(g0.abs() < 1e-5);
        for (j, &c) in p.coefficients.iter().enumerate() {
            if c == 0.0 {
                assert!(g[j].abs() <= lambda + 1e-4);
            } else {
                assert!((g[j] + lambda * c.signum()).abs() < 1e-4, "coordinate {j}");
            }
        }
    }

    #[test]
    fn lasso_entry_point() {
        // the first coefficient leaves zero at the largest null-model gradient
        let m = noisy_cohort(300, 11);
        let n = m.n_samples() as f64;
        let ybar = m.labels_f64().iter().sum::<f64>() / n;
        let grads: Vec<f64> = (0..3)
            .map(|j| m.column(j).iter().zip(&m.labels).map(|(x, &y)| x * (y as f64 - ybar)).sum::<f64>().abs() / n)
            .collect();
        let lmax = grads.iter().cloned().fold(0.0, f64::max);
        let above = train_logistic_elastic_net(&m, lmax * 1.01, 1.0, 0).unwrap();
        assert!(params(&above).coefficients.iter().all(|&c| c == 0.0));
        let below = train_logistic_elastic_net(&m, lmax * 0.97, 1.0, 0).unwrap();
        let nonzero: Vec<usize> = (0..3).filter(|&j| params(&below).coefficients[j] != 0.0).collect();
        let top = (0..3).max_by(|&a, &b| grads[a].total_cmp(&grads[b])).unwrap();
        assert_eq!(nonzero, vec![top]);
    }

    #[test]
    fn elastic_net_stationarity() {
        let m = noisy_cohort(300, 3);
        let (lambda, alpha) = (0.02, 0.3);
        let model = train_logistic_elastic_net(&m, lambda, alpha, 0).unwrap();
        let p = params(&model);
        let (_, g) = loss_gradient(&m, p);
        for (j, &c) in p.coefficients.iter().enumerate() {
            if c == 0.0 {
                assert!(g[j].abs() <= lambda * alpha + 1e-4);
            } else {
                let kkt = g[j] + lambda * alpha * c.signum() + lambda * (1.0 - alpha) * c;
                assert!(kkt.abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let m = BiomarkerMatrix::new(vec!["a".into()], Array2::zeros((3, 1)), vec![1, 1, 1]).unwrap();
        assert!(matches!(train_logistic_elastic_net(&m, 0.1, 0.5, 0), Err(Error::SingleClass)));
    }

    #[test]
    fn zero_model_is_half() {
        let p = LogisticParams {
            intercept: 0.0,
            coefficients: vec![0.0; 3],
        };
        assert_eq!(p.predict_row(&[4.0, -2.0, 1.0]), 0.5);
    }
}
