use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::special::normal_two_sided_p;
use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;
use crate::linalg::{cholesky, cholesky_solve, spd_inverse};

const NEWTON_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;
/// Linear predictors beyond this magnitude mean fitted probabilities have
/// saturated, which only happens when the classes are separable.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTest {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    /// `true` for adjustment covariates, `false` for features under test.
    pub covariate: bool,
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per regressor.
    pub beta: Array1<f64>,
    pub covariance: Array2<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(design: &Array2<f64>, y: &[f64], beta: &Array1<f64>) -> f64 {
    let eta = design.dot(beta);
    eta.iter()
        .zip(y)
        .map(|(&e, &t)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            t * e - softplus
        })
        .sum()
}

/// Unpenalized logistic regression by damped Newton iterations. `design`
/// must already contain the intercept column.
pub fn fit_logistic(design: &Array2<f64>, y: &[f64]) -> Result<LogisticFit> {
    let (n, k) = design.dim();
    let mut beta = Array1::<f64>::zeros(k);
    let mut ll = log_likelihood(design, y, &beta);
    for iter in 1..=MAX_NEWTON {
        let eta = design.dot(&beta);
        if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
            return Err(Error::CompleteSeparation);
        }
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = Array1::<f64>::zeros(k);
        let mut info = Array2::<f64>::zeros((k, k));
        for i in 0..n {
            let row = design.row(i);
            let r = y[i] - p[i];
            let w = p[i] * (1.0 - p[i]);
            for a in 0..k {
                grad[a] += r * row[a];
                for b in 0..=a {
                    info[[a, b]] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[[b, a]] = info[[a, b]];
            }
        }
        let l = cholesky(&info, 1e-13).ok_or(Error::CompleteSeparation)?;
        let step = cholesky_solve(&l, &grad);
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = log_likelihood(design, y, &next);
        while next_ll < ll - 1e-12 * ll.abs() && t > 1e-6 {
            t *= 0.5;
            next = &beta + &(&step * t);
            next_ll = log_likelihood(design, y, &next);
        }
        let change = step.iter().fold(0.0_f64, |m, v| m.max((v * t).abs()));
        beta = next;
        ll = next_ll;
        if change < NEWTON_TOL {
            let eta = design.dot(&beta);
            let mut info = Array2::<f64>::zeros((k, k));
            for i in 0..n {
                let pi = sigmoid(eta[i]);
                let w = pi * (1.0 - pi);
                let row = design.row(i);
                for a in 0..k {
                    for b in 0..k {
                        info[[a, b]] += w * row[a] * row[b];
                    }
                }
            }
            let covariance = spd_inverse(&info, 1e-13).ok_or(Error::CompleteSeparation)?;
            return Ok(LogisticFit {
                beta,
                covariance,
                iterations: iter,
                log_likelihood: ll,
            });
        }
    }
    Err(Error::CompleteSeparation)
}

/// Wald tests for each coefficient of a logistic model regressing the label
/// on `features` plus `covariates` (with an intercept). Two-sided normal
/// p-values; standard errors from the inverse observed information.
pub fn logistic_coefficient_pvalues(
    matrix: &BiomarkerMatrix,
    features: &[String],
    covariates: &[String],
) -> Result<Vec<CoefficientTest>> {
    if !matrix.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let names: Vec<(&String, bool)> = features
        .iter()
        .map(|f| (f, false))
        .chain(covariates.iter().map(|c| (c, true)))
        .collect();
    let idx: Vec<usize> = names
        .iter()
        .map(|(n, _)| {
            matrix
                .feature_index(n)
                .ok_or_else(|| Error::InvalidData(format!("unknown feature {n:?}")))
        })
        .collect::<Result<_>>()?;
    let n = matrix.n_samples();
    let mut design = Array2::<f64>::ones((n, idx.len() + 1));
    for (c, &j) in idx.iter().enumerate() {
        design.column_mut(c + 1).assign(&matrix.column(j));
    }
    let fit = fit_logistic(&design, &matrix.labels_f64())?;
    Ok(names
        .iter()
        .enumerate()
        .map(|(c, (name, covariate))| {
            let b = fit.beta[c + 1];
            let se = fit.covariance[[c + 1, c + 1]].sqrt();
            let z = b / se;
            CoefficientTest {
                name: (*name).clone(),
                coefficient: b,
                std_error: se,
                z,
                p_value: normal_two_sided_p(z),
                covariate: *covariate,
            }
        })
        .collect())
}
