use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::models::Predictor;

/// Largest feature count the exact estimator will enumerate.
pub const MAX_EXACT_FEATURES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub phi: Vec<f64>,
    pub base: f64,
}

impl ShapleyValues {
    /// `base + Σφ`, which should reproduce the model output.
    pub fn reconstructed(&self) -> f64 {
        self.base + self.phi.iter().sum::<f64>()
    }
}

/// Interventional value function: the mean model output when features in
/// the coalition come from `x` and the rest come from each background row.
struct Game<'a, 'b> {
    model: &'a dyn Predictor,
    x: &'a [f64],
    background: ArrayView2<'b, f64>,
    scratch: Vec<f64>,
}

impl<'a, 'b> Game<'a, 'b> {
    fn new(model: &'a dyn Predictor, x: &'a [f64], background: ArrayView2<'b, f64>) -> Result<Self> {
        if background.nrows() == 0 {
            return Err(Error::InvalidData("background set is empty".into()));
        }
        if background.ncols() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "instance has {} features, background has {}",
                x.len(),
                background.ncols()
            )));
        }
        Ok(Game {
            model,
            x,
            background,
            scratch: vec![0.0; x.len()],
        })
    }

    fn value(&mut self, in_coalition: impl Fn(usize) -> bool) -> f64 {
        let mut total = 0.0;
        for b in self.background.outer_iter() {
            for (j, z) in self.scratch.iter_mut().enumerate() {
                *z = if in_coalition(j) { self.x[j] } else { b[j] };
            }
            total += self.model.predict_row(&self.scratch);
        }
        total / self.background.nrows() as f64
    }

    fn value_mask(&mut self, mask: u64) -> f64 {
        self.value(|j| mask >> j & 1 == 1)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values by enumerating all `2^p` coalitions.
pub fn exact_shapley(model: &dyn Predictor, x: &[f64], background: ArrayView2<'_, f64>) -> Result<ShapleyValues> {
    let p = x.len();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::Config(format!(
            "exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {p}"
        )));
    }
    let mut game = Game::new(model, x, background)?;
    let v: Vec<f64> = (0..1u64 << p).map(|mask| game.value_mask(mask)).collect();
    // weight of a coalition of size s that excludes j: s!(p-s-1)!/p!
    let weight: Vec<f64> = (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect();
    let mut phi = vec![0.0; p];
    for (mask, &vs) in v.iter().enumerate() {
        let size = (mask as u64).count_ones() as usize;
        for (j, f) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *f += weight[size] * (v[mask | 1 << j] - vs);
            }
        }
    }
    Ok(ShapleyValues { phi, base: v[0] })
}

/// Kernel-weighted regression estimate of the Shapley values.
///
/// When the budget covers every proper nonempty coalition they are all
/// enumerated with their kernel weights, which makes the estimate exact.
/// Otherwise coalitions are sampled in complementary pairs with sizes drawn
/// in proportion to the kernel mass of each size. The efficiency constraint
/// is imposed by eliminating the last feature, so the returned values
/// always sum to `f(x) - base`.
pub fn sampled_shapley(
    model: &dyn Predictor,
    x: &[f64],
    background: ArrayView2<'_, f64>,
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapleyValues> {
    let p = x.len();
    if p == 0 {
        return Err(Error::InvalidData("cannot explain a zero-feature instance".into()));
    }
    if n_coalitions < 2 * p {
        return Err(Error::Config(format!(
            "n_coalitions must be at least 2p = {}, got {n_coalitions}",
            2 * p
        )));
    }
    let mut game = Game::new(model, x, background)?;
    let base = game.value(|_| false);
    let fx = game.value(|_| true);
    let delta = fx - base;
    if p == 1 {
        return Ok(ShapleyValues { phi: vec![delta], base });
    }

    let coalitions = coalition_design(p, n_coalitions, seed);
    let m = p - 1;
    let mut ata = Array2::<f64>::zeros((m, m));
    let mut aty = Array1::<f64>::zeros(m);
    let mut distinct = std::collections::BTreeSet::new();
    for (members, w) in &coalitions {
        distinct.insert(members.clone());
        let vs = game.value(|j| members[j]);
        let last = members[p - 1] as u8 as f64;
        let a: Vec<f64> = (0..m).map(|j| members[j] as u8 as f64 - last).collect();
        let y = vs - base - last * delta;
        for r in 0..m {
            if a[r] == 0.0 {
                continue;
            }
            aty[r] += w * a[r] * y;
            for c in 0..m {
                ata[[r, c]] += w * a[r] * a[c];
            }
        }
    }
    let scale = ata.diag().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let l = match cholesky(&ata, 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        Some(l) if distinct.len() > 1 => l,
        _ => {
            return Err(Error::DegenerateDesign(format!(
                "{} distinct coalitions do not identify {p} attributions",
                distinct.len()
            )))
        }
    };
    let head = cholesky_solve(&l, &aty);
    let mut phi = head.to_vec();
    phi.push(delta - head.sum());
    Ok(ShapleyValues { phi, base })
}

/// Coalitions with their regression weights.
fn coalition_design(p: usize, budget: usize, seed: u64) -> Vec<(Vec<bool>, f64)> {
    let kernel = |s: usize| (p - 1) as f64 / (binomial(p, s) * s as f64 * (p - s) as f64);
    let full = p < 63 && (budget as u128) >= (1u128 << p) - 2;
    if full {
        return (1..(1u64 << p) - 1)
            .map(|mask| {
                let members: Vec<bool> = (0..p).map(|j| mask >> j & 1 == 1).collect();
                (members, kernel(mask.count_ones() as usize))
            })
            .collect();
    }
    // total kernel mass per size is proportional to 1 / (s (p - s))
    let size_mass: Vec<f64> = (1..p).map(|s| 1.0 / (s as f64 * (p - s) as f64)).collect();
    let total: f64 = size_mass.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(budget + 1);
    while out.len() < budget {
        let mut u = rng.gen::<f64>() * total;
        let mut size = p - 1;
        for (k, m) in size_mass.iter().enumerate() {
            if u < *m {
                size = k + 1;
                break;
            }
            u -= m;
        }
        let mut members = vec![false; p];
        for j in sample(&mut rng, p, size) {
            members[j] = true;
        }
        let complement: Vec<bool> = members.iter().map(|b| !b).collect();
        out.push((members, 1.0));
        out.push((complement, 1.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn linear(w: Vec<f64>, b: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |x: &[f64]| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    fn background() -> Array2<f64> {
        array![[0.0, 1.0, -1.0, 2.0], [1.0, 0.5, 0.0, -1.0], [2.0, -0.5, 3.0, 0.0]]
    }

    #[test]
    fn linear_closed_form() {
        let w = vec![1.5, -2.0, 0.25, 0.0];
        let f = linear(w.clone(), 0.3);
        let bg = background();
        let x = [0.7, -1.1, 2.0, 5.0];
        let s = exact_shapley(&f, &x, bg.view()).unwrap();
        let mu = bg.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..4 {
            assert!((s.phi[j] - w[j] * (x[j] - mu[j])).abs() < 1e-10);
        }
        assert_eq!(s.phi[3], 0.0);
        assert!((s.reconstructed() - f(&x)).abs() < 1e-10);
    }

    #[test]
    fn interaction_split_evenly() {
        let f = |x: &[f64]| x[0] * x[1];
        let bg = array![[0.0, 0.0]];
        let s = exact_shapley(&f, &[1.0, 1.0], bg.view()).unwrap();
        assert_eq!(s.phi, vec![0.5, 0.5]);
    }

    #[test]
    fn full_budget_matches_exact() {
        let f = |x: &[f64]| (x[0] * x[1]).tanh() + x[2].max(0.0) * x[3] - 0.5 * x[4] + x[0] * x[2] * x[4];
        let bg = array![
            [0.1, -0.4, 1.0, 0.3, -1.2],
            [1.1, 0.2, -0.7, 0.9, 0.4],
            [-0.6, 1.4, 0.3, -0.2, 0.8]
        ];
        let x = [0.9, -1.3, 0.6, 1.7, -0.2];
        let exact = exact_shapley(&f, &x, bg.view()).unwrap();
        let kernel = sampled_shapley(&f, &x, bg.view(), 30, 0).unwrap();
        for j in 0..5 {
            assert!((exact.phi[j] - kernel.phi[j]).abs() < 1e-9, "{j}");
        }
        assert_eq!(kernel.base, exact.base);
    }

    #[test]
    fn sampled_is_seeded_and_efficient() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v.sin()).sum::<f64>();
        let bg = Array2::from_shape_fn((4, 12), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let x: Vec<f64> = (0..12).map(|j| j as f64 * 0.3 - 1.0).collect();
        let a = sampled_shapley(&f, &x, bg.view(), 200, 5).unwrap();
        let b = sampled_shapley(&f, &x, bg.view(), 200, 5).unwrap();
        assert_eq!(a, b);
        let fx = f(&x);
        assert!((a.reconstructed() - fx).abs() <= 1e-12 * fx.abs().max(1.0));
        // additive model: the kernel fit is exact for any design
        let exact = exact_shapley(&f, &x, bg.view()).unwrap();
        for j in 0..12 {
            assert!((a.phi[j] - exact.phi[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn budget_and_background_checks() {
        let f = |x: &[f64]| x[0];
        let bg = array![[0.0, 0.0, 0.0]];
        assert!(matches!(sampled_shapley(&f, &[1.0, 2.0, 3.0], bg.view(), 5, 0), Err(Error::Config(_))));
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(exact_shapley(&f, &[1.0, 2.0, 3.0], empty.view()).is_err());
        let wide = Array2::<f64>::zeros((1, 21));
        assert!(matches!(exact_shapley(&f, &[0.0; 21], wide.view()), Err(Error::Config(_))));
    }

    #[test]
    fn single_feature() {
        let f = |x: &[f64]| 2.0 * x[0];
        let bg = array![[1.0]];
        let s = sampled_shapley(&f, &[3.0], bg.view(), 2, 0).unwrap();
        assert_eq!((s.phi[0], s.base), (4.0, 2.0));
    }

    proptest! {
        #[test]
        fn symmetry_and_dummy(a in -2.0f64..2.0, c in -2.0f64..2.0, x0 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
            // features 0 and 1 are interchangeable, feature 3 is ignored
            let f = move |x: &[f64]| a * x[0] * x[1] + (x[0] + x[1]).sin() + c * x[2];
            let bg = array![[0.5, 0.5, 1.0, -4.0], [-1.0, -1.0, 0.0, 9.0]];
            let x = [x0, x0, x2, 100.0];
            let s = exact_shapley(&f, &x, bg.view()).unwrap();
            prop_assert!((s.phi[0] - s.phi[1]).abs() < 1e-10);
            prop_assert_eq!(s.phi[3], 0.0);
            prop_assert!((s.reconstructed() - f(&x)).abs() < 1e-10);
            let k = sampled_shapley(&f, &x, bg.view(), 14, 1).unwrap();
            prop_assert!(k.phi[3].abs() <= 1e-6);
        }
    }
}
