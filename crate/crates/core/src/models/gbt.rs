//! Gradient-boosted regression trees on the logistic loss with Newton leaf
//! weights and exact greedy split search.

use serde::{Deserialize, Serialize};

use super::{logistic_loss, require_both_classes, sigmoid, ModelConfig, ModelKind, ModelParameters, TrainedModel, TrainingReport};
use crate::error::{Error, Result};
use crate::ingest::BiomarkerMatrix;

/// L2 penalty on leaf weights.
pub const DEFAULT_REG_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    /// Prior log-odds every prediction starts from.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training loss after each round.
    pub loss_trace: Vec<f64>,
}

impl GbtParams {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

struct Builder<'a> {
    matrix: &'a BiomarkerMatrix,
    grad: Vec<f64>,
    hess: Vec<f64>,
    reg_lambda: f64,
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.reg_lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.reg_lambda)
    }

    /// Best split of `rows` over all features. Candidates are scanned in
    /// feature order then ascending threshold; only a strictly larger gain
    /// displaces the incumbent.
    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let g_total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let parent = self.score(g_total, h_total);
        let mut best: Option<Candidate> = None;
        let mut sorted = rows.to_vec();
        for f in 0..self.matrix.n_features() {
            let col = self.matrix.column(f);
            sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..sorted.len() - 1 {
                let i = sorted[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let (lo, hi) = (col[i], col[sorted[k + 1]]);
                if lo == hi {
                    continue;
                }
                let gr = g_total - gl;
                let hr = h_total - hl;
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        self.nodes.push(TreeNode::Leaf {
            value: self.leaf_weight(g, h),
        });
        if depth >= self.max_depth || rows.len() < 2 {
            return id;
        }
        // zero-gain splits are kept: symmetric patterns such as XOR only
        // become separable one level further down
        let Some(split) = self.best_split(rows).filter(|c| c.gain >= 0.0) else {
            return id;
        };
        let col = self.matrix.column(split.feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| col[i] < split.threshold);
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Boosted trees on the logistic loss. Leaf weights are `−G/(H + λ)` and
/// splits maximize `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]`. There is no
/// row or column subsampling, so the fit does not depend on `seed`; it is
/// recorded for provenance.
pub fn train_gbt(
    matrix: &BiomarkerMatrix,
    rounds: usize,
    max_depth: usize,
    learning_rate: f64,
    reg_lambda: f64,
    seed: u64,
) -> Result<TrainedModel> {
    if rounds < 1 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::Config(format!("learning_rate must lie in (0, 1], got {learning_rate}")));
    }
    if !(reg_lambda >= 0.0) {
        return Err(Error::Config(format!("reg_lambda must be non-negative, got {reg_lambda}")));
    }
    require_both_classes(matrix)?;
    let n = matrix.n_samples();
    let y = matrix.labels_f64();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut margin = vec![base_score; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(rounds);
    let mut loss_trace = Vec::with_capacity(rounds);
    let mut row = vec![0.0; matrix.n_features()];

    for _ in 0..rounds {
        let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        let mut builder = Builder {
            matrix,
            grad: p.iter().zip(&y).map(|(p, y)| p - y).collect(),
            hess: p.iter().map(|p| p * (1.0 - p)).collect(),
            reg_lambda,
            max_depth,
            nodes: Vec::new(),
        };
        builder.grow(&rows, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, m) in margin.iter_mut().enumerate() {
            for (dst, src) in row.iter_mut().zip(matrix.values.row(i)) {
                *dst = *src;
            }
            *m += learning_rate * tree.predict(&row);
        }
        trees.push(tree);
        let loss = margin.iter().zip(&y).map(|(&m, &t)| logistic_loss(m, t)).sum::<f64>() / n as f64;
        loss_trace.push(loss);
    }

    let final_loss = *loss_trace.last().expect("rounds >= 1");
    Ok(TrainedModel {
        config: ModelConfig::new(
            ModelKind::GradientBoostedTrees,
            [
                ("rounds".to_string(), rounds as f64),
                ("max_depth".to_string(), max_depth as f64),
                ("learning_rate".to_string(), learning_rate),
                ("reg_lambda".to_string(), reg_lambda),
            ]
            .into(),
            seed,
        ),
        parameters: ModelParameters::Gbt(GbtParams {
            base_score,
            learning_rate,
            trees,
            loss_trace,
        }),
        feature_names: matrix.feature_names.clone(),
        training_report: TrainingReport {
            converged: true,
            iterations: rounds,
            final_loss,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Predictor;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(m: &TrainedModel) -> &GbtParams {
        match &m.parameters {
            ModelParameters::Gbt(p) => p,
            _ => unreachable!(),
        }
    }

    fn xor() -> BiomarkerMatrix {
        BiomarkerMatrix::new(
            vec!["a".into(), "b".into()],
            array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]],
            vec![0, 1, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn no_split_predicts_prior() {
        let m = BiomarkerMatrix::new(vec!["a".into()], array![[0.0], [1.0], [2.0], [3.0], [4.0]], vec![0, 1, 1, 0, 1]).unwrap();
        let model = train_gbt(&m, 1, 0, 0.3, 1.0, 0).unwrap();
        let prob = model.predict_proba(m.values.view()).unwrap();
        for p in prob {
            assert!((p - 0.6).abs() < 1e-12);
        }
        assert!((params(&model).base_score - (0.6f64 / 0.4).ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(train_gbt(&xor(), 0, 2, 0.3, 1.0, 0).is_err());
    }

    #[test]
    fn xor_learned_at_depth_two() {
        let m = xor();
        let model = train_gbt(&m, 50, 2, 0.3, 1.0, 0).unwrap();
        let prob = model.predict_proba(m.values.view()).unwrap();
        for (p, &y) in prob.iter().zip(&m.labels) {
            assert_eq!((*p >= 0.5) as u8, y, "{prob:?}");
        }
        assert!(params(&model).trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn duplicate_rows_same_prediction() {
        let m = BiomarkerMatrix::new(
            vec!["a".into(), "b".into()],
            array![[0.2, 1.0], [0.2, 1.0], [0.9, -1.0], [0.4, 0.0], [0.7, 0.5]],
            vec![1, 1, 0, 0, 1],
        )
        .unwrap();
        let model = train_gbt(&m, 20, 3, 0.3, 1.0, 0).unwrap();
        let p = model.predict_proba(m.values.view()).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn two_rows_to_purity() {
        let m = BiomarkerMatrix::new(vec!["a".into()], array![[0.0], [1.0]], vec![0, 1]).unwrap();
        let model = train_gbt(&m, 200, 1, 1.0, 1.0, 0).unwrap();
        let p = model.predict_proba(m.values.view()).unwrap();
        assert!(p[0] <= 0.01 && p[1] >= 0.99, "{p:?}");
    }

    #[test]
    fn loss_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 150;
        let mut values = Array2::<f64>::zeros((n, 4));
        let mut labels = Vec::new();
        for i in 0..n {
            for j in 0..4 {
                values[[i, j]] = rng.gen::<f64>() * 2.0 - 1.0;
            }
            let t = 2.0 * values[[i, 0]] - values[[i, 1]] * values[[i, 2]];
            labels.push((rng.gen::<f64>() < sigmoid(3.0 * t)) as u8);
        }
        let m = BiomarkerMatrix::new((0..4).map(|j| format!("f{j}")).collect(), values, labels).unwrap();
        for &(depth, rate) in &[(2, 0.1), (3, 0.3), (4, 1.0)] {
            let model = train_gbt(&m, 60, depth, rate, 1.0, 0).unwrap();
            let trace = &params(&model).loss_trace;
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "depth {depth} rate {rate}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let m = xor();
        let a = train_gbt(&m, 10, 2, 0.3, 1.0, 1).unwrap();
        let b = train_gbt(&m, 10, 2, 0.3, 1.0, 99).unwrap();
        assert_eq!(params(&a), params(&b));
        assert!((0.0..=1.0).contains(&a.predict_row(&[0.5, 0.5])));
    }
}
