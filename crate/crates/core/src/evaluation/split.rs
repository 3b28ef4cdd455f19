use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub folds: usize,
    pub bootstrap_iterations: usize,
    pub base_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            folds: 5,
            bootstrap_iterations: 20,
            base_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.bootstrap_iterations == 0 {
            return Err(Error::Config("bootstrap_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        self.base_seed.wrapping_add(iteration as u64)
    }
}

/// Per-class test counts: floors of the proportional share, then the
/// leftover seats of `round(n · f)` go to the largest fractional parts
/// (ties to class 0). Each class keeps at least one row on both sides.
pub fn allocate_test_counts(class_sizes: [usize; 2], test_fraction: f64) -> [usize; 2] {
    let n: usize = class_sizes.iter().sum();
    let target = (n as f64 * test_fraction).round() as usize;
    let ideal = class_sizes.map(|c| c as f64 * test_fraction);
    let mut counts = ideal.map(|v| v.floor() as usize);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())));
    let mut left = target.saturating_sub(counts[0] + counts[1]);
    for &c in &order {
        if left > 0 {
            counts[c] += 1;
            left -= 1;
        }
    }
    for c in 0..2 {
        counts[c] = counts[c].min(class_sizes[c].saturating_sub(1)).max(1);
    }
    counts
}

/// Seeded stratified train/test partition for one bootstrap iteration.
/// Both index lists come back sorted.
pub fn stratified_split(labels: &[u8], spec: &SplitSpec, iteration: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::InvalidData(format!("label {l} is not binary")));
        }
        by_class[l as usize].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Unstratifiable(format!(
                "class {c} has {} rows; at least 2 are needed to split",
                members.len()
            )));
        }
    }
    let counts = allocate_test_counts([by_class[0].len(), by_class[1].len()], spec.test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.iteration_seed(iteration));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..counts[c]]);
        train.extend_from_slice(&members[counts[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
