use serde::{Deserialize, Serialize};

use super::special::f_upper_tail;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
}

impl AnovaResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// One-way ANOVA F test. When both sums of squares vanish the statistic is
/// defined as 0 (p = 1); zero within-group spread with nonzero between-group
/// spread gives an infinite statistic (p = 0).
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidData("ANOVA needs at least two groups".into()));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::InvalidData(format!("group {g} has fewer than two values")));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in ANOVA input".into()));
    }
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;
    let spread = groups
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max((v - grand).abs()));
    let negligible = 1e-28 * spread * spread * n as f64;
    let f_stat = if ssb <= negligible && ssw <= negligible {
        0.0
    } else if ssw <= negligible {
        f64::INFINITY
    } else {
        (ssb / df_between as f64) / (ssw / df_within as f64)
    };
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value: f_upper_tail(f_stat, df_between as f64, df_within as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_case() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert!((r.f_stat - 1.5).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 4));
    }

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        let flat = anova_oneway(&[vec![4.0, 4.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(flat.f_stat, 0.0);
        assert_eq!(flat.p_value, 1.0);
    }

    #[test]
    fn far_shift_is_significant() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0, 2.5], vec![101.0, 102.0, 103.0, 100.5]]).unwrap();
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn small_group_rejected() {
        assert!(anova_oneway(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(a in prop::collection::vec(-50.0f64..50.0, 2..10), b in prop::collection::vec(-50.0f64..50.0, 2..10)) {
            let r = anova_oneway(&[a.clone(), b.clone()]).unwrap();
            let s = anova_oneway(&[a.iter().map(|v| v * 10.0).collect(), b.iter().map(|v| v * 10.0).collect()]).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            if r.f_stat.is_finite() {
                prop_assert!((r.f_stat - s.f_stat).abs() <= 1e-9 * r.f_stat.max(1.0));
            }
        }
    }
}
