//! Correlation, one-way ANOVA and logistic Wald tests.

mod anova;
mod correlation;
pub mod special;
mod wald;

pub use anova::{anova_oneway, AnovaResult};
pub use correlation::{correlation_matrix, pearson, CorrelationMatrix};
pub use wald::{fit_logistic, logistic_coefficient_pvalues, CoefficientTest, LogisticFit};
