//! Random-forest attribute importance: one forest per question over the
//! categorical demographic attributes, scored by mean decrease in impurity.

mod forest;
mod importance;

pub use forest::{fit_forest, gini, Dataset, FeatureSubset, Forest, ForestConfig, ForestError, Node, Tree};
pub use importance::{
    datasets_from_records, datasets_from_respondents, importance_matrix, mdi_importance, ImportanceConfig,
    ImportanceMatrix, ImportanceRow, Importances, SkippedQuestion,
};
