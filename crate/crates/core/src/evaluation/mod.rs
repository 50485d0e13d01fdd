//! AUC, per-disease model comparison reports, and top baseline features.

mod auc;
mod report;

pub use auc::{auc, auc_masked};
pub use report::{
    evaluate, report_top_features, write_top_features, DiseaseRow, EvalReport, ModelScores,
    TopFeature, IMPROVEMENT, MODEL_COLUMNS,
};
