//! Classification metrics, protocol execution and ablation variants.

mod metrics;
mod protocol;
mod report;

pub use metrics::{binary_auroc, macro_auroc, metrics_from_confusion, ConfusionMatrix, Metrics};
pub use protocol::{
    ablation_matrix, apply_variant, evaluate_pair, mean_std, run_pair, run_protocol, FoldReport, MeanStd,
    PairOutcome, PredictionRow, RunReport, Variant,
};
pub use report::{format_table, write_predictions_csv, write_reports_json, write_summary_csv};
