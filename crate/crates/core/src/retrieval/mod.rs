//! Descriptor-based shape retrieval and its evaluation.

mod index;
mod metrics;
mod rank;
mod report;

pub use index::{extract_descriptor, DescriptorIndex, IndexEntry, HRGI_MAGIC, HRGI_VERSION, UNIT_NORM_TOL};
pub use metrics::{
    aggregate, average_precision, evaluate_query, ndcg, precision_recall_f1_at_n, MetricBlock, MetricsReport,
    QueryMetrics,
};
pub use rank::{default_threshold_grid, evaluate_retrieval, retrieve, sweep_threshold, RankedItem, RankedList, RetrievalRun};
pub use report::{parse_metrics_tsv, render_metrics_table, render_metrics_tsv, render_ranked_tsv};
