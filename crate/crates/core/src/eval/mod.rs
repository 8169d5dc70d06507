//! Offline evaluation: metrics, baselines, popularity tiers, weak-signal
//! analysis and the pair-similarity probe.

pub mod evaluate;
pub mod metrics;
pub mod probe;
pub mod recommenders;
pub mod report;
pub mod tiers;
pub mod weak;

pub use evaluate::{evaluate, evaluate_lists, recommend_all, EvalContext};
pub use metrics::{coverage, hit_rate_at_k, mrr, MetricsReport, Recommendations, Relevant, Segment, MAX_LIST};
pub use probe::{pair_similarity_probe, Pairing, ProbeSummary};
pub use recommenders::{content_knn, hgnn_knn, FixedLists, Popularity, Recommender, VectorRecommender};
pub use report::{metrics_csv, to_json, write_json, write_metrics_csv};
pub use tiers::{popularity_tiers, tiered_metrics, TierMetrics, TierReport};
pub use weak::{cooccurrence_matrix, fit_logistic, weak_signal_analysis, LogisticFit, WeakSignalReport};
