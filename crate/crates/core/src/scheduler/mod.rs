//! Per-upload choice of cluster count and qualities: embed the current target
//! layout, look up similar profiled configurations, and pick the most
//! accurate one that fits the bandwidth and latency budget.

pub mod embed;
pub mod pq;
pub mod select;

pub use embed::{embed, DistributionEmbedding, EmbeddingMetric, CELL_DIM, DEFAULT_GRID, METRIC_VARIANCE_FLOOR};
pub use pq::{IndexMode, PqError, PqIndex, PqParams, PQ_MAGIC, PQ_VERSION};
pub use select::{is_feasible, select_config, BudgetParams, FallbackPolicy, Selection};
