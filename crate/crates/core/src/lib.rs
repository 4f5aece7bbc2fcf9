pub mod cdf;
pub mod cli;
pub mod drift;
pub mod error;
pub mod ingest;
pub mod monitor;
pub mod performance;
pub mod sketch;
pub mod store;

pub use error::{Error, Result};
pub use sketch::QuantileSketch;
pub use cdf::{ApproxCdf, BinnedDensity};
pub use drift::{
    bhattacharyya, drift_evaluate, ks_critical_distance, ks_distance, ks_p_value, DriftMetrics,
};
pub use performance::{
    actual_velocity, coefficient_of_variation, mae, wmape, PerformanceMetrics, VelocityPair,
};
pub use store::{FsStore, KvStore, StoreKey, StoredDocument};
pub use ingest::{assemble_velocity_pairs, generate_synthetic, DatasetHandle, DatasetKind, SynthSpec};
pub use monitor::{
    DeleteSelector, LogRecord, MetricRecord, ModelRegistration, MonitorConfig, MonitorKind,
    Monitoring, ProductionData, ReactionConfig, ReactionSpec, Severity,
};
