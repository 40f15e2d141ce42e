//! Provision-level confusion counts, accuracy/precision/recall/F-beta,
//! Cohen's kappa and runtime tables.

mod bench;
mod kappa;
mod metrics;

pub use bench::{benchmark_runtime, MachineInfo, Perspective, RuntimeTable, Stage, StageTiming};
pub use kappa::{cohen_kappa, kappa_band};
pub use metrics::{
    compute_metrics, dpa_confusion, f_beta, label_confusion, ClassMetrics, Confusion, MacroMetrics,
    MetricsSummary, ProvisionConfusion, Ratio,
};
