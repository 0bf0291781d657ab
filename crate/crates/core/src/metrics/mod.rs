//! Evaluation: purity and PNMI of discrete units, a K-means baseline, ABX
//! discrimination, linear speaker probes and small statistics helpers.

mod abx;
mod kmeans;
mod probe;
mod purity;
mod stats;

pub use abx::{abx_error, build_abx_task, dtw_angular, phone_tokens, AbxResult, AbxTask, AbxTriple, Regime, Token};
pub use kmeans::{kmeans, KMeansResult, KMEANS_MAX_ITERS, KMEANS_REL_TOL};
pub use probe::{speaker_probe, speaker_probe_with, ProbeConfig};
pub use purity::{code_phone_heatmap, contingency, purity_metrics, ContingencyTable, Heatmap, PurityMetrics};
pub use stats::{spearman, ttest_two_sample};
