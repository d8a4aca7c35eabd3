//! The federated training core: datasets, differentiable models, local SGD,
//! and dataset-size-weighted aggregation.

pub mod dataset;
pub mod model;
pub mod train;

pub use dataset::{gen_synthetic, load_cifar10_bin, write_dataset_csv, Dataset};
pub use model::{
    evaluate, forward_loss_grad, ModelKind, ModelParams, ModelSpec, Segment, SegmentKind,
};
pub use train::{aggregate_params, local_train, TrainConfig};

use crate::labelstats::ClientId;

/// One communication round's record, as written to the metrics CSV.
///
/// `entropy_bits` is the cohort entropy the selector saw (noised counts when
/// differential privacy is enabled); `entropy_true_bits` is recomputed from
/// the raw counts for evaluation only. The two coincide in non-DP runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub cohort: Vec<ClientId>,
    pub entropy_bits: f64,
    pub entropy_true_bits: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub lr: f64,
}
