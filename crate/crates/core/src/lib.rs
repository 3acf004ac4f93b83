//! Multilayer perceptrons whose weights are calculated from a handful of
//! labeled prototypes instead of learned from random initialization.
//!
//! The nearest-neighbor network compares every ordered pair of prototypes in
//! its first layer using a weight table built from squared Euclidean distance
//! fields, certifies the closest prototype in its second layer, and merges
//! prototypes by class in its third. A four-layer variant votes over the `S`
//! closest prototypes. The same parameters run in threshold mode (exact
//! nearest-neighbor semantics) or sigmoid mode, where they serve as the
//! starting point for stochastic backpropagation.
//!
//! ```
//! use metricnet::{build_nn_network, classify, BitImage, Decision, PrototypeSet};
//!
//! let bar = BitImage::from_fn(5, 5, |c, _| c == 2);
//! let line = BitImage::from_fn(5, 5, |_, r| r == 2);
//! let protos = PrototypeSet::new(vec![bar, line], vec![0, 1], 2)?;
//! let net = build_nn_network(&protos)?;
//! assert_eq!(net.layer_sizes(), vec![2, 2, 2]);
//!
//! let probe = BitImage::from_fn(5, 5, |c, r| c == 2 && r < 2);
//! assert_eq!(classify(&net, &probe)?, Decision::Class(0));
//! # Ok::<(), metricnet::Error>(())
//! ```

pub mod distance;
pub mod error;
pub mod experiment;
pub mod image;
pub mod inference;
pub mod mnist;
pub mod model_io;
pub mod network;
pub mod oracle;
pub mod prototypes;
pub mod trainer;

pub use distance::{build_weight_table, compute_distance_field, DistanceField, WeightTable};
pub use error::{Error, Result};
pub use experiment::{
    emit_reports, run_baseline, run_comparison, speedup_pct, ComparisonRecord, ExperimentData,
    ExperimentPlan, PrototypeSource,
};
pub use image::{binarize, BitImage, GrayImage, DEFAULT_THRESHOLD};
pub use inference::{classify, evaluate, forward, forward_values, Activations, Decision, EvalReport};
pub use mnist::{parse_idx_images, parse_idx_labels, LabeledDataset, MnistPaths};
pub use model_io::{load_model, save_model};
pub use network::{
    build_knn_network, build_nn_network, ActivationMode, Architecture, DenseLayer, Firing,
    LayeredNetwork, NetworkMeta,
};
pub use oracle::{chamfer_scores, knn_oracle, nn_oracle, ChamferScores, Oracle};
pub use prototypes::{select_prototypes, PrototypeSet, SelectionConfig, SelectionStrategy};
pub use trainer::{
    backprop_step, loss, train, train_epoch, train_with, EpochMetrics, InitKind, TrainConfig, TrainHistory,
    UpdatePolicy,
};
