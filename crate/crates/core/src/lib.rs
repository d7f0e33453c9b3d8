//! Contrastive deep nonnegative matrix factorization for community
//! detection on attributed graphs.
//!
//! The adjacency matrix and the node attributes are each factorized by a
//! deep NMF stack. Both low-rank representations are smoothed over the
//! graph and tied together by a debiased contrastive loss; communities are
//! read off as the argmax of the topology representation.

pub mod contrastive;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pretrain;
pub mod runner;
pub mod train;

pub use contrastive::{debiased_negatives, pseudo_labels, NegativeSets, ProjectionHead, PseudoLabels};
pub use datasets::{generate_sbm, load_graph, AttributedGraph, SbmSpec};
pub use error::{Error, Result};
pub use linalg::{DataMatrix, DenseMatrix, SparseMatrix};
pub use metrics::{accuracy, evaluate, nmi, EvalReport};
pub use model::{build_laplacian, FactorStack, HyperParams, ModelState, NegCap};
pub use optim::{fd_check, gradients, sgd_step, total_loss, GradientBundle, OptimizerConfig, ViewTargets};
pub use pretrain::{nmf, pretrain_stack, PretrainConfig};
pub use train::{fine_tune, pretrain, train, Checkpoint, EpochLoss, TrainConfig, TrainOutcome, Views};
pub use runner::{cmd_ablate, cmd_benchmark, cmd_eval, cmd_trace, cmd_train, Ablation, DatasetSource, RunConfig, RunResult};
