//! Training loops, linear evaluation, the information-plane sweep and
//! synthetic datasets.

pub mod config;
pub mod eval;
pub mod generate;
pub mod infoplane;
pub mod train;

pub use config::{ClusterSource, DatasetSource, ModelDims, OptimizerConfig, ProbeConfig, TrainConfig};
pub use eval::{linear_evaluate, spearman, LinearProbe};
pub use generate::{balanced_tree, four_blobs, gaussian_mixture, BlobSpec, MixtureSpec};
pub use infoplane::{default_sweep, run_info_plane_experiment, SyntheticSpec};
pub use train::{
    batch_loss_and_grads, build_clusters, initial_model, probe_seed, random_init_accuracy, run_split, train_kmeans_loop,
    train_predetermined, train_with_config, RunReport, TraceEvent, TrainedRun,
};
