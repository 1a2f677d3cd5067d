//! Contrastive pretraining with cluster-conditioned positives.
//!
//! Samples sharing a cluster id form positive pairs. Cluster ids come from
//! labels, binary attributes, a label hierarchy, k-means on the current
//! features, or instance identity. The crate also provides the discrete
//! information measures used to compare clusterings and an exact checker for
//! the objective's upper bounds on small tabular models.

pub mod checkpoint;
pub mod cluster;
pub mod data;
pub mod encoder;
pub mod error;
pub mod info;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod scalar;

pub use cluster::{ClusterAssignment, Provenance};
pub use data::{Dataset, HierarchyGraph};
pub use encoder::{EncoderModel, ModelGrads};
pub use error::{Error, Result};
pub use info::{DiscreteJointModel, InfoPlanePoint};
pub use objective::{CriticConfig, PairBatch};
pub use optim::{OptimizerHyper, OptimizerState};
pub use scalar::Scalar;

pub type Encoder = EncoderModel<f64>;
pub type Encoder32 = EncoderModel<f32>;
pub type Data = Dataset<f64>;
pub type Data32 = Dataset<f32>;
pub type JointModel = DiscreteJointModel<f64>;
