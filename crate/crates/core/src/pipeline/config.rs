use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{four_blobs, gaussian_mixture, BlobSpec, MixtureSpec};
use super::infoplane::SyntheticSpec;
use crate::data::{load_dataset, load_hierarchy, AugmentConfig, Dataset, Schema};
use crate::error::{Error, Result};
use crate::objective::CriticConfig;
use crate::optim::OptimizerHyper;
use crate::scalar::Scalar;

/// Where training clusters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClusterSource {
    Attributes { k: usize },
    Hierarchy { level: usize },
    Kmeans { k: usize },
    Labels,
    InstanceId,
    Synthetic { spec: SyntheticSpec },
}

/// Optimizer settings independent of dataset size; the step budget is
/// resolved once the number of batches per epoch is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Share of all steps spent in linear warmup, in `[0, 1)`.
    pub warmup_fraction: f64,
    pub decay_biases: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            peak_lr: 0.1,
            momentum: 0.95,
            weight_decay: 1e-4,
            warmup_fraction: 0.1,
            decay_biases: false,
        }
    }
}

impl OptimizerConfig {
    pub fn resolve(&self, total_steps: usize) -> Result<OptimizerHyper> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction {} outside [0, 1)",
                self.warmup_fraction
            )));
        }
        let hyper = OptimizerHyper {
            peak_lr: self.peak_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            warmup_steps: (self.warmup_fraction * total_steps as f64).floor() as usize,
            total_steps,
            decay_biases: self.decay_biases,
        };
        hyper.validate()?;
        Ok(hyper)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub encoder: Vec<usize>,
    pub projection: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            encoder: vec![64, 128, 128],
            projection: vec![128, 64, 32],
        }
    }
}

/// Linear probe trained on frozen encoder features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.1,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        hierarchy: Option<PathBuf>,
    },
    GaussianMixture(MixtureSpec),
    FourBlobs(BlobSpec),
}

impl DatasetSource {
    pub fn load<F: Scalar>(&self) -> Result<Dataset<F>> {
        match self {
            DatasetSource::Csv { path, hierarchy } => {
                let d = load_dataset(path, Schema::Csv)?;
                match hierarchy {
                    Some(h) => Ok(d.with_hierarchy(load_hierarchy(h)?)),
                    None => Ok(d),
                }
            }
            DatasetSource::GaussianMixture(spec) => gaussian_mixture(spec),
            DatasetSource::FourBlobs(spec) => four_blobs(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub cluster_source: ClusterSource,
    pub critic: CriticConfig,
    pub optimizer: OptimizerConfig,
    pub augment: AugmentConfig,
    /// Only read by the k-means loop: cluster before every epoch, or only
    /// before the first.
    pub recluster_every_epoch: bool,
    pub model: ModelDims,
    pub probe: ProbeConfig,
    /// Share of samples used for pretraining and probe fitting; the rest
    /// is held out for probe accuracy.
    pub train_fraction: f64,
    pub dataset: Option<DatasetSource>,
    /// Clusterings compared by the information-plane sweep; empty means the
    /// built-in sweep.
    pub sweep: Vec<SyntheticSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            seed: 0,
            cluster_source: ClusterSource::Labels,
            critic: CriticConfig::default(),
            optimizer: OptimizerConfig::default(),
            augment: AugmentConfig::default(),
            recluster_every_epoch: true,
            model: ModelDims::default(),
            probe: ProbeConfig::default(),
            train_fraction: 0.7,
            dataset: None,
            sweep: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size {} must be >= 2", self.batch_size)));
        }
        if self.probe.epochs < 1 || self.probe.batch_size < 1 {
            return Err(Error::Config("probe epochs and batch_size must be >= 1".into()));
        }
        if !(self.probe.lr > 0.0 && self.probe.lr.is_finite()) {
            return Err(Error::Config(format!("probe lr {} must be > 0", self.probe.lr)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.model.encoder.len() < 2 || self.model.projection.len() < 2 {
            return Err(Error::Config("encoder and projection need at least one layer each".into()));
        }
        if self.model.encoder.last() != self.model.projection.first() {
            return Err(Error::Config(
                "projection input width must equal the encoder output width".into(),
            ));
        }
        self.critic.validate()?;
        self.augment.validate()?;
        self.optimizer.resolve(self.epochs.max(2))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The configured dataset, or the default Gaussian mixture.
    pub fn load_dataset<F: Scalar>(&self) -> Result<Dataset<F>> {
        match &self.dataset {
            Some(source) => source.load(),
            None => gaussian_mixture(&MixtureSpec::default()),
        }
    }
}
