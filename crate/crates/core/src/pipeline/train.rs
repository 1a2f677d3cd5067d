use ndarray::{concatenate, s, Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ClusterSource, TrainConfig};
use super::eval::linear_evaluate;
use crate::cluster::{
    clusters_from_attributes, clusters_from_hierarchy, clusters_from_labels, clusters_instance_id, kmeans,
    prune_to_tree, ClusterAssignment, KMeansParams, Provenance,
};
use crate::data::{augment_pair, split_indices, Dataset};
use crate::encoder::{backward, encode, forward, EncoderModel, ModelGrads};
use crate::error::{Error, Result};
use crate::info::InfoPlanePoint;
use crate::objective::{cl_infonce_grad, cl_infonce_loss, critic_backward, critic_matrix, sample_pair_batch, CriticConfig};
use crate::optim::{sgd_step, OptimizerHyper, OptimizerState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
    /// Clusters used in every epoch against the training labels; empty for
    /// unlabeled data.
    pub info_plane_curve: Vec<InfoPlanePoint>,
    /// `None` for unlabeled data.
    pub final_linear_accuracy: Option<f64>,
    pub checkpoint_path: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema {
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", e + 1));
        }
        out
    }
}

/// Ordered record of what a training run did, for checking loop ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Clustered {
        /// Epoch (0-based) whose batches are drawn from this assignment.
        for_epoch: usize,
        /// Parameter generation of the encoder that produced the embedding.
        model_generation: u64,
        assignment: Vec<usize>,
        inertia_history: Vec<f64>,
    },
    EpochStart {
        epoch: usize,
        model_generation: u64,
    },
    EpochEnd {
        epoch: usize,
        model_generation: u64,
        mean_loss: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrainedRun<F> {
    pub report: RunReport,
    pub model: EncoderModel<F>,
    pub step_count: usize,
    pub hyper: OptimizerHyper,
    pub trace: Vec<TraceEvent>,
}

/// Independent stream `k` of a run seed.
pub(crate) fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_PROBE: u64 = 4;
const STREAM_KMEANS: u64 = 5;

/// Seed of the linear probe fitted at the end of a run.
pub fn probe_seed(run_seed: u64) -> u64 {
    stream(run_seed, STREAM_PROBE).next_u64()
}

/// Loss on one batch of paired views and its gradient for every parameter.
pub fn batch_loss_and_grads<F: Scalar>(
    model: &EncoderModel<F>,
    x: &Array2<F>,
    y: &Array2<F>,
    critic: &CriticConfig,
) -> Result<(F, ModelGrads<F>)> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("views {:?} and {:?}", x.dim(), y.dim())));
    }
    let n = x.nrows();
    let stacked = concatenate(Axis(0), &[x.view(), y.view()]).expect("equal widths");
    let out = forward(model, &stacked)?;
    let px = out.projection_output.slice(s![..n, ..]).to_owned();
    let py = out.projection_output.slice(s![n.., ..]).to_owned();
    let scores = critic_matrix(&px, &py, critic)?;
    let loss = cl_infonce_loss(&scores)?;
    let g = cl_infonce_grad(&scores)?;
    let (gx, gy) = critic_backward(&px, &py, &g, critic)?;
    let gu = concatenate(Axis(0), &[gx.view(), gy.view()]).expect("equal widths");
    Ok((loss, backward(model, &out.cache, &gu)?))
}

/// Train/eval split of a run, as index lists into the full dataset.
pub fn run_split(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices(n, cfg.train_fraction, cfg.seed)
}

/// The encoder a run starts from.
pub fn initial_model<F: Scalar>(cfg: &TrainConfig, input_dim: usize) -> Result<EncoderModel<F>> {
    if cfg.model.encoder[0] != input_dim {
        return Err(Error::Config(format!(
            "model expects {} input features, dataset has {input_dim}",
            cfg.model.encoder[0]
        )));
    }
    let seed = stream(cfg.seed, STREAM_INIT).next_u64();
    EncoderModel::init(&cfg.model.encoder, &cfg.model.projection, seed)
}

/// Probe accuracy of the untrained encoder on the run's split.
pub fn random_init_accuracy<F: Scalar>(d: &Dataset<F>, cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    let (tr, ev) = run_split(d.num_samples(), cfg)?;
    let model = initial_model::<F>(cfg, d.feature_dim())?;
    linear_evaluate(&model, &d.subset(&tr), &d.subset(&ev), &cfg.probe, probe_seed(cfg.seed))
}

struct Trainer<F> {
    cfg: TrainConfig,
    train: Dataset<F>,
    eval: Dataset<F>,
    model: EncoderModel<F>,
    state: OptimizerState<F>,
    steps_per_epoch: usize,
    batch_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    report: RunReport,
    trace: Vec<TraceEvent>,
}

impl<F: Scalar> Trainer<F> {
    fn new(d: &Dataset<F>, cfg: &TrainConfig) -> Result<(Self, Vec<usize>)> {
        cfg.validate()?;
        let (tr, ev) = run_split(d.num_samples(), cfg)?;
        let train = d.subset(&tr);
        let eval = d.subset(&ev);
        let model = initial_model(cfg, d.feature_dim())?;
        let steps_per_epoch = (train.num_samples() / cfg.batch_size).max(1);
        let hyper = cfg.optimizer.resolve(steps_per_epoch * cfg.epochs)?;
        let state = OptimizerState::new(&model, hyper)?;
        let trainer = Self {
            cfg: cfg.clone(),
            train,
            eval,
            model,
            state,
            steps_per_epoch,
            batch_rng: stream(cfg.seed, STREAM_BATCH),
            augment_rng: stream(cfg.seed ^ cfg.augment.seed, STREAM_AUGMENT),
            report: RunReport {
                loss_curve: Vec::new(),
                info_plane_curve: Vec::new(),
                final_linear_accuracy: None,
                checkpoint_path: None,
            },
            trace: Vec::new(),
        };
        Ok((trainer, tr))
    }

    fn epoch(&mut self, epoch: usize, clusters: &ClusterAssignment) -> Result<()> {
        self.trace.push(TraceEvent::EpochStart {
            epoch,
            model_generation: self.model.generation(),
        });
        if let Some(labels) = self.train.labels() {
            let point = InfoPlanePoint::from_assignments(
                clusters.provenance().to_string(),
                clusters.assignment(),
                labels,
            )?;
            self.report.info_plane_curve.push(point);
        }
        let features = self.train.features();
        let mut total = 0.0;
        for step in 0..self.steps_per_epoch {
            let at = |e: Error| e.context(format!("epoch {}, step {}", epoch + 1, step + 1));
            let batch = sample_pair_batch(clusters, self.cfg.batch_size, &mut self.batch_rng).map_err(at)?;
            let xs = features.select(Axis(0), &batch.x_indices);
            let ys = features.select(Axis(0), &batch.y_indices);
            let (vx, vy) = augment_pair(&xs, &ys, &self.cfg.augment, &mut self.augment_rng)?;
            let (loss, grads) = batch_loss_and_grads(&self.model, &vx, &vy, &self.cfg.critic).map_err(at)?;
            if !loss.is_finite() {
                return Err(at(Error::Numeric("loss diverged".into())));
            }
            sgd_step(&mut self.model, &grads, &mut self.state).map_err(at)?;
            if self.model.layers().any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite())) {
                return Err(at(Error::Numeric("parameters diverged".into())));
            }
            total += loss.to_f64_lossy();
        }
        let mean_loss = total / self.steps_per_epoch as f64;
        self.report.loss_curve.push(mean_loss);
        self.trace.push(TraceEvent::EpochEnd {
            epoch,
            model_generation: self.model.generation(),
            mean_loss,
        });
        Ok(())
    }

    fn finish(mut self) -> Result<TrainedRun<F>> {
        if self.train.labels().is_some() && self.eval.labels().is_some() {
            self.report.final_linear_accuracy = Some(linear_evaluate(
                &self.model,
                &self.train,
                &self.eval,
                &self.cfg.probe,
                probe_seed(self.cfg.seed),
            )?);
        }
        Ok(TrainedRun {
            report: self.report,
            step_count: self.state.step_count(),
            hyper: *self.state.hyper(),
            model: self.model,
            trace: self.trace,
        })
    }
}

/// Pretraining on fixed clusters. `clusters` covers every sample of `d`;
/// only the training split is used to draw pairs, and the held-out split
/// scores the final linear probe.
pub fn train_predetermined<F: Scalar>(
    d: &Dataset<F>,
    clusters: &ClusterAssignment,
    cfg: &TrainConfig,
) -> Result<TrainedRun<F>> {
    if clusters.num_samples() != d.num_samples() {
        return Err(Error::Size(format!(
            "{} cluster ids for {} samples",
            clusters.num_samples(),
            d.num_samples()
        )));
    }
    let (mut trainer, train_idx) = Trainer::new(d, cfg)?;
    let train_clusters = clusters.restrict(&train_idx)?;
    for epoch in 0..cfg.epochs {
        trainer.epoch(epoch, &train_clusters)?;
    }
    trainer.finish()
}

/// Pretraining with k-means clusters of the encoder output: cluster before
/// the first epoch and, with `recluster_every_epoch`, again before every
/// later one, always from the encoder as left by the previous epoch.
pub fn train_kmeans_loop<F: Scalar>(d: &Dataset<F>, cfg: &TrainConfig) -> Result<TrainedRun<F>> {
    let ClusterSource::Kmeans { k } = cfg.cluster_source else {
        return Err(Error::Config("the k-means loop needs cluster_source kmeans".into()));
    };
    let (mut trainer, _) = Trainer::new(d, cfg)?;
    let mut seeds = stream(cfg.seed, STREAM_KMEANS);
    let mut clusters = None;
    for epoch in 0..cfg.epochs {
        if clusters.is_none() || cfg.recluster_every_epoch {
            let embedding = encode(&trainer.model, trainer.train.features())?;
            let result = kmeans(embedding.view(), &KMeansParams::new(k, seeds.next_u64()))
                .map_err(|e| e.context(format!("k-means before epoch {}", epoch + 1)))?;
            let provenance = Provenance::Kmeans { k, epoch };
            let compact = ClusterAssignment::from_raw_sorted(result.assignment.assignment(), provenance)?;
            trainer.trace.push(TraceEvent::Clustered {
                for_epoch: epoch,
                model_generation: trainer.model.generation(),
                assignment: compact.assignment().to_vec(),
                inertia_history: result.inertia_history.iter().map(|v| v.to_f64_lossy()).collect(),
            });
            clusters = Some(compact);
        }
        trainer.epoch(epoch, clusters.as_ref().expect("clustered above"))?;
    }
    trainer.finish()
}

/// Clusters for every non-k-means source, over all samples of `d`.
pub fn build_clusters<F: Scalar>(d: &Dataset<F>, source: &ClusterSource) -> Result<ClusterAssignment> {
    match source {
        ClusterSource::Labels => clusters_from_labels(d.require_labels("label clusters")?),
        ClusterSource::InstanceId => clusters_instance_id(d.num_samples()),
        ClusterSource::Attributes { k } => {
            let attrs = d
                .attributes()
                .ok_or_else(|| Error::Data("dataset has no attribute columns".into()))?;
            clusters_from_attributes(attrs, *k)
        }
        ClusterSource::Hierarchy { level } => {
            let tree = d
                .hierarchy()
                .ok_or_else(|| Error::Data("dataset has no hierarchy".into()))?;
            if tree.is_tree() {
                clusters_from_hierarchy(tree, *level, d)
            } else {
                clusters_from_hierarchy(&prune_to_tree(tree)?, *level, d)
            }
        }
        ClusterSource::Synthetic { spec } => spec.build(d.require_labels("synthetic clusters")?),
        ClusterSource::Kmeans { .. } => Err(Error::Config(
            "k-means clusters are computed inside the training loop".into(),
        )),
    }
}

/// Runs whichever algorithm the configured cluster source calls for.
pub fn train_with_config<F: Scalar>(d: &Dataset<F>, cfg: &TrainConfig) -> Result<TrainedRun<F>> {
    match cfg.cluster_source {
        ClusterSource::Kmeans { .. } => train_kmeans_loop(d, cfg),
        ref source => train_predetermined(d, &build_clusters(d, source)?, cfg),
    }
}
