use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ClusterSource, TrainConfig};
use super::train::train_predetermined;
use crate::cluster::{
    clusters_from_labels, clusters_instance_id, synthesize_clusters, ClusterAssignment, SyntheticMode,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::info::{save_info_plane_csv, InfoPlanePoint};
use crate::scalar::Scalar;

/// A label-derived clustering for the information-plane sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    Labels,
    InstanceId,
    Refine {
        splits_per_class: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Explicit partition of the class set.
    Coarsen { groups: Vec<Vec<usize>> },
    /// Contiguous runs of classes merged into `num_groups` groups.
    CoarsenEven { num_groups: usize },
    /// Refine, then shuffle subcluster ids across every class outside
    /// `fixed_classes`.
    Permute {
        splits_per_class: usize,
        fixed_classes: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
}

impl SyntheticSpec {
    pub fn label(&self) -> String {
        match self {
            SyntheticSpec::Labels => "labels".into(),
            SyntheticSpec::InstanceId => "instance_id".into(),
            SyntheticSpec::Refine { splits_per_class, .. } => format!("refine_{splits_per_class}"),
            SyntheticSpec::Coarsen { groups } => format!("coarsen_{}", groups.len()),
            SyntheticSpec::CoarsenEven { num_groups } => format!("coarsen_{num_groups}"),
            SyntheticSpec::Permute {
                splits_per_class,
                fixed_classes,
                ..
            } => format!("permute_{splits_per_class}_fixed_{}", fixed_classes.len()),
        }
    }

    pub fn build(&self, labels: &[usize]) -> Result<ClusterAssignment> {
        match self {
            SyntheticSpec::Labels => clusters_from_labels(labels),
            SyntheticSpec::InstanceId => clusters_instance_id(labels.len()),
            SyntheticSpec::Refine { splits_per_class, seed } => synthesize_clusters(
                labels,
                &SyntheticMode::Refine {
                    splits_per_class: *splits_per_class,
                    seed: *seed,
                },
            ),
            SyntheticSpec::Coarsen { groups } => {
                synthesize_clusters(labels, &SyntheticMode::Coarsen { groups: groups.clone() })
            }
            SyntheticSpec::CoarsenEven { num_groups } => {
                let classes = labels.iter().max().map_or(0, |m| m + 1);
                if *num_groups == 0 || *num_groups > classes {
                    return Err(Error::Parameter(format!(
                        "cannot merge {classes} classes into {num_groups} groups"
                    )));
                }
                let mut groups = vec![Vec::new(); *num_groups];
                for c in 0..classes {
                    groups[c * num_groups / classes].push(c);
                }
                synthesize_clusters(labels, &SyntheticMode::Coarsen { groups })
            }
            SyntheticSpec::Permute {
                splits_per_class,
                fixed_classes,
                seed,
            } => {
                let base = synthesize_clusters(
                    labels,
                    &SyntheticMode::Refine {
                        splits_per_class: *splits_per_class,
                        seed: *seed,
                    },
                )?;
                synthesize_clusters(
                    labels,
                    &SyntheticMode::Permute {
                        base,
                        fixed_classes: fixed_classes.iter().copied().collect::<BTreeSet<_>>(),
                        seed: seed.wrapping_add(1),
                    },
                )
            }
        }
    }
}

/// Trains one model per clustering and reports where each clustering sits
/// on the information plane together with its probe accuracy. Coordinates
/// are measured on the full labeled dataset.
pub fn run_info_plane_experiment<F: Scalar>(
    d: &Dataset<F>,
    configs: &[SyntheticSpec],
    cfg: &TrainConfig,
    csv_out: Option<&Path>,
) -> Result<Vec<InfoPlanePoint>> {
    if configs.len() < 2 {
        return Err(Error::Parameter(format!(
            "an information-plane sweep needs at least 2 configurations, got {}",
            configs.len()
        )));
    }
    let labels = d.require_labels("the information-plane sweep")?;
    let mut points = Vec::with_capacity(configs.len());
    for spec in configs {
        let label = spec.label();
        let tag = |e: Error| e.context(format!("configuration {label}"));
        let clusters = spec.build(labels).map_err(tag)?;
        let mut run_cfg = cfg.clone();
        run_cfg.cluster_source = ClusterSource::Synthetic { spec: spec.clone() };
        let run = train_predetermined(d, &clusters, &run_cfg).map_err(tag)?;
        let mut point = InfoPlanePoint::from_assignments(label.clone(), clusters.assignment(), labels)?;
        if let Some(acc) = run.report.final_linear_accuracy {
            point = point.with_accuracy(acc);
        }
        points.push(point);
    }
    if let Some(path) = csv_out {
        save_info_plane_csv(&points, path)?;
    }
    Ok(points)
}

/// Sweep used when a config does not list its own: the two endpoints plus
/// coarsened, refined and permuted clusterings of the labels.
pub fn default_sweep(num_classes: usize) -> Vec<SyntheticSpec> {
    let half = num_classes / 2;
    vec![
        SyntheticSpec::Labels,
        SyntheticSpec::CoarsenEven { num_groups: half.max(1) },
        SyntheticSpec::CoarsenEven { num_groups: 2.min(num_classes) },
        SyntheticSpec::Refine {
            splits_per_class: 4,
            seed: 0,
        },
        SyntheticSpec::Permute {
            splits_per_class: 1,
            fixed_classes: (0..half).collect(),
            seed: 0,
        },
        SyntheticSpec::Permute {
            splits_per_class: 1,
            fixed_classes: Vec::new(),
            seed: 0,
        },
        SyntheticSpec::InstanceId,
    ]
}
