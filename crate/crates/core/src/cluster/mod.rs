//! Cluster assignments and the ways to build them: attribute patterns,
//! hierarchy levels, k-means, and the synthetic information-plane protocol.

mod attributes;
mod hierarchy;
mod kmeans;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attributes::{attribute_entropy, clusters_from_attributes, rank_attributes};
pub use hierarchy::{clusters_from_hierarchy, clusters_from_hierarchy_labels, node_depths, prune_to_tree};
pub use kmeans::{kmeans, KMeansParams, KMeansResult};
pub use synthetic::{synthesize_clusters, SyntheticMode};

/// Where a cluster assignment came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Attributes { k: usize },
    Hierarchy { level: usize },
    Kmeans { k: usize, epoch: usize },
    Labels,
    InstanceId,
    Synthetic { mode: String, params: String },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Attributes { k } => write!(f, "attributes(k={k})"),
            Provenance::Hierarchy { level } => write!(f, "hierarchy(level={level})"),
            Provenance::Kmeans { k, epoch } => write!(f, "kmeans(K={k},epoch={epoch})"),
            Provenance::Labels => write!(f, "labels"),
            Provenance::InstanceId => write!(f, "instance_id"),
            Provenance::Synthetic { mode, params } => write!(f, "synthetic({mode}:{params})"),
        }
    }
}

/// Per-sample cluster ids `Z`, all in `0..num_clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    assignment: Vec<usize>,
    num_clusters: usize,
    provenance: Provenance,
}

impl ClusterAssignment {
    pub fn new(assignment: Vec<usize>, num_clusters: usize, provenance: Provenance) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::Size("empty cluster assignment".into()));
        }
        if num_clusters == 0 || num_clusters > n {
            return Err(Error::Parameter(format!(
                "{num_clusters} clusters for {n} samples"
            )));
        }
        if let Some(bad) = assignment.iter().find(|&&z| z >= num_clusters) {
            return Err(Error::Parameter(format!(
                "cluster id {bad} outside 0..{num_clusters}"
            )));
        }
        if provenance == Provenance::InstanceId {
            let mut seen = vec![false; n];
            if num_clusters != n || assignment.iter().any(|&z| std::mem::replace(&mut seen[z], true)) {
                return Err(Error::Parameter(
                    "instance-id assignment must be a bijection".into(),
                ));
            }
        }
        Ok(Self {
            assignment,
            num_clusters,
            provenance,
        })
    }

    /// Relabels arbitrary ids so that the smallest raw id becomes 0, the next 1, ...
    pub fn from_raw_sorted(raw: &[usize], provenance: Provenance) -> Result<Self> {
        let mut distinct: Vec<usize> = raw.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let rank: HashMap<usize, usize> = distinct.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Self::new(
            raw.iter().map(|v| rank[v]).collect(),
            distinct.len(),
            provenance,
        )
    }

    /// Relabels by first occurrence: the first sample's cluster becomes 0, ...
    pub fn from_raw_first_seen<K: std::hash::Hash + Eq + Clone>(
        raw: &[K],
        provenance: Provenance,
    ) -> Result<Self> {
        let mut ids: HashMap<K, usize> = HashMap::new();
        let assignment = raw
            .iter()
            .map(|k| {
                let next = ids.len();
                *ids.entry(k.clone()).or_insert(next)
            })
            .collect();
        Self::new(assignment, ids.len(), provenance)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_samples(&self) -> usize {
        self.assignment.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Sample indices of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &z) in self.assignment.iter().enumerate() {
            out[z].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_clusters];
        for &z in &self.assignment {
            out[z] += 1;
        }
        out
    }

    /// Assignment restricted to `indices`, with ids compacted in sorted order.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let raw: Vec<usize> = indices.iter().map(|&i| self.assignment[i]).collect();
        Self::from_raw_sorted(&raw, self.provenance.clone())
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &ClusterAssignment) -> bool {
        if self.num_samples() != coarser.num_samples() {
            return false;
        }
        let mut parent: HashMap<usize, usize> = HashMap::new();
        self.assignment
            .iter()
            .zip(&coarser.assignment)
            .all(|(&fine, &coarse)| *parent.entry(fine).or_insert(coarse) == coarse)
    }
}

/// Cluster ids of the samples' labels, kept as-is when labels are `0..C`.
pub fn clusters_from_labels(labels: &[usize]) -> Result<ClusterAssignment> {
    ClusterAssignment::from_raw_sorted(labels, Provenance::Labels)
}

/// Every sample in its own cluster.
pub fn clusters_instance_id(n: usize) -> Result<ClusterAssignment> {
    ClusterAssignment::new((0..n).collect(), n, Provenance::InstanceId)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    num_clusters: usize,
    provenance: Provenance,
}

/// `id,cluster` CSV body.
pub fn assignment_csv(clusters: &ClusterAssignment, ids: &[String]) -> Result<String> {
    if ids.len() != clusters.num_samples() {
        return Err(Error::Dimension(format!(
            "{} ids for {} assignments",
            ids.len(),
            clusters.num_samples()
        )));
    }
    let mut out = String::from("id,cluster\n");
    for (id, z) in ids.iter().zip(&clusters.assignment) {
        out.push_str(&format!("{id},{z}\n"));
    }
    Ok(out)
}

pub fn assignment_sidecar(clusters: &ClusterAssignment) -> String {
    serde_json::to_string_pretty(&Sidecar {
        num_clusters: clusters.num_clusters,
        provenance: clusters.provenance.clone(),
    })
    .expect("sidecar serializes")
}

/// Writes `csv_path` and a `.json` sidecar next to it.
pub fn save_assignment(clusters: &ClusterAssignment, ids: &[String], csv_path: &Path) -> Result<()> {
    fs::write(csv_path, assignment_csv(clusters, ids)?).map_err(|e| Error::io(csv_path, e))?;
    let side = csv_path.with_extension("json");
    fs::write(&side, assignment_sidecar(clusters)).map_err(|e| Error::io(&side, e))
}

/// Reads back what [`save_assignment`] wrote; returns ids alongside.
pub fn load_assignment(csv_path: &Path) -> Result<(ClusterAssignment, Vec<String>)> {
    let side = csv_path.with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            line: e.line() as u64,
            message: e.to_string(),
        })?;
    let body = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut lines = body.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("id,cluster") {
        return Err(Error::Schema {
            line: 1,
            message: "expected header `id,cluster`".into(),
        });
    }
    let mut ids = Vec::new();
    let mut assignment = Vec::new();
    for (i, line) in lines {
        let (id, z) = line.split_once(',').ok_or_else(|| Error::Schema {
            line: i as u64 + 1,
            message: "expected two fields".into(),
        })?;
        ids.push(id.to_string());
        assignment.push(z.trim().parse().map_err(|_| Error::Schema {
            line: i as u64 + 1,
            message: format!("`{z}` is not a cluster id"),
        })?);
    }
    Ok((
        ClusterAssignment::new(assignment, meta.num_clusters, meta.provenance)?,
        ids,
    ))
}
