use std::collections::{BTreeMap, HashMap};

use super::{ClusterAssignment, Provenance};
use crate::data::{Dataset, HierarchyGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Longest root-to-node path length for every node; the root has depth 1.
pub fn node_depths(g: &HierarchyGraph) -> Result<BTreeMap<String, usize>> {
    let order = g.topological_order()?;
    let parents = g.parents();
    let mut depth: BTreeMap<String, usize> = BTreeMap::new();
    for node in order {
        let d = parents[node]
            .iter()
            .map(|p| depth[*p] + 1)
            .max()
            .unwrap_or(1);
        depth.insert(node.to_string(), d);
    }
    Ok(depth)
}

/// Reduces a DAG to a tree by keeping, for each node, the parent that lies
/// on its longest path from the root. Equal-depth parents resolve to the
/// lexicographically smallest id.
pub fn prune_to_tree(g: &HierarchyGraph) -> Result<HierarchyGraph> {
    if g.nodes().is_empty() {
        return Err(Error::Graph("empty hierarchy".into()));
    }
    let depth = node_depths(g)?;
    let roots = g.roots();
    if roots.len() != 1 {
        let root = roots[0];
        let stray = g
            .leaf_labels()
            .keys()
            .find(|leaf| roots.contains(&leaf.as_str()) || !reaches(g, leaf, root))
            .cloned()
            .unwrap_or_else(|| roots[1].to_string());
        return Err(Error::Graph(format!(
            "hierarchy has {} roots; `{stray}` is disconnected from `{root}`",
            roots.len()
        )));
    }
    let parents = g.parents();
    let keep: HashMap<&str, &str> = parents
        .iter()
        .filter_map(|(&node, ps)| {
            // ps is sorted, so the first maximum is the smallest id
            let best = ps.iter().copied().reduce(|a, b| if depth[b] > depth[a] { b } else { a })?;
            Some((node, best))
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .filter(|(p, c)| keep.get(c.as_str()) == Some(&p.as_str()))
        .cloned()
        .collect();
    HierarchyGraph::new(edges, g.leaf_labels().clone())
}

fn reaches(g: &HierarchyGraph, from: &str, to: &str) -> bool {
    let parents = g.parents();
    let mut stack = vec![from];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        stack.extend(parents[n].iter().copied());
    }
    false
}

/// Assigns each sample the ancestor of its label's leaf at depth `level`
/// (root = 1); leaves shallower than `level` stand for themselves. Cluster
/// ids follow first occurrence.
pub fn clusters_from_hierarchy_labels(
    tree: &HierarchyGraph,
    level: usize,
    labels: &[usize],
) -> Result<ClusterAssignment> {
    if level < 1 {
        return Err(Error::Parameter("hierarchy level starts at 1".into()));
    }
    if !tree.is_tree() {
        return Err(Error::Graph(
            "hierarchy must be pruned to a single-parent tree first".into(),
        ));
    }
    let parents = tree.parents();
    let depth = node_depths(tree)?;
    let max_depth = tree
        .leaf_labels()
        .keys()
        .map(|l| depth[l])
        .max()
        .ok_or_else(|| Error::Graph("hierarchy has no labeled leaves".into()))?;
    if level > max_depth {
        return Err(Error::Parameter(format!(
            "level {level} deeper than the deepest leaf ({max_depth})"
        )));
    }
    let leaf_of: HashMap<usize, &str> = tree
        .leaf_labels()
        .iter()
        .map(|(n, &l)| (l, n.as_str()))
        .collect();
    let mut cache: HashMap<usize, &str> = HashMap::new();
    let mut raw = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let node = match cache.get(&label) {
            Some(n) => *n,
            None => {
                let leaf = *leaf_of.get(&label).ok_or_else(|| {
                    Error::Data(format!("sample {i}: label {label} has no leaf in the hierarchy"))
                })?;
                let mut node = leaf;
                while depth[node] > level {
                    node = parents[node][0];
                }
                cache.insert(label, node);
                node
            }
        };
        raw.push(node);
    }
    ClusterAssignment::from_raw_first_seen(&raw, Provenance::Hierarchy { level })
}

/// [`clusters_from_hierarchy_labels`] over a labeled dataset.
pub fn clusters_from_hierarchy<F: Scalar>(
    tree: &HierarchyGraph,
    level: usize,
    d: &Dataset<F>,
) -> Result<ClusterAssignment> {
    let labels = d
        .labels()
        .ok_or_else(|| Error::Data("hierarchy clustering needs labeled samples".into()))?;
    clusters_from_hierarchy_labels(tree, level, labels)
}
