//! Tabular datasets: features, binary attributes, labels and an optional
//! label hierarchy, with CSV/TSV readers and writers, seeded splitting and
//! two-view feature augmentation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample matrix plus the auxiliary information attached to each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    features: Array2<F>,
    attributes: Option<Array2<u8>>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
    hierarchy: Option<HierarchyGraph>,
    ids: Vec<String>,
}

impl<F: Scalar> Dataset<F> {
    /// Validates and assembles a dataset. Missing ids default to the row index.
    pub fn new(
        features: Array2<F>,
        attributes: Option<Array2<u8>>,
        labels: Option<Vec<usize>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if let Some(a) = &attributes {
            if a.nrows() != n {
                return Err(Error::Dimension(format!(
                    "attribute matrix has {} rows, features have {n}",
                    a.nrows()
                )));
            }
            if let Some(bad) = a.iter().find(|&&v| v > 1) {
                return Err(Error::Domain(format!("attribute value {bad} is not 0 or 1")));
            }
        }
        let num_classes = match &labels {
            Some(l) => {
                if l.len() != n {
                    return Err(Error::Dimension(format!(
                        "label vector has {} entries, features have {n} rows",
                        l.len()
                    )));
                }
                l.iter().max().map_or(1, |m| m + 1)
            }
            None => 0,
        };
        let ids = match ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} ids for {n} rows",
                        ids.len()
                    )));
                }
                ids
            }
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        Ok(Self {
            features,
            attributes,
            labels,
            num_classes,
            hierarchy: None,
            ids,
        })
    }

    pub fn with_hierarchy(mut self, hierarchy: HierarchyGraph) -> Self {
        self.hierarchy = Some(hierarchy);
        self
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.as_ref().map_or(0, |a| a.ncols())
    }

    /// Number of label classes, `0` for an unlabeled dataset.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<F> {
        &self.features
    }

    pub fn attributes(&self) -> Option<&Array2<u8>> {
        self.attributes.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn hierarchy(&self) -> Option<&HierarchyGraph> {
        self.hierarchy.as_ref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Labels or a data error naming the caller's purpose.
    pub fn require_labels(&self, purpose: &str) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::Data(format!("{purpose} requires a labeled dataset")))
    }

    /// Rows at `indices`, in that order. The label class count is inherited.
    pub fn subset(&self, indices: &[usize]) -> Dataset<F> {
        Dataset {
            features: self.features.select(Axis(0), indices),
            attributes: self.attributes.as_ref().map(|a| a.select(Axis(0), indices)),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
            hierarchy: self.hierarchy.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Supported on-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// Header row `id,f0..,a0..,label`.
    Csv,
}

struct Columns {
    features: Vec<usize>,
    attributes: Vec<usize>,
    label: Option<usize>,
}

fn parse_header(header: &csv::StringRecord) -> Result<Columns> {
    let schema = |message: String| Error::Schema { line: 1, message };
    if header.get(0) != Some("id") {
        return Err(schema("first column must be `id`".into()));
    }
    let mut features = Vec::new();
    let mut attributes = Vec::new();
    let mut label = None;
    for (col, name) in header.iter().enumerate().skip(1) {
        if label.is_some() {
            return Err(schema(format!("column `{name}` after `label`")));
        }
        if name == "label" {
            label = Some(col);
        } else if let Some(idx) = name.strip_prefix('f') {
            if !attributes.is_empty() {
                return Err(schema(format!("feature column `{name}` after attribute columns")));
            }
            if idx.parse::<usize>().ok() != Some(features.len()) {
                return Err(schema(format!(
                    "expected column `f{}`, found `{name}`",
                    features.len()
                )));
            }
            features.push(col);
        } else if let Some(idx) = name.strip_prefix('a') {
            if idx.parse::<usize>().ok() != Some(attributes.len()) {
                return Err(schema(format!(
                    "expected column `a{}`, found `{name}`",
                    attributes.len()
                )));
            }
            attributes.push(col);
        } else {
            return Err(schema(format!("unknown column `{name}`")));
        }
    }
    if features.is_empty() {
        return Err(schema("no feature columns".into()));
    }
    Ok(Columns {
        features,
        attributes,
        label,
    })
}

/// Reads a dataset from `path`. Hierarchies live in their own file, see
/// [`load_hierarchy`].
pub fn load_dataset<F: Scalar>(path: impl AsRef<Path>, schema: Schema) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match schema {
        Schema::Csv => parse_dataset_csv(&text),
    }
}

/// Parses the CSV dataset layout from an in-memory string.
pub fn parse_dataset_csv<F: Scalar>(text: &str) -> Result<Dataset<F>> {
    if text.trim().is_empty() {
        return Err(Error::Schema {
            line: 1,
            message: "empty input".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    let cols = parse_header(&header)?;

    let mut ids = Vec::new();
    let mut feats: Vec<F> = Vec::new();
    let mut attrs: Vec<u8> = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        ids.push(field(0).to_string());
        for &c in &cols.features {
            let v: F = field(c).parse().map_err(|_| Error::Schema {
                line,
                message: format!("`{}` is not a number", field(c)),
            })?;
            feats.push(v);
        }
        for &c in &cols.attributes {
            let raw = field(c);
            let v: i64 = raw.parse().map_err(|_| Error::Schema {
                line,
                message: format!("`{raw}` is not an integer attribute"),
            })?;
            if v != 0 && v != 1 {
                return Err(Error::Domain(format!(
                    "line {line}: attribute value {v} is not 0 or 1"
                )));
            }
            attrs.push(v as u8);
        }
        if let Some(c) = cols.label {
            let raw = field(c);
            let v: usize = raw.parse().map_err(|_| Error::Schema {
                line,
                message: format!("`{raw}` is not a non-negative integer label"),
            })?;
            labels.push(v);
        }
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Schema {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let features = Array2::from_shape_vec((n, cols.features.len()), feats)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let attributes = if cols.attributes.is_empty() {
        None
    } else {
        Some(
            Array2::from_shape_vec((n, cols.attributes.len()), attrs)
                .map_err(|e| Error::Dimension(e.to_string()))?,
        )
    };
    let labels = cols.label.map(|_| labels);
    Dataset::new(features, attributes, labels, Some(ids))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Dimension(format!(
            "line {line}: expected {expected_len} fields, found {len}"
        )),
        _ => Error::Schema {
            line,
            message: e.to_string(),
        },
    }
}

/// Renders the CSV layout read by [`parse_dataset_csv`].
pub fn dataset_to_csv<F: Scalar>(d: &Dataset<F>) -> String {
    let mut header = vec!["id".to_string()];
    header.extend((0..d.feature_dim()).map(|j| format!("f{j}")));
    header.extend((0..d.num_attributes()).map(|j| format!("a{j}")));
    if d.labels.is_some() {
        header.push("label".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..d.num_samples() {
        let mut row = vec![d.ids[i].clone()];
        row.extend(d.features.row(i).iter().map(|v| v.to_string()));
        if let Some(a) = &d.attributes {
            row.extend(a.row(i).iter().map(|v| v.to_string()));
        }
        if let Some(l) = &d.labels {
            row.push(l[i].to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_dataset<F: Scalar>(d: &Dataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_csv(d)).map_err(|e| Error::io(path, e))
}

/// Directed parent→child label hierarchy with leaves mapped to label ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HierarchyGraph {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    leaf_labels: BTreeMap<String, usize>,
}

impl HierarchyGraph {
    /// Builds a graph from parent→child edges and a leaf→label map. Rejects
    /// cycles, labels shared by several leaves and labels on interior nodes.
    pub fn new(
        edges: Vec<(String, String)>,
        leaf_labels: BTreeMap<String, usize>,
    ) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut seen = BTreeSet::new();
        let mut uniq_edges = Vec::new();
        let mut seen_edges = BTreeSet::new();
        for (p, c) in edges {
            if p == c {
                return Err(Error::Graph(format!("self loop on `{p}`")));
            }
            for n in [&p, &c] {
                if seen.insert(n.clone()) {
                    nodes.push(n.clone());
                }
            }
            if seen_edges.insert((p.clone(), c.clone())) {
                uniq_edges.push((p, c));
            }
        }
        for leaf in leaf_labels.keys() {
            if seen.insert(leaf.clone()) {
                nodes.push(leaf.clone());
            }
        }
        let g = Self {
            nodes,
            edges: uniq_edges,
            leaf_labels,
        };
        let mut owner: HashMap<usize, &str> = HashMap::new();
        for (leaf, &label) in &g.leaf_labels {
            if let Some(other) = owner.insert(label, leaf) {
                return Err(Error::Graph(format!(
                    "label {label} mapped to both `{other}` and `{leaf}`"
                )));
            }
            if g.edges.iter().any(|(p, _)| p == leaf) {
                return Err(Error::Graph(format!("labeled node `{leaf}` has children")));
            }
        }
        g.topological_order()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn leaf_labels(&self) -> &BTreeMap<String, usize> {
        &self.leaf_labels
    }

    /// Leaf node carrying `label`, if any.
    pub fn leaf_for_label(&self, label: usize) -> Option<&str> {
        self.leaf_labels
            .iter()
            .find(|(_, &l)| l == label)
            .map(|(n, _)| n.as_str())
    }

    /// Parents of every node, sorted by id.
    pub fn parents(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut parents: BTreeMap<&str, Vec<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), Vec::new())).collect();
        for (p, c) in &self.edges {
            parents.get_mut(c.as_str()).unwrap().push(p.as_str());
        }
        for ps in parents.values_mut() {
            ps.sort_unstable();
        }
        parents
    }

    /// Nodes without a parent.
    pub fn roots(&self) -> Vec<&str> {
        let parents = self.parents();
        self.nodes
            .iter()
            .map(String::as_str)
            .filter(|n| parents[n].is_empty())
            .collect()
    }

    pub fn is_tree(&self) -> bool {
        self.roots().len() == 1 && self.parents().values().all(|ps| ps.len() <= 1)
    }

    /// Kahn ordering; ties resolved by node insertion order. Fails on cycles.
    pub fn topological_order(&self) -> Result<Vec<&str>> {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut children = vec![Vec::new(); self.nodes.len()];
        for (p, c) in &self.edges {
            indeg[index[c.as_str()]] += 1;
            children[index[p.as_str()]].push(index[c.as_str()]);
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            order.push(self.nodes[i].as_str());
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::Graph("hierarchy contains a cycle".into()));
        }
        Ok(order)
    }
}

const LABELS_SENTINEL: &str = "#labels";

/// Parses `parent<TAB>child` edge lines, then `leaf<TAB>label` lines after
/// the `#labels` sentinel.
pub fn parse_hierarchy(text: &str) -> Result<HierarchyGraph> {
    let mut edges = Vec::new();
    let mut labels = BTreeMap::new();
    let mut in_labels = false;
    for (i, raw) in text.lines().enumerate() {
        let line = (i + 1) as u64;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        if row.trim() == LABELS_SENTINEL {
            if in_labels {
                return Err(Error::Schema {
                    line,
                    message: "duplicate `#labels` sentinel".into(),
                });
            }
            in_labels = true;
            continue;
        }
        let mut parts = row.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Schema {
                line,
                message: "expected exactly two tab-separated fields".into(),
            });
        };
        if in_labels {
            let label: usize = b.trim().parse().map_err(|_| Error::Schema {
                line,
                message: format!("`{b}` is not a non-negative integer label"),
            })?;
            if labels.insert(a.to_string(), label).is_some() {
                return Err(Error::Schema {
                    line,
                    message: format!("leaf `{a}` labeled twice"),
                });
            }
        } else {
            edges.push((a.to_string(), b.to_string()));
        }
    }
    HierarchyGraph::new(edges, labels)
}

pub fn load_hierarchy(path: impl AsRef<Path>) -> Result<HierarchyGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hierarchy(&text)
}

pub fn hierarchy_to_string(g: &HierarchyGraph) -> String {
    let mut out = String::new();
    for (p, c) in &g.edges {
        out.push_str(&format!("{p}\t{c}\n"));
    }
    out.push_str(LABELS_SENTINEL);
    out.push('\n');
    for (leaf, label) in &g.leaf_labels {
        out.push_str(&format!("{leaf}\t{label}\n"));
    }
    out
}

pub fn save_hierarchy(g: &HierarchyGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(hierarchy_to_string(g).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Seeded partition of `0..n`: the first `floor(train_fraction * n)` indices
/// of a shuffled order go to train. Both halves come back sorted.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Size(format!("cannot split {n} samples")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * n as f64).floor() as usize;
    let mut train = order[..n_train].to_vec();
    let mut eval = order[n_train..].to_vec();
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

pub fn split_dataset<F: Scalar>(
    d: &Dataset<F>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<F>, Dataset<F>)> {
    let (train, eval) = split_indices(d.num_samples(), train_fraction, seed)?;
    Ok((d.subset(&train), d.subset(&eval)))
}

/// Stochastic view generator: additive Gaussian noise, then coordinate masking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            mask_prob: 0.1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::Parameter(format!(
                "mask_prob {} outside [0, 1]",
                self.mask_prob
            )));
        }
        Ok(())
    }
}

fn augment_view<F: Scalar, R: Rng + ?Sized>(
    features: &Array2<F>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Array2<F> {
    let mut view = features.clone();
    if cfg.noise_sigma > 0.0 {
        let sigma = F::of(cfg.noise_sigma);
        for v in view.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * F::of(z);
        }
    }
    if cfg.mask_prob > 0.0 {
        for v in view.iter_mut() {
            if rng.random::<f64>() < cfg.mask_prob {
                *v = F::zero();
            }
        }
    }
    view
}

/// Two independently drawn views of every row.
pub fn augment_two_views<F: Scalar, R: Rng + ?Sized>(
    features: &Array2<F>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Array2<F>, Array2<F>)> {
    cfg.validate()?;
    let a = augment_view(features, cfg, rng);
    let b = augment_view(features, cfg, rng);
    Ok((a, b))
}

/// One view of each row of `x`, then one of each row of `y`. With `x == y`
/// this draws exactly what [`augment_two_views`] draws.
pub fn augment_pair<F: Scalar, R: Rng + ?Sized>(
    x: &Array2<F>,
    y: &Array2<F>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Array2<F>, Array2<F>)> {
    cfg.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("view inputs {:?} and {:?}", x.dim(), y.dim())));
    }
    let a = augment_view(x, cfg, rng);
    let b = augment_view(y, cfg, rng);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const SMALL: &str = "id,f0,f1,a0,label\nx,0.5,1.5,1,0\ny,-2,3e-1,0,1\nz,4,5,1,1\n";

    #[test]
    fn loads_three_row_csv() {
        let d: Dataset<f64> = parse_dataset_csv(SMALL).unwrap();
        assert_eq!(d.num_samples(), 3);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.num_attributes(), 1);
        assert_eq!(d.labels(), Some(&[0, 1, 1][..]));
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.features()[[1, 1]], 0.3);
        assert_eq!(d.ids()[2], "z");
    }

    #[test]
    fn attribute_two_is_domain_error() {
        let text = "id,f0,a0\n0,1.0,2\n";
        let err = parse_dataset_csv::<f64>(text).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn empty_file_is_schema_error() {
        assert!(matches!(
            parse_dataset_csv::<f64>("").unwrap_err(),
            Error::Schema { .. }
        ));
        assert!(matches!(
            parse_dataset_csv::<f64>("id,f0\n").unwrap_err(),
            Error::Schema { .. }
        ));
    }

    #[test]
    fn ragged_row_is_dimension_error() {
        let text = "id,f0,f1\n0,1,2\n1,3\n";
        assert!(matches!(
            parse_dataset_csv::<f64>(text).unwrap_err(),
            Error::Dimension(_)
        ));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "id,f0\n0,1\n1,abc\n";
        match parse_dataset_csv::<f64>(text).unwrap_err() {
            Error::Schema { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn out_of_order_header_rejected() {
        assert!(parse_dataset_csv::<f64>("id,f1\n0,1\n").is_err());
        assert!(parse_dataset_csv::<f64>("id,f0,label,a0\n0,1,0,1\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d: Dataset<f64> = parse_dataset_csv(SMALL).unwrap();
        let again: Dataset<f64> = parse_dataset_csv(&dataset_to_csv(&d)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn ids_default_to_row_index() {
        let d = Dataset::new(Array2::<f64>::zeros((3, 1)), None, None, None).unwrap();
        assert_eq!(d.ids(), ["0", "1", "2"]);
    }

    #[test]
    fn split_seven_three() {
        let (tr, ev) = split_indices(10, 0.7, 3).unwrap();
        assert_eq!((tr.len(), ev.len()), (7, 3));
        let mut all: Vec<_> = tr.iter().chain(&ev).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.7, 3).unwrap(), (tr, ev));
    }

    #[test]
    fn split_uses_floor() {
        let (tr, ev) = split_indices(5, 0.5, 0).unwrap();
        assert_eq!((tr.len(), ev.len()), (2, 3));
    }

    #[test]
    fn split_rejects_tiny_and_bad_fraction() {
        assert!(matches!(split_indices(1, 0.5, 0), Err(Error::Size(_))));
        assert!(matches!(split_indices(4, 1.0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn identity_augmentation() {
        let x = array![[1.0, -2.0], [3.5, 0.25]];
        let cfg = AugmentConfig {
            noise_sigma: 0.0,
            mask_prob: 0.0,
            seed: 0,
        };
        let (a, b) = augment_two_views(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn full_masking() {
        let x = array![[1.0, -2.0], [3.5, 0.25]];
        let cfg = AugmentConfig {
            noise_sigma: 0.3,
            mask_prob: 1.0,
            seed: 0,
        };
        let (a, b) = augment_two_views(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(a.iter().chain(b.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn noise_std_matches_config() {
        let x = Array2::<f64>::zeros((100_000, 1));
        let cfg = AugmentConfig {
            noise_sigma: 0.1,
            mask_prob: 0.0,
            seed: 0,
        };
        let (a, _) = augment_two_views(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.1).abs() < 0.002, "std {}", var.sqrt());
    }

    #[test]
    fn views_differ_and_keep_shape() {
        let x = Array2::<f64>::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let cfg = AugmentConfig::default();
        let (a, b) = augment_two_views(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.dim(), x.dim());
        assert_eq!(b.dim(), x.dim());
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_augment_config() {
        let cfg = AugmentConfig {
            noise_sigma: -1.0,
            mask_prob: 0.0,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        let cfg = AugmentConfig {
            noise_sigma: 0.0,
            mask_prob: 1.5,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hierarchy_parse_and_round_trip() {
        let text = "root\tA\nroot\tB\nA\tl0\nB\tl1\n#labels\nl0\t0\nl1\t1\n";
        let g = parse_hierarchy(text).unwrap();
        assert_eq!(g.roots(), vec!["root"]);
        assert!(g.is_tree());
        assert_eq!(g.leaf_for_label(1), Some("l1"));
        assert_eq!(parse_hierarchy(&hierarchy_to_string(&g)).unwrap(), g);
    }

    #[test]
    fn hierarchy_rejects_cycles_and_shared_labels() {
        assert!(matches!(
            parse_hierarchy("a\tb\nb\tc\nc\ta\n").unwrap_err(),
            Error::Graph(_)
        ));
        assert!(matches!(
            parse_hierarchy("r\ta\nr\tb\n#labels\na\t0\nb\t0\n").unwrap_err(),
            Error::Graph(_)
        ));
        assert!(matches!(
            parse_hierarchy("r\ta\nr\tb b\textra\n").unwrap_err(),
            Error::Schema { line: 2, .. }
        ));
    }
}
