//! Seeded synthetic datasets with known class structure.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HierarchyGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Classes made of isotropic Gaussian modes. Mode centres are drawn in the
/// first `signal_dims` coordinates; every coordinate carries within-mode
/// noise. Each class also carries noisy binary attributes and sits under a
/// balanced root / group / class tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub num_samples: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub modes_per_class: usize,
    pub signal_dims: usize,
    /// Standard deviation of mode centres along each signal coordinate.
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub num_attributes: usize,
    /// Probability that a sample's attribute differs from its class prototype.
    pub attribute_flip: f64,
    /// Middle-level nodes in the tree; classes are spread evenly across them.
    pub hierarchy_groups: usize,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            num_classes: 10,
            dim: 64,
            modes_per_class: 3,
            signal_dims: 8,
            center_scale: 1.0,
            noise_sigma: 0.25,
            num_attributes: 8,
            attribute_flip: 0.1,
            hierarchy_groups: 5,
            seed: 0,
        }
    }
}

/// Four Gaussian blobs at the corners of a square in the first two
/// coordinates; the remaining coordinates are noise. The label is the blob
/// index, or its diagonal (XOR) pairing when `xor_labels` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobSpec {
    pub num_samples: usize,
    pub dim: usize,
    /// Half the side of the square.
    pub separation: f64,
    pub blob_sigma: f64,
    pub nuisance_sigma: f64,
    pub xor_labels: bool,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            dim: 64,
            separation: 1.0,
            blob_sigma: 0.3,
            nuisance_sigma: 0.3,
            xor_labels: true,
            seed: 0,
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Balanced labels `i % classes`, in seeded random order.
fn balanced_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

pub fn gaussian_mixture<F: Scalar>(spec: &MixtureSpec) -> Result<Dataset<F>> {
    let MixtureSpec {
        num_samples: n,
        num_classes: c,
        dim,
        modes_per_class: m,
        signal_dims: s,
        ..
    } = *spec;
    if c < 2 || n < c || m < 1 || s < 1 || s > dim {
        return Err(Error::Parameter(format!(
            "mixture needs 2 <= classes <= samples, modes >= 1, 1 <= signal_dims <= dim (got {spec:?})"
        )));
    }
    if !(0.0..=1.0).contains(&spec.attribute_flip) || spec.hierarchy_groups < 1 || spec.hierarchy_groups > c {
        return Err(Error::Parameter("attribute_flip outside [0, 1] or bad hierarchy_groups".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = Array2::from_shape_fn((c * m, s), |_| spec.center_scale * normal(&mut rng));
    let prototypes = Array2::from_shape_fn((c, spec.num_attributes), |_| u8::from(rng.random::<bool>()));
    let labels = balanced_labels(n, c, &mut rng);

    let mut features = Array2::<F>::zeros((n, dim));
    let mut attributes = Array2::<u8>::zeros((n, spec.num_attributes));
    for (i, &label) in labels.iter().enumerate() {
        let mode = label * m + rng.random_range(0..m);
        for j in 0..dim {
            let centre = if j < s { centers[[mode, j]] } else { 0.0 };
            features[[i, j]] = F::of(centre + spec.noise_sigma * normal(&mut rng));
        }
        for a in 0..spec.num_attributes {
            let flip = rng.random::<f64>() < spec.attribute_flip;
            attributes[[i, a]] = prototypes[[label, a]] ^ u8::from(flip);
        }
    }
    let attrs = (spec.num_attributes > 0).then_some(attributes);
    let d = Dataset::new(features, attrs, Some(labels), None)?;
    Ok(d.with_hierarchy(balanced_tree(c, spec.hierarchy_groups)?))
}

/// `root -> g{j} -> c{class}`, with classes split into `groups` contiguous
/// runs of near-equal length.
pub fn balanced_tree(num_classes: usize, groups: usize) -> Result<HierarchyGraph> {
    let mut edges = Vec::new();
    for g in 0..groups {
        edges.push(("root".to_string(), format!("g{g}")));
    }
    let mut leaf_labels = std::collections::BTreeMap::new();
    for class in 0..num_classes {
        let leaf = format!("c{class}");
        edges.push((format!("g{}", class * groups / num_classes), leaf.clone()));
        leaf_labels.insert(leaf, class);
    }
    HierarchyGraph::new(edges, leaf_labels)
}

pub fn four_blobs<F: Scalar>(spec: &BlobSpec) -> Result<Dataset<F>> {
    if spec.dim < 2 || spec.num_samples < 4 {
        return Err(Error::Parameter("four blobs need dim >= 2 and at least 4 samples".into()));
    }
    let corners = [(-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blobs = balanced_labels(spec.num_samples, 4, &mut rng);
    let mut features = Array2::<F>::zeros((spec.num_samples, spec.dim));
    for (i, &b) in blobs.iter().enumerate() {
        let (cx, cy) = corners[b];
        features[[i, 0]] = F::of(spec.separation * cx + spec.blob_sigma * normal(&mut rng));
        features[[i, 1]] = F::of(spec.separation * cy + spec.blob_sigma * normal(&mut rng));
        for j in 2..spec.dim {
            features[[i, j]] = F::of(spec.nuisance_sigma * normal(&mut rng));
        }
    }
    let labels = if spec.xor_labels {
        blobs.iter().map(|&b| b / 2).collect()
    } else {
        blobs
    };
    Dataset::new(features, None, Some(labels), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_shapes_and_balance() {
        let spec = MixtureSpec {
            num_samples: 200,
            ..MixtureSpec::default()
        };
        let d = gaussian_mixture::<f64>(&spec).unwrap();
        assert_eq!(d.features().dim(), (200, 64));
        assert_eq!(d.num_attributes(), 8);
        assert_eq!(d.num_classes(), 10);
        let labels = d.labels().unwrap();
        for c in 0..10 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 20);
        }
        assert!(d.hierarchy().unwrap().is_tree());
        assert_eq!(gaussian_mixture::<f64>(&spec).unwrap().features(), d.features());
    }

    #[test]
    fn attributes_follow_prototypes_without_noise() {
        let spec = MixtureSpec {
            num_samples: 100,
            attribute_flip: 0.0,
            ..MixtureSpec::default()
        };
        let d = gaussian_mixture::<f64>(&spec).unwrap();
        let labels = d.labels().unwrap();
        let attrs = d.attributes().unwrap();
        for i in 0..100 {
            for j in 0..100 {
                if labels[i] == labels[j] {
                    assert_eq!(attrs.row(i), attrs.row(j));
                }
            }
        }
    }

    #[test]
    fn tree_groups() {
        let t = balanced_tree(10, 5).unwrap();
        assert_eq!(t.roots(), ["root"]);
        let parents = t.parents();
        assert_eq!(parents["c0"], ["g0"]);
        assert_eq!(parents["c1"], ["g0"]);
        assert_eq!(parents["c9"], ["g4"]);
    }

    #[test]
    fn blob_labels() {
        let spec = BlobSpec {
            num_samples: 40,
            xor_labels: false,
            ..BlobSpec::default()
        };
        let d = four_blobs::<f64>(&spec).unwrap();
        assert_eq!(d.num_classes(), 4);
        for (row, &l) in d.features().outer_iter().zip(d.labels().unwrap()) {
            let corner = [(-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)][l];
            assert!((row[0] - corner.0).abs() < 2.0 && (row[1] - corner.1).abs() < 2.0);
        }
        let xor = four_blobs::<f64>(&BlobSpec { num_samples: 40, ..BlobSpec::default() }).unwrap();
        assert_eq!(xor.num_classes(), 2);
    }
}
