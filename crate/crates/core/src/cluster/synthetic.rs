use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClusterAssignment, Provenance};
use crate::error::{Error, Result};

/// Ways to derive a cluster assignment from labels alone, sweeping the
/// (I(Z;T), H(Z|T)) plane.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticMode {
    /// Split every class into `splits_per_class` random near-equal subclusters.
    Refine { splits_per_class: usize, seed: u64 },
    /// Merge classes; `groups` must partition `0..num_classes`.
    Coarsen { groups: Vec<Vec<usize>> },
    /// Shuffle the subcluster ids of every sample whose class is not in
    /// `fixed_classes`. `base` must be label-pure (a refine output).
    Permute {
        base: ClusterAssignment,
        fixed_classes: BTreeSet<usize>,
        seed: u64,
    },
}

pub fn synthesize_clusters(labels: &[usize], mode: &SyntheticMode) -> Result<ClusterAssignment> {
    if labels.is_empty() {
        return Err(Error::Size("no labels".into()));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    match mode {
        SyntheticMode::Refine {
            splits_per_class,
            seed,
        } => {
            let s = *splits_per_class;
            if s == 0 {
                return Err(Error::Parameter("splits_per_class must be >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut raw = vec![0usize; labels.len()];
            for class in 0..num_classes {
                let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                for (pos, &i) in members.iter().enumerate() {
                    raw[i] = class * s + pos % s;
                }
            }
            ClusterAssignment::from_raw_sorted(
                &raw,
                Provenance::Synthetic {
                    mode: "refine".into(),
                    params: format!("splits={s},seed={seed}"),
                },
            )
        }
        SyntheticMode::Coarsen { groups } => {
            let mut group_of = vec![None; num_classes];
            for (g, members) in groups.iter().enumerate() {
                if members.is_empty() {
                    return Err(Error::Parameter(format!("merge group {g} is empty")));
                }
                for &c in members {
                    match group_of.get_mut(c) {
                        Some(slot @ None) => *slot = Some(g),
                        Some(Some(_)) => {
                            return Err(Error::Parameter(format!("class {c} in two merge groups")))
                        }
                        None => {
                            return Err(Error::Parameter(format!(
                                "class {c} outside 0..{num_classes}"
                            )))
                        }
                    }
                }
            }
            if let Some(c) = group_of.iter().position(Option::is_none) {
                return Err(Error::Parameter(format!("class {c} in no merge group")));
            }
            let raw: Vec<usize> = labels.iter().map(|&t| group_of[t].unwrap()).collect();
            let desc: Vec<String> = groups
                .iter()
                .map(|g| g.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+"))
                .collect();
            ClusterAssignment::from_raw_sorted(
                &raw,
                Provenance::Synthetic {
                    mode: "coarsen".into(),
                    params: desc.join("|"),
                },
            )
        }
        SyntheticMode::Permute {
            base,
            fixed_classes,
            seed,
        } => {
            if base.num_samples() != labels.len() {
                return Err(Error::Parameter("base assignment length differs from labels".into()));
            }
            let mut class_of = vec![None; base.num_clusters()];
            for (&z, &t) in base.assignment().iter().zip(labels) {
                if *class_of[z].get_or_insert(t) != t {
                    return Err(Error::Parameter(format!(
                        "base cluster {z} mixes classes; permute needs a refine-mode base"
                    )));
                }
            }
            let movable: Vec<usize> = (0..labels.len())
                .filter(|&i| !fixed_classes.contains(&labels[i]))
                .collect();
            let mut ids: Vec<usize> = movable.iter().map(|&i| base.assignment()[i]).collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut raw = base.assignment().to_vec();
            for (&i, z) in movable.iter().zip(ids) {
                raw[i] = z;
            }
            let fixed: Vec<String> = fixed_classes.iter().map(|c| c.to_string()).collect();
            ClusterAssignment::from_raw_sorted(
                &raw,
                Provenance::Synthetic {
                    mode: "permute".into(),
                    params: format!("fixed={},seed={seed}", fixed.join("+")),
                },
            )
        }
    }
}
