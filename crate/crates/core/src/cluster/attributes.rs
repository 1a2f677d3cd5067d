use ndarray::{Array2, ArrayView1, Axis};

use super::{ClusterAssignment, Provenance};
use crate::error::{Error, Result};
use crate::scalar::{xlogx, Scalar};

/// Binary entropy of a 0/1 column, in nats.
pub fn attribute_entropy<F: Scalar>(column: ArrayView1<'_, u8>) -> Result<F> {
    if column.is_empty() {
        return Err(Error::Size("entropy of an empty column".into()));
    }
    if column.iter().any(|&v| v > 1) {
        return Err(Error::Domain("attribute column is not binary".into()));
    }
    let ones = column.iter().filter(|&&v| v == 1).count();
    let p = F::of(ones as f64) / F::of(column.len() as f64);
    Ok(-(xlogx(p) + xlogx(F::one() - p)))
}

/// Column indices ordered by entropy, highest first; equal entropies keep
/// the lower index first.
pub fn rank_attributes(attributes: &Array2<u8>) -> Result<Vec<usize>> {
    let entropies = attributes
        .axis_iter(Axis(1))
        .map(attribute_entropy::<f64>)
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..entropies.len()).collect();
    order.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Groups samples that share the same bit pattern over the `k`
/// highest-entropy attributes. Cluster ids follow first occurrence.
pub fn clusters_from_attributes(attributes: &Array2<u8>, k: usize) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    if k > attributes.ncols() {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds {} attributes",
            attributes.ncols()
        )));
    }
    let selected = &rank_attributes(attributes)?[..k];
    let patterns: Vec<Vec<u8>> = attributes
        .outer_iter()
        .map(|row| selected.iter().map(|&c| row[c]).collect())
        .collect();
    ClusterAssignment::from_raw_first_seen(&patterns, Provenance::Attributes { k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let h = |v: Vec<u8>| attribute_entropy::<f64>(Array1::from(v).view()).unwrap();
        assert_eq!(h(vec![0, 0, 0, 0]), 0.0);
        assert!((h(vec![0, 1, 0, 1]) - 2f64.ln()).abs() < 1e-15);
        // -0.25 ln 0.25 - 0.75 ln 0.75
        assert!((h(vec![1, 0, 0, 0]) - 0.562_335_144_618_808_5).abs() < 1e-12);
        assert!(attribute_entropy::<f64>(Array1::<u8>::zeros(0).view()).is_err());
    }

    #[test]
    fn single_attribute() {
        let c = clusters_from_attributes(&array![[0u8], [0], [1]], 1).unwrap();
        assert_eq!(c.assignment(), [0, 0, 1]);
        assert_eq!(c.num_clusters(), 2);
    }

    #[test]
    fn distinct_rows_give_instance_partition() {
        let a = array![[0u8, 0], [0, 1], [1, 0], [1, 1]];
        let c = clusters_from_attributes(&a, 2).unwrap();
        assert_eq!(c.num_clusters(), 4);
    }

    #[test]
    fn bad_k() {
        let a = array![[0u8, 1]];
        assert!(matches!(clusters_from_attributes(&a, 0), Err(Error::Parameter(_))));
        assert!(matches!(clusters_from_attributes(&a, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn picks_top_entropy_columns() {
        // col0 p=1/2 (0.69), col1 constant (0.0), col2 p=1/4 (0.56)
        let a = array![[1u8, 1, 1], [0, 1, 0], [1, 1, 0], [0, 1, 0]];
        assert_eq!(rank_attributes(&a).unwrap(), vec![0, 2, 1]);
        let c = clusters_from_attributes(&a, 2).unwrap();
        // brute force: group rows by equality of (col0, col2)
        let keys: Vec<(u8, u8)> = a.outer_iter().map(|r| (r[0], r[2])).collect();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    keys[i] == keys[j],
                    c.assignment()[i] == c.assignment()[j],
                    "rows {i},{j}"
                );
            }
        }
        assert_eq!(c.assignment(), [0, 1, 2, 1]);
    }

    #[test]
    fn half_outranks_ninety_percent() {
        let mut a = Array2::<u8>::zeros((10, 2));
        for i in 0..9 {
            a[[i, 0]] = 1; // p = 0.9
        }
        for i in 0..5 {
            a[[i, 1]] = 1; // p = 0.5
        }
        assert_eq!(rank_attributes(&a).unwrap(), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn more_attributes_refine(bits in proptest::collection::vec(0u8..2, 6 * 5), k in 1usize..5) {
            let a = Array2::from_shape_vec((6, 5), bits).unwrap();
            let fine = clusters_from_attributes(&a, k + 1).unwrap();
            let coarse = clusters_from_attributes(&a, k).unwrap();
            prop_assert!(fine.refines(&coarse));
        }
    }
}
