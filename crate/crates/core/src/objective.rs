//! Clustering-based InfoNCE: positive pairs share a cluster, every other
//! `y` in the batch acts as a negative, and the critic is a cosine
//! similarity over a temperature.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub temperature: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { temperature: 0.1 }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `n` positively paired sample indices; `cluster_ids[i]` is the cluster
/// both `x_indices[i]` and `y_indices[i]` belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub x_indices: Vec<usize>,
    pub y_indices: Vec<usize>,
    pub cluster_ids: Vec<usize>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.x_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_indices.is_empty()
    }
}

/// Draws `n` pairs: a cluster with probability proportional to its size,
/// then `x` and `y` independently and uniformly inside it.
///
/// Picking `x` uniformly over all samples and taking its cluster is the same
/// law for `z`, so that is how the draw is made.
pub fn sample_pair_batch<R: Rng + ?Sized>(
    clusters: &ClusterAssignment,
    n: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "batch size {n}: at least one negative is needed"
        )));
    }
    let members = clusters.members();
    if let Some(z) = members.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("cluster {z} has no members")));
    }
    let total = clusters.num_samples();
    let mut batch = PairBatch {
        x_indices: Vec::with_capacity(n),
        y_indices: Vec::with_capacity(n),
        cluster_ids: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let x = rng.random_range(0..total);
        let z = clusters.assignment()[x];
        let group = &members[z];
        let y = group[rng.random_range(0..group.len())];
        batch.x_indices.push(x);
        batch.y_indices.push(y);
        batch.cluster_ids.push(z);
    }
    Ok(batch)
}

/// `scores[i, j] = <g(x_i), g(y_j)> / tau` for unit-norm projection rows.
pub fn critic_matrix<F: Scalar>(
    projections_x: &Array2<F>,
    projections_y: &Array2<F>,
    cfg: &CriticConfig,
) -> Result<Array2<F>> {
    cfg.validate()?;
    if projections_x.dim() != projections_y.dim() {
        return Err(Error::Shape(format!(
            "projection shapes differ: {:?} vs {:?}",
            projections_x.dim(),
            projections_y.dim()
        )));
    }
    let inv_tau = F::one() / F::of(cfg.temperature);
    Ok(projections_x.dot(&projections_y.t()) * inv_tau)
}

fn check_scores<F: Scalar>(scores: &Array2<F>) -> Result<()> {
    let (r, c) = scores.dim();
    if r != c {
        return Err(Error::Shape(format!("score matrix is {r}x{c}, not square")));
    }
    if r < 2 {
        return Err(Error::Parameter(format!("batch size {r}: at least 2 needed")));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    Ok(())
}

/// Row-wise log-sum-exp with max subtraction.
fn row_logsumexp<F: Scalar>(scores: &Array2<F>) -> Array1<F> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let m = row.iter().copied().fold(F::neg_infinity(), F::max);
            m + row.iter().fold(F::zero(), |a, &v| a + (v - m).exp()).ln()
        })
        .collect()
}

/// `-(1/n) sum_i [ s_ii - log((1/n) sum_j exp s_ij) ]`.
pub fn cl_infonce_loss<F: Scalar>(scores: &Array2<F>) -> Result<F> {
    check_scores(scores)?;
    let n = F::of(scores.nrows() as f64);
    let lse = row_logsumexp(scores);
    let total = lse
        .iter()
        .enumerate()
        .fold(F::zero(), |acc, (i, &l)| acc + scores[[i, i]] - (l - n.ln()));
    Ok(-total / n)
}

/// `d loss / d s_ij = (softmax_i(j) - [i == j]) / n`.
pub fn cl_infonce_grad<F: Scalar>(scores: &Array2<F>) -> Result<Array2<F>> {
    check_scores(scores)?;
    let n = scores.nrows();
    let inv_n = F::one() / F::of(n as f64);
    let lse = row_logsumexp(scores);
    let mut grad = scores.clone();
    for (i, mut row) in grad.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| (v - lse[i]).exp() * inv_n);
        row[i] -= inv_n;
    }
    Ok(grad)
}

/// Chains a score gradient back to both projection matrices.
pub fn critic_backward<F: Scalar>(
    projections_x: &Array2<F>,
    projections_y: &Array2<F>,
    grad_scores: &Array2<F>,
    cfg: &CriticConfig,
) -> Result<(Array2<F>, Array2<F>)> {
    cfg.validate()?;
    let n = projections_x.nrows();
    if grad_scores.dim() != (n, projections_y.nrows()) {
        return Err(Error::Shape("score gradient does not match projections".into()));
    }
    let inv_tau = F::one() / F::of(cfg.temperature);
    let gx = grad_scores.dot(projections_y) * inv_tau;
    let gy = grad_scores.t().dot(projections_x) * inv_tau;
    Ok((gx, gy))
}

/// `i,j,score` rows for debugging a batch.
pub fn batch_trace_csv<F: Scalar>(scores: &Array2<F>) -> String {
    let mut out = String::from("i,j,score\n");
    for ((i, j), v) in scores.indexed_iter() {
        out.push_str(&format!("{i},{j},{v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{clusters_from_labels, clusters_instance_id};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scores(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn equal_scores_zero_loss() {
        for c in [-4.0, 0.0, 2.5] {
            let s = Array2::<f64>::from_elem((5, 5), c);
            assert!(cl_infonce_loss(&s).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn two_sample_closed_form() {
        let (s, t) = (1.3f64, -0.4f64);
        let scores = array![[s, t], [t, s]];
        let expected = -(s - ((s.exp() + t.exp()) / 2.0).ln());
        assert!((cl_infonce_loss(&scores).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_evaluation() {
        let s = random_scores(4, 1);
        // direct evaluation of the ratio, no stabilization
        let mut acc = 0.0f64;
        for i in 0..4 {
            let denom: f64 = (0..4).map(|j| s[[i, j]].exp()).sum::<f64>() / 4.0;
            acc += (s[[i, i]].exp() / denom).ln();
        }
        let naive = -acc / 4.0;
        assert!((cl_infonce_loss(&s).unwrap() - naive).abs() < 1e-10);
    }

    #[test]
    fn survives_small_temperature_scale() {
        // scores of magnitude 1/0.07 * 50 would overflow a naive exp
        let s = random_scores(6, 2) * 300.0;
        assert!(cl_infonce_loss(&s).unwrap().is_finite());
        assert!(cl_infonce_grad(&s).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn uniform_gradient_values() {
        let g = cl_infonce_grad(&Array2::<f64>::from_elem((4, 4), 0.7f64)).unwrap();
        for ((i, j), &v) in g.indexed_iter() {
            let want = if i == j { -0.1875 } else { 0.0625 };
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = random_scores(5, 3);
        let g = cl_infonce_grad(&s).unwrap();
        let eps = 1e-6;
        for i in 0..5 {
            for j in 0..5 {
                let mut p = s.clone();
                p[[i, j]] += eps;
                let mut m = s.clone();
                m[[i, j]] -= eps;
                let fd = (cl_infonce_loss(&p).unwrap() - cl_infonce_loss(&m).unwrap()) / (2.0 * eps);
                let denom = g[[i, j]].abs().max(fd.abs()).max(1e-4);
                assert!((g[[i, j]] - fd).abs() / denom < 1e-6, "({i},{j}) {} vs {fd}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn critic_values() {
        let cfg = CriticConfig { temperature: 0.07 };
        let u = array![[0.6, 0.8]];
        let s: Array2<f64> = critic_matrix(&u, &u, &cfg).unwrap();
        assert!((s[[0, 0]] - 1.0 / 0.07).abs() < 1e-12);
        let s = critic_matrix(&array![[1.0, 0.0]], &array![[0.0, 1.0]], &cfg).unwrap();
        assert_eq!(s[[0, 0]], 0.0);
        let half = 3f64.sqrt() / 2.0;
        let s = critic_matrix(&array![[1.0, 0.0]], &array![[0.5, half]], &cfg).unwrap();
        assert!((s[[0, 0]] - 7.142857142857143).abs() < 1e-12);
        assert!(critic_matrix(&array![[1.0, 0.0]], &array![[1.0, 0.0, 0.0]], &cfg).is_err());
        assert!(critic_matrix(&u, &u, &CriticConfig { temperature: 0.0 }).is_err());
    }

    #[test]
    fn critic_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let cfg = CriticConfig { temperature: 0.5 };
        let loss = |x: &Array2<f64>, y: &Array2<f64>| cl_infonce_loss(&critic_matrix(x, y, &cfg).unwrap()).unwrap();
        let g = cl_infonce_grad(&critic_matrix(&x, &y, &cfg).unwrap()).unwrap();
        let (gx, gy) = critic_backward(&x, &y, &g, &cfg).unwrap();
        let eps = 1e-6;
        for idx in [(0, 0), (1, 1), (2, 0)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&xp, &y) - loss(&xm, &y)) / (2.0 * eps);
            assert!((fd - gx[idx]).abs() < 1e-7);
            let mut yp = y.clone();
            yp[idx] += eps;
            let mut ym = y.clone();
            ym[idx] -= eps;
            let fd = (loss(&x, &yp) - loss(&x, &ym)) / (2.0 * eps);
            assert!((fd - gy[idx]).abs() < 1e-7);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(cl_infonce_loss(&array![[1.0]]), Err(Error::Parameter(_))));
        assert!(matches!(
            cl_infonce_loss(&array![[1.0, f64::NAN], [0.0, 0.0]]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(cl_infonce_grad(&Array2::<f64>::zeros((2, 3))), Err(Error::Shape(_))));
    }

    #[test]
    fn instance_clusters_pair_with_self() {
        let c = clusters_instance_id(10).unwrap();
        let b = sample_pair_batch(&c, 32, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.x_indices, b.y_indices);
    }

    #[test]
    fn single_cluster_draws_both_freely() {
        let c = clusters_from_labels(&[0; 6]).unwrap();
        let b = sample_pair_batch(&c, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(b.x_indices.iter().zip(&b.y_indices).any(|(x, y)| x != y));
        assert!(b.cluster_ids.iter().all(|&z| z == 0));
    }

    #[test]
    fn cluster_frequency_follows_size() {
        let c = clusters_from_labels(&[0, 0, 0, 1]).unwrap();
        let n = 100_000;
        let b = sample_pair_batch(&c, n, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let freq = b.cluster_ids.iter().filter(|&&z| z == 0).count() as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn label_clusters_pair_same_label() {
        let labels = [0, 1, 2, 0, 1, 2, 2, 1];
        let c = clusters_from_labels(&labels).unwrap();
        let b = sample_pair_batch(&c, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for i in 0..b.len() {
            assert_eq!(labels[b.x_indices[i]], labels[b.y_indices[i]]);
            assert_eq!(c.assignment()[b.x_indices[i]], b.cluster_ids[i]);
        }
    }

    #[test]
    fn sampler_errors() {
        let c = clusters_from_labels(&[0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_pair_batch(&c, 1, &mut rng), Err(Error::Parameter(_))));
        let gap = ClusterAssignment::new(vec![0, 0, 2], 3, crate::cluster::Provenance::Labels).unwrap();
        assert!(matches!(sample_pair_batch(&gap, 4, &mut rng), Err(Error::Data(_))));
    }

    #[test]
    fn trace_format() {
        let t = batch_trace_csv(&array![[1.0, 2.0], [3.0, 4.5]]);
        assert_eq!(t, "i,j,score\n0,0,1\n0,1,2\n1,0,3\n1,1,4.5\n");
    }

    proptest! {
        #[test]
        fn shift_invariance(raw in proptest::collection::vec(-5.0f64..5.0, 16), c in -20.0f64..20.0) {
            let s = Array2::from_shape_vec((4, 4), raw).unwrap();
            let shifted = &s + c;
            prop_assert!((cl_infonce_loss(&s).unwrap() - cl_infonce_loss(&shifted).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn objective_at_most_log_n(raw in proptest::collection::vec(-30.0f64..30.0, 25)) {
            let s = Array2::from_shape_vec((5, 5), raw).unwrap();
            prop_assert!(-cl_infonce_loss(&s).unwrap() <= 5f64.ln() + 1e-9);
        }

        #[test]
        fn grad_rows_sum_to_zero(raw in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let s = Array2::from_shape_vec((3, 3), raw).unwrap();
            let g = cl_infonce_grad(&s).unwrap();
            for row in g.outer_iter() {
                prop_assert!(row.sum().abs() < 1e-15);
            }
        }

        #[test]
        fn permutation_equivariance(raw in proptest::collection::vec(-5.0f64..5.0, 16), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let s = Array2::from_shape_vec((4, 4), raw).unwrap();
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let p = Array2::from_shape_fn((4, 4), |(i, j)| s[[perm[i], perm[j]]]);
            prop_assert!((cl_infonce_loss(&s).unwrap() - cl_infonce_loss(&p).unwrap()).abs() < 1e-12);
        }
    }
}
