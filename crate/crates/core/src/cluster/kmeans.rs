//! Lloyd's k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClusterAssignment, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once an iteration lowers inertia by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-9,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<F> {
    pub centroids: Array2<F>,
    pub assignment: ClusterAssignment,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: F,
    pub iterations_run: usize,
    /// Inertia after the initial assignment and after every Lloyd iteration.
    pub inertia_history: Vec<F>,
}

fn sq_dist<F: Scalar>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> F {
    a.iter()
        .zip(b.iter())
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Nearest centroid per point (lowest index on ties), per-point squared
/// distance, and total inertia summed in point order.
fn assign<F: Scalar>(points: ArrayView2<'_, F>, centroids: &Array2<F>) -> (Vec<usize>, Vec<F>, F) {
    let mut labels = Vec::with_capacity(points.nrows());
    let mut dists = Vec::with_capacity(points.nrows());
    let mut inertia = F::zero();
    for p in points.outer_iter() {
        let mut best = 0;
        let mut best_d = F::infinity();
        for (c, centroid) in centroids.outer_iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        labels.push(best);
        dists.push(best_d);
        inertia += best_d;
    }
    (labels, dists, inertia)
}

fn plus_plus_init<F: Scalar>(points: ArrayView2<'_, F>, k: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])).to_f64_lossy())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.outer_iter().enumerate() {
            let d = sq_dist(p, points.row(next)).to_f64_lossy();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    points.select(ndarray::Axis(0), &chosen)
}

/// Runs k-means++ seeding followed by Lloyd iterations.
///
/// A cluster that loses all its points is reseeded at the point currently
/// farthest from its own centroid, so the centroid count stays at `k`.
pub fn kmeans<F: Scalar>(points: ArrayView2<'_, F>, params: &KMeansParams) -> Result<KMeansResult<F>> {
    let n = points.nrows();
    let k = params.k;
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("K = {k} for {n} points")));
    }
    if params.max_iters == 0 {
        return Err(Error::Parameter("max_iters must be at least 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("k-means input contains non-finite values".into()));
    }
    let dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let (mut labels, mut dists, mut inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let mut sums = Array2::<F>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (p, &c) in points.outer_iter().zip(&labels) {
            let mut row = sums.row_mut(c);
            row += &p;
            counts[c] += 1;
        }
        let mut taken = vec![false; n];
        let mut repaired = false;
        for c in 0..k {
            if counts[c] > 0 {
                let inv = F::one() / F::of(counts[c] as f64);
                centroids.row_mut(c).assign(&sums.row(c).mapv(|v| v * inv));
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= n leaves a free point");
                taken[far] = true;
                centroids.row_mut(c).assign(&points.row(far));
                repaired = true;
            }
        }
        let (next_labels, next_dists, next_inertia) = assign(points, &centroids);
        let decrease = inertia - next_inertia;
        let unchanged = next_labels == labels && !repaired;
        labels = next_labels;
        dists = next_dists;
        inertia = next_inertia;
        history.push(inertia);
        if unchanged || decrease.to_f64_lossy() < params.tol {
            break;
        }
    }

    let assignment = ClusterAssignment::new(labels, k, Provenance::Kmeans { k, epoch: 0 })?;
    Ok(KMeansResult {
        centroids,
        assignment,
        inertia,
        iterations_run: iterations,
        inertia_history: history,
    })
}
